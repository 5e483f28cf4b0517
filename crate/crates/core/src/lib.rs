pub mod error;
pub mod orthopoly;
pub mod index_sets;
pub mod linalg;
pub mod design;
pub mod random_field;
pub mod operator_fit;
pub mod uq_post;
pub mod pde_suite;
pub mod bench;
mod codec;

pub use error::{Error, Result};

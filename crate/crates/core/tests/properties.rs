//! Invariants checked over random inputs.

use nalgebra::DMatrix;
use proptest::prelude::*;

use pce_ol::bench::model_io::SavedModel;
use pce_ol::design::{assemble_phi, assemble_psi, BlockKind, DiffOpSpec, DomainMap};
use pce_ol::index_sets::{cardinality, hyperbolic_set, total_degree_set};
use pce_ol::operator_fit::{predict, CoefficientMatrix};
use pce_ol::pde_suite::ProblemId;
use pce_ol::uq_post::{predictive_covariance, predictive_mean, predictive_std, sobol_first_order};

fn binomial(n: usize, k: usize) -> usize {
    (1..=k).fold(1u128, |acc, i| acc * (n + 1 - i) as u128 / i as u128) as usize
}

fn matrix(rows: usize, cols: usize, seed: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| seed[(i * cols + j) % seed.len()] * (1.0 + ((i + 3 * j) % 5) as f64 * 0.1))
}

fn model(r: usize, p: usize, q: usize, vals: &[f64]) -> CoefficientMatrix {
    let set_a = total_degree_set(r, p).unwrap();
    let set_b = total_degree_set(1, q).unwrap();
    let values = matrix(set_b.len(), set_a.len(), vals);
    CoefficientMatrix::new(values, set_a, set_b, DomainMap::new(vec![0.0], vec![1.0]).unwrap()).unwrap()
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 1..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn total_degree_size_and_membership(dim in 1usize..6, p in 0usize..6) {
        let set = total_degree_set(dim, p).unwrap();
        prop_assert_eq!(set.len(), binomial(dim + p, p));
        prop_assert_eq!(cardinality(dim, p).unwrap(), set.len());
        prop_assert_eq!(set.get(0).iter().sum::<u32>(), 0);
        for t in set.iter() {
            prop_assert!(t.iter().sum::<u32>() as usize <= p);
        }
    }

    #[test]
    fn hyperbolic_set_is_a_subset(dim in 1usize..6, p in 1usize..6, q in 0.3f64..1.0) {
        let hyp = hyperbolic_set(dim, p, q).unwrap();
        let full = total_degree_set(dim, p).unwrap();
        prop_assert!(hyp.len() <= full.len());
        for t in hyp.iter() {
            prop_assert!(full.contains(t));
        }
        // All univariate terms up to p survive any q.
        for axis in 0..dim {
            let mut t = vec![0u32; dim];
            t[axis] = p as u32;
            prop_assert!(hyp.contains(&t));
        }
    }

    #[test]
    fn first_basis_function_is_constant(xi in prop::collection::vec(-4.0f64..4.0, 3..30), p in 0usize..4) {
        let n = xi.len() / 3;
        prop_assume!(n > 0);
        let x = DMatrix::from_row_slice(n, 3, &xi[..3 * n]);
        let psi = assemble_psi(&total_degree_set(3, p).unwrap(), &x).unwrap();
        for j in 0..n {
            prop_assert_eq!(psi[(0, j)], 1.0);
        }
        let pts = DMatrix::from_fn(n, 1, |i, _| (xi[i] + 4.0) / 8.0);
        let map = DomainMap::new(vec![0.0], vec![1.0]).unwrap();
        let phi = assemble_phi(&total_degree_set(1, p).unwrap(), &pts, &map, &DiffOpSpec::identity(1), None, BlockKind::Data)
            .unwrap()
            .realization(0);
        for i in 0..n {
            prop_assert_eq!(phi[(i, 0)], 1.0 / 2f64.sqrt());
        }
    }

    #[test]
    fn moments_are_consistent(vals in values(), p in 1usize..4) {
        let c = model(2, p, 3, &vals);
        let pts = DMatrix::from_column_slice(4, 1, &[0.0, 0.3, 0.7, 1.0]);
        let std = predictive_std(&c, &pts).unwrap();
        let cov = predictive_covariance(&c, &pts).unwrap();
        for i in 0..4 {
            prop_assert!(std[i] >= 0.0);
            prop_assert!((std[i] * std[i] - cov[(i, i)]).abs() <= 1e-12 * (1.0 + cov[(i, i)]));
        }
        prop_assert!((cov.clone() - cov.transpose()).amax() <= 1e-12 * (1.0 + cov.amax()));
        let sobol = sobol_first_order(&c, &pts).unwrap();
        for i in 0..4 {
            let row_sum: f64 = sobol.values.row(i).iter().sum();
            prop_assert!(row_sum <= 1.0 + 1e-12);
            prop_assert!(sobol.values.row(i).iter().all(|&s| (0.0..=1.0 + 1e-12).contains(&s)));
        }
    }

    #[test]
    fn predict_is_linear_in_coefficients(a in values(), b in values(), alpha in -3.0f64..3.0) {
        let ca = model(2, 2, 3, &a);
        let cb = model(2, 2, 3, &b);
        let combined = CoefficientMatrix::new(
            &ca.values + &cb.values * alpha,
            ca.set_a.clone(),
            ca.set_b.clone(),
            ca.domain_map.clone(),
        )
        .unwrap();
        let pts = DMatrix::from_column_slice(3, 1, &[0.1, 0.5, 0.9]);
        let xi = DMatrix::from_row_slice(2, 2, &[0.3, -1.2, 2.0, 0.5]);
        let lhs = predict(&combined, &pts, &xi).unwrap();
        let rhs = predict(&ca, &pts, &xi).unwrap() + predict(&cb, &pts, &xi).unwrap() * alpha;
        prop_assert!((lhs - &rhs).amax() <= 1e-12 * (1.0 + rhs.amax()));
        let mean = predictive_mean(&combined, &pts).unwrap();
        let ma = predictive_mean(&ca, &pts).unwrap();
        let mb = predictive_mean(&cb, &pts).unwrap();
        for i in 0..3 {
            prop_assert!((mean[i] - ma[i] - alpha * mb[i]).abs() <= 1e-12 * (1.0 + mean[i].abs()));
        }
    }

    #[test]
    fn model_bytes_round_trip(vals in values(), p in 0usize..3) {
        let saved = SavedModel {
            problem: ProblemId::Antiderivative,
            mode: "pc2".into(),
            crate_version: env!("CARGO_PKG_VERSION").into(),
            coefficients: model(2, p, 4, &vals),
            kl: Vec::new(),
        };
        let bytes = saved.to_bytes();
        let back = SavedModel::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(back.coefficients.values, saved.coefficients.values);
    }
}

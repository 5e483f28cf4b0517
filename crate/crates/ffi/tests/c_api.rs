use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use nalgebra::DMatrix;
use pce_ol::bench::model_io::SavedModel;
use pce_ol::operator_fit::predict;
use pce_ol::uq_post::{predictive_mean, predictive_std};
use pce_ol_ffi::*;

const CONFIG: &str = r#"
problem = "antiderivative"
mode = "data_driven"

[basis]
p = 2

[data]
n_train = 40
n_test = 20

[uq]
enabled = false
"#;

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(pce_ol_last_error()) }.to_string_lossy().into_owned()
}

/// Fits the small config through the C API, saves the model and returns its path.
fn fitted(dir: &Path) -> std::path::PathBuf {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = dir.join("out");
    let mut handle = ptr::null_mut();
    let mut mse = f64::NAN;
    let s = unsafe { pce_ol_fit(cstr(&cfg).as_ptr(), cstr(&out).as_ptr(), &mut handle, &mut mse) };
    assert_eq!(s, PceOlStatus::Ok, "{}", last_error());
    assert!(mse >= 0.0 && mse < 1e-3, "mse {mse}");
    let path = dir.join("copy.pceol");
    assert_eq!(unsafe { pce_ol_model_save(handle, cstr(&path).as_ptr()) }, PceOlStatus::Ok);
    unsafe { pce_ol_model_free(handle) };
    assert!(out.join("model.pceol").exists());
    path
}

#[test]
fn load_predict_and_moments_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let path = fitted(dir.path());
    let reference = SavedModel::load(&path).unwrap();

    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { pce_ol_model_load(cstr(&path).as_ptr(), &mut handle) }, PceOlStatus::Ok);
    let (mut q, mut p, mut d, mut r) = (0usize, 0usize, 0usize, 0usize);
    assert_eq!(unsafe { pce_ol_model_dims(handle, &mut q, &mut p, &mut d, &mut r) }, PceOlStatus::Ok);
    assert_eq!((q, p, d, r), (11, 28, 1, 6));

    let points = [0.0, 0.25, 0.5, 1.0];
    let xi: Vec<f64> = (0..3 * r).map(|k| ((k * 7) % 5) as f64 * 0.4 - 0.8).collect();
    let mut out = vec![0.0; 4 * 3];
    let s = unsafe { pce_ol_model_predict(handle, points.as_ptr(), 4, xi.as_ptr(), 3, out.as_mut_ptr()) };
    assert_eq!(s, PceOlStatus::Ok);
    let expected = predict(
        &reference.coefficients,
        &DMatrix::from_row_slice(4, 1, &points),
        &DMatrix::from_row_slice(3, r, &xi),
    )
    .unwrap();
    for i in 0..4 {
        for j in 0..3 {
            assert_eq!(out[i * 3 + j], expected[(i, j)]);
        }
    }

    let pts = DMatrix::from_row_slice(4, 1, &points);
    let mut mean = [0.0; 4];
    let mut std = [0.0; 4];
    assert_eq!(unsafe { pce_ol_model_mean(handle, points.as_ptr(), 4, mean.as_mut_ptr()) }, PceOlStatus::Ok);
    assert_eq!(unsafe { pce_ol_model_std(handle, points.as_ptr(), 4, std.as_mut_ptr()) }, PceOlStatus::Ok);
    assert_eq!(mean.to_vec(), predictive_mean(&reference.coefficients, &pts).unwrap());
    assert_eq!(std.to_vec(), predictive_std(&reference.coefficients, &pts).unwrap());
    unsafe { pce_ol_model_free(handle) };
}

#[test]
fn errors_map_to_status_codes() {
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { pce_ol_model_load(ptr::null(), &mut handle) }, PceOlStatus::NullPointer);
    assert!(last_error().contains("path"));
    assert!(handle.is_null());

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.pceol");
    assert_eq!(unsafe { pce_ol_model_load(cstr(&missing).as_ptr(), &mut handle) }, PceOlStatus::Io);

    let path = fitted(dir.path());
    let mut bytes = std::fs::read(&path).unwrap();
    let at = bytes.len() - 100;
    bytes[at] ^= 0x10;
    let bad = dir.path().join("bad.pceol");
    std::fs::write(&bad, &bytes).unwrap();
    assert_eq!(unsafe { pce_ol_model_load(cstr(&bad).as_ptr(), &mut handle) }, PceOlStatus::Model);
    assert!(last_error().contains("checksum"), "{}", last_error());

    assert_eq!(unsafe { pce_ol_model_load(cstr(&path).as_ptr(), &mut handle) }, PceOlStatus::Ok);
    let outside = [1.5];
    let mut out = [0.0];
    assert_eq!(
        unsafe { pce_ol_model_mean(handle, outside.as_ptr(), 1, out.as_mut_ptr()) },
        PceOlStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { pce_ol_model_mean(handle, ptr::null(), 1, out.as_mut_ptr()) },
        PceOlStatus::NullPointer
    );
    assert_eq!(unsafe { pce_ol_model_mean(handle, ptr::null(), 0, ptr::null_mut()) }, PceOlStatus::Ok);
    assert_eq!(unsafe { pce_ol_model_dims(ptr::null(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) }, PceOlStatus::NullPointer);
    unsafe { pce_ol_model_free(handle) };
    unsafe { pce_ol_model_free(ptr::null_mut()) };

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "problem = \"nope\"\nmode = \"pc2\"\n").unwrap();
    let s = unsafe { pce_ol_fit(cstr(&cfg).as_ptr(), ptr::null(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(s, PceOlStatus::Config);
    assert!(last_error().contains("line 1"), "{}", last_error());
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(pce_ol_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/pce_ol.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "pce_ol_model_load",
        "pce_ol_model_save",
        "pce_ol_model_free",
        "pce_ol_model_dims",
        "pce_ol_model_predict",
        "pce_ol_model_mean",
        "pce_ol_model_std",
        "pce_ol_fit",
        "pce_ol_last_error",
        "typedef struct PceOlModel PceOlModel",
        "PCE_OL_STATUS_OK = 0",
    ] {
        assert!(text.contains(f), "header lacks {f}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"pce_ol.h\"\nint main(void) { PceOlModel *m = 0; return pce_ol_model_load(\"x\", &m) == PCE_OL_STATUS_OK; }\n",
    )
    .unwrap();
    for compiler in ["cc", "c++"] {
        let status = std::process::Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
            .arg(header.parent().unwrap())
            .args(if compiler == "c++" { vec!["-x", "c++"] } else { vec![] })
            .arg(&src)
            .status()
            .unwrap_or_else(|e| panic!("{compiler} not runnable: {e}"));
        assert!(status.success(), "{compiler} rejected the header");
    }
}

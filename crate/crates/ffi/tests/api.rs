use std::ffi::{CStr, CString};
use std::ptr;

use rht_ffi::*;

const NMODEL: &str = r#"{
  "servers": [{"id": 1, "mu": "1"}, {"id": 2, "mu": "1"}],
  "types": [{"servers": [1, 2], "p": "1/2"}, {"servers": [2], "p": "1/2"}],
  "lambda": "1/2"
}"#;

const SHARED_CHILD: &str = r#"{
  "servers": [{"id": 1, "mu": "1"}, {"id": 2, "mu": "1"}, {"id": 3, "mu": "1"}],
  "types": [{"servers": [1], "p": "1/3"}, {"servers": [1, 2], "p": "1/3"}, {"servers": [1, 3], "p": "1/3"}],
  "lambda": "1"
}"#;

struct Model(*mut RhtModel);

impl Model {
    fn parse(json: &str) -> Model {
        let text = CString::new(json).unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(unsafe { rht_model_from_json(text.as_ptr(), &mut m) }, RhtStatus::Ok);
        assert!(!m.is_null());
        Model(m)
    }
}

impl Drop for Model {
    fn drop(&mut self) {
        unsafe { rht_model_free(self.0) }
    }
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(rht_last_error()) }.to_str().unwrap().to_owned()
}

#[test]
fn criticality_of_the_n_model() {
    let m = Model::parse(NMODEL);
    let (mut lambda, mut k, mut types) = (0.0, 0usize, 0usize);
    unsafe {
        assert_eq!(rht_criticality(m.0, &mut lambda, &mut k), RhtStatus::Ok);
        assert_eq!(rht_model_num_types(m.0, &mut types), RhtStatus::Ok);
    }
    assert_eq!(lambda, 1.0);
    assert_eq!(k, 2);
    assert_eq!(types, 2);
}

#[test]
fn limit_law_round_trip() {
    let m = Model::parse(NMODEL);
    let mut law = ptr::null_mut();
    let (mut rows, mut cols, mut forest) = (0usize, 0usize, false);
    unsafe {
        assert_eq!(rht_limit_law(m.0, &mut law), RhtStatus::Ok);
        assert_eq!(rht_limit_law_shape(law, &mut rows, &mut cols), RhtStatus::Ok);
        assert_eq!(rht_limit_law_is_forest(law, &mut forest), RhtStatus::Ok);
    }
    assert_eq!((rows, cols), (2, 2));
    assert!(forest);

    let mut short = vec![0.0; 3];
    assert_eq!(unsafe { rht_limit_law_coefficients(law, short.as_mut_ptr(), 3) }, RhtStatus::BufferTooSmall);
    assert!(last_error().contains("need 4"));

    let mut buf = vec![0.0; 4];
    assert_eq!(unsafe { rht_limit_law_coefficients(law, buf.as_mut_ptr(), 4) }, RhtStatus::Ok);
    let sums: Vec<f64> = (0..2).map(|s| buf[s] + buf[2 + s]).collect();
    assert!((sums[0] - 0.5).abs() < 1e-15 && (sums[1] - 1.5).abs() < 1e-15, "{buf:?}");

    let mut exact = ptr::null();
    for r in 0..rows {
        for c in 0..cols {
            assert_eq!(unsafe { rht_limit_law_coefficient_exact(law, r, c, &mut exact) }, RhtStatus::Ok);
            let text = unsafe { CStr::from_ptr(exact) }.to_str().unwrap();
            let (n, d) = text.split_once('/').unwrap_or((text, "1"));
            let v = n.parse::<f64>().unwrap() / d.parse::<f64>().unwrap();
            assert!((v - buf[r * cols + c]).abs() < 1e-15);
        }
    }
    assert_eq!(unsafe { rht_limit_law_coefficient_exact(law, 2, 0, &mut exact) }, RhtStatus::Validation);
    unsafe { rht_limit_law_free(law) };
}

#[test]
fn transforms_and_moments() {
    let m = Model::parse(NMODEL);
    let mut v = 0.0;
    let ones = [1.0, 1.0];
    unsafe {
        assert_eq!(rht_pgf(m.0, 0, ones.as_ptr(), 2, &mut v), RhtStatus::Ok);
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(rht_pgf(m.0, 1, ones.as_ptr(), 2, &mut v), RhtStatus::Ok);
        assert!((v - 1.0).abs() < 1e-12);
        assert_eq!(rht_limiting_laplace(m.0, [0.0, 0.0].as_ptr(), 2, &mut v), RhtStatus::Ok);
        assert_eq!(v, 1.0);
        assert_eq!(rht_moment_total(m.0, 0, 1, &mut v), RhtStatus::Ok);
        assert!(v > 0.0);
        assert_eq!(rht_pgf(m.0, 7, ones.as_ptr(), 2, &mut v), RhtStatus::Validation);
        assert_eq!(rht_limiting_laplace(m.0, ones.as_ptr(), 1, &mut v), RhtStatus::Validation);
    }
}

#[test]
fn non_forest_laplace_uses_the_mixture() {
    let m = Model::parse(SHARED_CHILD);
    let mut law = ptr::null_mut();
    let mut forest = true;
    let mut buf = [0.0; 9];
    let mut rows = 0usize;
    let mut cols = 0usize;
    unsafe {
        assert_eq!(rht_limit_law(m.0, &mut law), RhtStatus::Ok);
        rht_limit_law_is_forest(law, &mut forest);
        rht_limit_law_shape(law, &mut rows, &mut cols);
        assert_eq!(rht_limit_law_coefficients(law, buf.as_mut_ptr(), buf.len()), RhtStatus::Ok);
        rht_limit_law_free(law);
    }
    assert!(!forest);
    let t = [0.3, 0.7, 1.1];
    let product: f64 = (0..rows)
        .map(|r| 1.0 / (1.0 + (0..cols).map(|c| t[c] * buf[r * cols + c]).sum::<f64>()))
        .product();
    let mut v = 0.0;
    assert_eq!(unsafe { rht_limiting_laplace(m.0, t.as_ptr(), 3, &mut v) }, RhtStatus::Ok);
    assert!(v > 0.0 && v < 1.0);
    assert!((v - product).abs() > 1e-6, "{v} {product}");
}

#[test]
fn simulation_is_seeded() {
    let m = Model::parse(NMODEL);
    let mut a = [0.0; 2];
    let mut b = [0.0; 2];
    unsafe {
        assert_eq!(rht_simulate_means(m.0, 0, 20_000, 9, a.as_mut_ptr(), 2), RhtStatus::Ok);
        assert_eq!(rht_simulate_means(m.0, 0, 20_000, 9, b.as_mut_ptr(), 2), RhtStatus::Ok);
        assert_eq!(rht_simulate_means(m.0, 0, 20_000, 9, b.as_mut_ptr(), 1), RhtStatus::BufferTooSmall);
    }
    assert_eq!(a, b);
}

#[test]
fn errors_are_reported() {
    let mut m = ptr::null_mut();
    let bad = CString::new("{\"servers\": []}").unwrap();
    unsafe {
        assert_eq!(rht_model_from_json(ptr::null(), &mut m), RhtStatus::NullPointer);
        assert_eq!(rht_model_from_json(bad.as_ptr(), &mut m), RhtStatus::Validation);
    }
    assert!(m.is_null());
    assert!(!last_error().is_empty());

    let unstable = Model::parse(&NMODEL.replace("\"1/2\"\n}", "\"3\"\n}"));
    let mut v = 0.0;
    assert_eq!(unsafe { rht_pgf(unstable.0, 0, [0.5, 0.5].as_ptr(), 2, &mut v) }, RhtStatus::Domain);
    assert_eq!(unsafe { rht_model_num_types(unstable.0, &mut 0usize) }, RhtStatus::Ok);
    assert_eq!(last_error(), "");

    let mut k = 0usize;
    assert_eq!(unsafe { rht_criticality(ptr::null(), &mut v, &mut k) }, RhtStatus::NullPointer);
    unsafe { rht_model_free(ptr::null_mut()) };
    assert!(!unsafe { CStr::from_ptr(rht_version()) }.to_str().unwrap().is_empty());
}

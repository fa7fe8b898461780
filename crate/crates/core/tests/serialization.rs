mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use psdfilter_core::serialization::Model;
use psdfilter_core::{Error, GaussianPsdModel, GeneralizedPsdModel, VariableGroups};
use rand::Rng;

fn awkward_psd() -> GaussianPsdModel {
    let mut r = rng(61);
    let m = random_model(&mut r, 4, groups(&[("u", 1), ("x", 2)]));
    // values with long decimal expansions and extreme exponents
    let anchors = m.anchors().map(|a| a / 3.0 + 1e-17);
    GaussianPsdModel::new(anchors, m.precision().map(|p| p * std::f64::consts::E), m.weights() * 1e-200, m.groups().clone())
        .unwrap()
        .with_log_scale(123.456_789_012_345_67)
}

fn awkward_generalized() -> GeneralizedPsdModel {
    let mut r = rng(62);
    let m = 3;
    let precisions: Vec<DMatrix<f64>> = (0..m)
        .map(|_| {
            let a = DMatrix::from_fn(2, 2, |_, _| r.random_range(-1.0..1.0) / 3.0);
            a.transpose() * a + DMatrix::identity(2, 2) * 0.1
        })
        .collect();
    let centers: Vec<DVector<f64>> = (0..m).map(|_| DVector::from_fn(2, |_, _| r.random_range(-1.0..1.0) / 7.0)).collect();
    let base = GeneralizedPsdModel::from_linear_square(&DVector::from_element(m, 1.0), &precisions, &centers, groups(&[("x", 1), ("y", 1)]))
        .unwrap();
    GeneralizedPsdModel::new(psd_weights(&mut r, m, 2) * 1e-150, base.entries().to_vec(), base.groups().clone()).unwrap()
}

#[test]
fn psd_round_trip_is_bit_exact() {
    let m = awkward_psd();
    let text = Model::Psd(m.clone()).to_json().unwrap();
    let back = Model::from_json(&text).unwrap().into_psd().unwrap();
    assert_eq!(back, m);
    for (a, b) in back.weights().iter().zip(m.weights().iter()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    assert_eq!(back.log_scale().to_bits(), m.log_scale().to_bits());
    assert_eq!(Model::Psd(back).to_json().unwrap(), text);
}

#[test]
fn generalized_round_trip_is_bit_exact() {
    let g = awkward_generalized();
    let text = Model::Generalized(g.clone()).to_json().unwrap();
    let back = Model::from_json(&text).unwrap().into_generalized().unwrap();
    assert_eq!(back, g);
    assert_eq!(Model::Generalized(back).to_json().unwrap(), text);
}

#[test]
fn regularized_flag_survives() {
    let singular = GeneralizedPsdModel::from_linear_square(
        &DVector::from_element(1, 1.0),
        &[DMatrix::zeros(1, 1)],
        &[DVector::zeros(1)],
        VariableGroups::single("x", 1),
    )
    .unwrap();
    assert!(singular.regularized());
    let back = Model::from_json(&Model::Generalized(singular).to_json().unwrap()).unwrap().into_generalized().unwrap();
    assert!(back.regularized());
}

#[test]
fn file_round_trip() {
    let path = std::env::temp_dir().join(format!("psd-model-{}.json", std::process::id()));
    let m = Model::Psd(awkward_psd());
    m.write(&path).unwrap();
    assert_eq!(Model::read(&path).unwrap(), m);
    std::fs::remove_file(&path).unwrap();
    assert!(matches!(Model::read(&path), Err(Error::Serialization(_))));
}

#[test]
fn rejects_malformed_files() {
    let psd = Model::Psd(awkward_psd()).to_json().unwrap();
    assert!(Model::from_json("not json").is_err());
    assert!(Model::from_json(&psd.replace("gaussian_psd", "something_else")).is_err());
    assert!(Model::Psd(awkward_psd()).into_generalized().is_err());
    assert!(Model::Generalized(awkward_generalized()).into_psd().is_err());

    let gen = Model::Generalized(awkward_generalized()).to_json().unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&gen).unwrap();
    value["entries"].as_array_mut().unwrap().pop();
    assert!(Model::from_json(&value.to_string()).is_err());

    let mut value: serde_json::Value = serde_json::from_str(&psd).unwrap();
    value["weights"][0] = serde_json::json!(-1.0);
    value["weights"][5] = serde_json::json!(-1.0);
    assert!(Model::from_json(&value.to_string()).is_err(), "indefinite weights must be rejected");
}

#[test]
fn non_finite_values_are_not_written() {
    let m = awkward_psd().with_log_scale(f64::INFINITY);
    assert!(matches!(Model::Psd(m).to_json(), Err(Error::Serialization(_))));
}

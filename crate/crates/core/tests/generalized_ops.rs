mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use psdfilter_core::generalized::{compress, filter_step, kalman_component, kalman_component_with_lambda, CompressConfig};
use psdfilter_core::{linalg, Component, ConditionalGaussianLinear, Domain, Error, GaussianPsdModel, GeneralizedPsdModel, VariableGroups};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn iso(center: &[f64], groups: VariableGroups) -> GeneralizedPsdModel {
    let d = center.len();
    GeneralizedPsdModel::new(
        DMatrix::from_element(1, 1, 1.0),
        vec![Component::new(0.0, DMatrix::identity(d, d), DVector::from_column_slice(center)).unwrap()],
        groups,
    )
    .unwrap()
}

fn random_precision(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let r = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let mut p = r.transpose() * r + DMatrix::identity(d, d) * 0.5;
    linalg::symmetrize(&mut p);
    p
}

/// Entries of `Σ α_j k_{P_j}(x, μ_j)` squared, with a random full-rank PSD weight matrix.
fn random_generalized(rng: &mut ChaCha8Rng, m: usize, groups: VariableGroups) -> GeneralizedPsdModel {
    let d = groups.dim();
    let precisions: Vec<_> = (0..m).map(|_| random_precision(rng, d)).collect();
    let centers: Vec<_> = (0..m).map(|_| DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))).collect();
    let alpha = DVector::from_element(m, 1.0);
    let base = GeneralizedPsdModel::from_linear_square(&alpha, &precisions, &centers, groups.clone()).unwrap();
    let weights = psd_weights(rng, m, m) + DMatrix::identity(m, m) * 0.1;
    GeneralizedPsdModel::new(weights, base.entries().to_vec(), groups).unwrap()
}

fn random_point(rng: &mut ChaCha8Rng, d: usize, r: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-r..r)).collect()
}

#[test]
fn evaluate_examples() {
    let m = iso(&[0.0, 0.0], VariableGroups::single("x", 2));
    assert_eq!(m.evaluate(&[0.0, 0.0]).unwrap(), 1.0);
    let zero = GeneralizedPsdModel::new(DMatrix::zeros(1, 1), m.entries().to_vec(), m.groups().clone()).unwrap();
    assert_eq!(zero.evaluate(&[0.3, -0.2]).unwrap(), 0.0);
    assert!(matches!(m.evaluate(&[0.0]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn embed_psd_matches_psd_evaluate() {
    let mut rng = rng(11);
    for order in [1, 3] {
        let psd = random_model(&mut rng, order, groups(&[("x", 1), ("y", 1)])).with_log_scale(0.7);
        let g = GeneralizedPsdModel::embed_psd(&psd);
        assert_eq!(g.order(), order);
        for _ in 0..100 {
            let x = random_point(&mut rng, 2, 2.0);
            let (a, b) = (g.evaluate(&x).unwrap(), psd.evaluate(&x).unwrap());
            assert!(rel_err(a, b) <= 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn embedded_gmm_is_the_mixture_with_unit_mass() {
    let means = DMatrix::from_column_slice(2, 1, &[-0.4, 0.9]);
    let eta = DVector::from_element(1, 0.5 / 0.3_f64.powi(2));
    let psd = GaussianPsdModel::from_gmm(&[0.3, 0.7], &means, &eta).unwrap();
    let g = GeneralizedPsdModel::embed_psd(&psd);
    assert!((g.integral().unwrap() - 1.0).abs() <= 1e-12);
    let normal = |x: f64, m: f64| (-(x - m).powi(2) / (2.0 * 0.09)).exp() / (2.0 * std::f64::consts::PI * 0.09).sqrt();
    for i in 0..50 {
        let x = -1.5 + 0.06 * i as f64;
        let mix = 0.3 * normal(x, -0.4) + 0.7 * normal(x, 0.9);
        assert!(rel_err(g.evaluate(&[x]).unwrap(), mix) <= 1e-10);
    }
}

#[test]
fn integral_examples() {
    let m = iso(&[0.4, -2.0], VariableGroups::single("x", 2));
    assert!(rel_err(m.integral().unwrap(), std::f64::consts::PI) <= 1e-14);
    let degenerate = GeneralizedPsdModel::new(
        DMatrix::from_element(1, 1, 1.0),
        vec![Component::new(0.0, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])), DVector::zeros(2)).unwrap()],
        VariableGroups::single("x", 2),
    )
    .unwrap();
    assert!(degenerate.integral().is_err());
}

#[test]
fn integral_matches_quadrature() {
    let mut rng = rng(12);
    for _ in 0..10 {
        let m = random_generalized(&mut rng, 2, groups(&[("x", 1), ("y", 1)]));
        // every entry precision is ⪰ I, so standard deviations are below 1 and centers lie in (-1, 1)
        let q = integrate2(|x, y| m.evaluate(&[x, y]).unwrap(), (-9.0, 9.0), (-9.0, 9.0), 1e-11);
        let z = m.integral().unwrap();
        assert!(rel_err(z, q) <= 1e-6, "{z} vs {q}");
    }
}

#[test]
fn partial_eval_separable_and_centered() {
    // P = diag(1, 2), center (0.5, 0.2)
    let comp = Component::new(
        0.3,
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])),
        DVector::from_vec(vec![0.5, 0.2]),
    )
    .unwrap();
    let m = GeneralizedPsdModel::new(DMatrix::from_element(1, 1, 1.0), vec![comp], groups(&[("x", 1), ("y", 1)])).unwrap();
    let at_center = m.partial_eval("y", &[0.2]).unwrap();
    assert_eq!(at_center.entry(0, 0).log_scale, 0.3);
    assert_eq!(at_center.entry(0, 0).precision[(0, 0)], 1.0);
    let h = m.partial_eval("y", &[-0.4]).unwrap();
    let e = h.entry(0, 0);
    assert!((e.log_scale - (0.3 - 2.0 * 0.36)).abs() <= 1e-15);
    assert_eq!(e.center[0], 0.5);
    assert!(!h.regularized());
}

#[test]
fn partial_eval_matches_joint() {
    let mut rng = rng(13);
    for _ in 0..5 {
        let m = random_generalized(&mut rng, 2, groups(&[("x", 1), ("y", 1)]));
        let y0 = rng.random_range(-1.0..1.0);
        let h = m.partial_eval("y", &[y0]).unwrap();
        assert_eq!(h.groups().names(), vec!["x"]);
        for _ in 0..100 {
            let x = rng.random_range(-1.5..1.5);
            let (a, b) = (h.evaluate(&[x]).unwrap(), m.evaluate(&[x, y0]).unwrap());
            assert!(rel_err(a, b) <= 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn marginalize_block_diagonal_keeps_block() {
    let comp = Component::new(
        0.0,
        DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0])),
        DVector::from_vec(vec![0.5, 0.2]),
    )
    .unwrap();
    let m = GeneralizedPsdModel::new(DMatrix::from_element(1, 1, 1.0), vec![comp], groups(&[("x", 1), ("y", 1)])).unwrap();
    let h = m.marginalize("y").unwrap();
    assert_eq!(h.entry(0, 0).precision[(0, 0)], 3.0);
    assert_eq!(h.entry(0, 0).center[0], 0.5);
}

#[test]
fn marginalize_matches_quadrature_and_fubini() {
    let mut rng = rng(14);
    for _ in 0..5 {
        let m = random_generalized(&mut rng, 2, groups(&[("x", 1), ("y", 1)]));
        let h = m.marginalize("y").unwrap();
        assert!(rel_err(h.integral().unwrap(), m.integral().unwrap()) <= 1e-10);
        for _ in 0..20 {
            let x = rng.random_range(-1.5..1.5);
            let q = integrate(|y| m.evaluate(&[x, y]).unwrap(), -10.0, 10.0, 1e-14);
            let v = h.evaluate(&[x]).unwrap();
            assert!(rel_err(v, q) <= 1e-7, "{v} vs {q}");
        }
    }
}

#[test]
fn marginalization_of_a_weighted_singular_block_errors() {
    let comp = Component::new(0.0, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0])), DVector::zeros(2)).unwrap();
    let m = GeneralizedPsdModel::new(DMatrix::from_element(1, 1, 1.0), vec![comp], groups(&[("x", 1), ("y", 1)])).unwrap();
    assert!(m.marginalize("y").is_err());
}

#[test]
fn product_with_constant_scales() {
    let mut rng = rng(15);
    let f = random_generalized(&mut rng, 2, groups(&[("x", 1), ("y", 1)]));
    let c = 2.5_f64;
    let constant = GeneralizedPsdModel::new(
        DMatrix::from_element(1, 1, 1.0),
        vec![Component::new(c.ln(), DMatrix::zeros(1, 1), DVector::zeros(1)).unwrap()],
        VariableGroups::single("y", 1),
    )
    .unwrap();
    let h = f.product(&constant).unwrap();
    assert_eq!(h.order(), 2);
    for _ in 0..50 {
        let x = random_point(&mut rng, 2, 1.5);
        assert!(rel_err(h.evaluate(&x).unwrap(), c * f.evaluate(&x).unwrap()) <= 1e-12);
    }
}

#[test]
fn product_of_isotropic_entries_is_arrowhead() {
    let f = iso(&[0.2, -0.1], groups(&[("x", 1), ("y", 1)]));
    let g = iso(&[0.5, 0.3], groups(&[("y", 1), ("z", 1)]));
    let h = f.product(&g).unwrap();
    assert_eq!(h.groups().names(), vec!["x", "y", "z"]);
    let p = &h.entry(0, 0).precision;
    let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0]);
    assert_eq!(p, &expected);
    let mut rng = rng(16);
    for _ in 0..100 {
        let x = random_point(&mut rng, 3, 1.5);
        let want = f.evaluate(&x[..2]).unwrap() * g.evaluate(&x[1..]).unwrap();
        assert!(rel_err(h.evaluate(&x).unwrap(), want) <= 1e-10);
    }
}

#[test]
fn product_matches_pointwise_and_keeps_psd_weights() {
    let mut rng = rng(17);
    for _ in 0..5 {
        let f = random_generalized(&mut rng, 2, groups(&[("x", 1), ("y", 1)]));
        let g = random_generalized(&mut rng, 2, groups(&[("y", 1), ("z", 1)]));
        let h = f.product(&g).unwrap();
        assert_eq!(h.order(), 4);
        assert!(linalg::min_eigenvalue(h.weights()) >= -1e-10 * h.weights().trace());
        for _ in 0..100 {
            let x = random_point(&mut rng, 3, 1.5);
            let want = f.evaluate(&x[..2]).unwrap() * g.evaluate(&x[1..]).unwrap();
            assert!(rel_err(h.evaluate(&x).unwrap(), want) <= 1e-10);
        }
    }
}

fn scalar_conditional(f: f64, b: f64, var: f64) -> ConditionalGaussianLinear {
    ConditionalGaussianLinear::new(
        DMatrix::from_element(1, 1, f),
        DVector::from_element(1, b),
        DMatrix::from_element(1, 1, var),
    )
    .unwrap()
}

#[test]
fn kalman_unit_ratio() {
    let p = scalar_conditional(1.0, 0.0, 1.0);
    for lambda in [1e-3, 0.1, 0.7] {
        let m = kalman_component_with_lambda(&p, lambda).unwrap();
        let ratio = p.density(&[1.0], &[1.0]) / m.evaluate(&[1.0, 1.0]).unwrap();
        assert!(rel_err(ratio, (2.0 * lambda).exp()) <= 1e-12);
        assert_eq!(m.entry(0, 0).log_scale, p.log_norm());
    }
}

#[test]
fn kalman_ratio_identity_random() {
    let mut rng = rng(18);
    for _ in 0..50 {
        let (dx, dy) = (rng.random_range(1..3), rng.random_range(1..3));
        let f = DMatrix::from_fn(dy, dx, |_, _| rng.random_range(-1.5..1.5));
        let b = DVector::from_fn(dy, |_, _| rng.random_range(-1.0..1.0));
        let s = random_precision(&mut rng, dy);
        let p = ConditionalGaussianLinear::new(f, b, s).unwrap();
        let lambda = rng.random_range(1e-3..0.5);
        let m = kalman_component_with_lambda(&p, lambda).unwrap();
        let u = random_point(&mut rng, dx + dy, 1.0);
        let ratio = p.density(&u[..dx], &u[dx..]) / m.evaluate(&u).unwrap();
        let norm2: f64 = u.iter().map(|v| v * v).sum();
        assert!(rel_err(ratio, (lambda * norm2).exp()) <= 1e-12, "{ratio}");
    }
}

#[test]
fn kalman_component_meets_sup_bound_on_disk() {
    let p = scalar_conditional(1.0, 0.0, 1.0);
    let (m, lambda) = kalman_component(&p, 2.0, 1e-3).unwrap();
    assert!(lambda > 0.0);
    let mut worst: f64 = 0.0;
    for i in 0..=400 {
        for j in 0..=400 {
            let (x, y) = (-2.0 + 0.01 * i as f64, -2.0 + 0.01 * j as f64);
            if x * x + y * y <= 4.0 {
                worst = worst.max((p.density(&[x], &[y]) - m.evaluate(&[x, y]).unwrap()).abs());
            }
        }
    }
    assert!(worst <= 1e-3, "{worst}");
    assert!(matches!(kalman_component(&p, 1e10, 1e-300), Err(Error::Unachievable(_))));
}

#[test]
fn filter_step_matches_kalman_update() {
    let (a, q, r) = (0.9, 0.3, 0.2);
    let (m0, p0) = (0.4, 0.5);
    let lambda = 1e-13;
    let prior = GeneralizedPsdModel::gaussian(&DVector::from_element(1, m0), &DMatrix::from_element(1, 1, p0)).unwrap();
    let trans = kalman_component_with_lambda(&scalar_conditional(a, 0.0, q), lambda)
        .unwrap()
        .rename_group("x", "u")
        .unwrap()
        .rename_group("y", "x")
        .unwrap();
    let obs = kalman_component_with_lambda(&scalar_conditional(1.0, 0.0, r), lambda).unwrap();
    let y = 0.7;
    let (post, z) = filter_step(&prior, &trans, &obs, &[y]).unwrap();
    let pp = a * a * p0 + q;
    let gain = pp / (pp + r);
    let mean = a * m0 + gain * (y - a * m0);
    let var = (1.0 - gain) * pp;
    let evidence = (-(y - a * m0).powi(2) / (2.0 * (pp + r))).exp() / (2.0 * std::f64::consts::PI * (pp + r)).sqrt();
    assert!(rel_err(post.mean().unwrap()[0], mean) <= 1e-6);
    assert!(rel_err(post.covariance().unwrap()[(0, 0)], var) <= 1e-6);
    assert!(rel_err(z, evidence) <= 1e-6);
    assert!(rel_err(post.integral().unwrap(), 1.0) <= 1e-12);
}

#[test]
fn filter_step_with_flat_likelihood_is_the_prediction() {
    let mut rng = rng(19);
    let prior = random_generalized(&mut rng, 2, VariableGroups::single("x", 1));
    let q = random_generalized(&mut rng, 2, groups(&[("u", 1), ("x", 1)]));
    // likelihood independent of x
    let g = GeneralizedPsdModel::new(
        DMatrix::from_element(1, 1, 1.0),
        vec![Component::new(0.0, DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0])), DVector::zeros(2)).unwrap()],
        groups(&[("x", 1), ("y", 1)]),
    )
    .unwrap();
    let (post, _) = filter_step(&prior, &q, &g, &[0.3]).unwrap();
    let (pred, _) = prior.clone().rename_group("x", "u").unwrap().product(&q).unwrap().marginalize("u").unwrap().normalize().unwrap();
    for i in 0..40 {
        let x = -2.0 + 0.1 * i as f64;
        assert!(rel_err(post.evaluate(&[x]).unwrap(), pred.evaluate(&[x]).unwrap()) <= 1e-10);
    }
}

#[test]
fn filter_step_order_is_product_of_orders() {
    let mut rng = rng(20);
    let prior = random_generalized(&mut rng, 2, VariableGroups::single("x", 1));
    let q = random_generalized(&mut rng, 3, groups(&[("u", 1), ("x", 1)]));
    let g = random_generalized(&mut rng, 2, groups(&[("x", 1), ("y", 1)]));
    let (post, _) = filter_step(&prior, &q, &g, &[0.1]).unwrap();
    assert!(post.order() <= 12);
    assert_eq!(post.groups().names(), vec!["x"]);
    assert!(rel_err(post.integral().unwrap(), 1.0) <= 1e-12);
}

/// Largest pointwise gap on a 1001-point grid of `[lo, hi]`.
fn sup_distance(a: &GaussianPsdModel, b: &GaussianPsdModel, lo: f64, hi: f64) -> f64 {
    (0..=1000)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / 1000.0;
            (a.evaluate(&[x]).unwrap() - b.evaluate(&[x]).unwrap()).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn compress_embedded_order_two_model() {
    let domain = Domain::unit_cube(1);
    let psd = GaussianPsdModel::with_single_group(
        DMatrix::from_column_slice(2, 1, &[-0.3, 0.4]),
        DVector::from_element(1, 3.0),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]),
    )
    .unwrap();
    let (target, _) = psd.normalize(&domain).unwrap();
    let g = GeneralizedPsdModel::embed_psd(&psd);
    let out = compress(&g, &CompressConfig::new(40), &domain, 7).unwrap();
    assert_eq!(out.order(), 40);
    assert!((out.integral(&domain).unwrap() - 1.0).abs() <= 1e-8);
    let err = sup_distance(&out, &target, -1.0, 1.0);
    assert!(err <= 1e-3, "{err}");
    assert_eq!(out, compress(&g, &CompressConfig::new(40), &domain, 7).unwrap());
}

#[test]
fn compress_recovers_rank_one_model_at_its_anchors() {
    let domain = Domain::unit_cube(1);
    let anchors = DMatrix::from_column_slice(3, 1, &[-0.5, 0.1, 0.6]);
    let eta = DVector::from_element(1, 2.0);
    // positive weights keep the square root inside the span
    let w = DVector::from_vec(vec![0.5, 1.0, 0.3]);
    let psd = GaussianPsdModel::from_linear_square(&w, &anchors, &eta).unwrap();
    let (target, _) = psd.normalize(&domain).unwrap();
    let cfg = CompressConfig {
        precision: Some(eta),
        anchors: Some(anchors),
        samples_per_anchor: 20,
        ..CompressConfig::new(3)
    };
    let out = compress(&GeneralizedPsdModel::embed_psd(&psd), &cfg, &domain, 3).unwrap();
    assert_eq!(out.order(), 3);
    let err = sup_distance(&out, &target, -1.0, 1.0);
    assert!(err <= 1e-6, "{err}");
}

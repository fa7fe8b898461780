//! Independent oracles and random instance generators shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use psdfilter_core::{GaussianPsdModel, VariableGroups};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const XK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XK[j];
        let s = f(c - dx) + f(c + dx);
        k += WK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let (k, err) = gk15(f, a, b);
    if depth == 0 || err <= tol.max(1e-15 * k.abs()).max(1e-300) {
        return k;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss–Kronrod quadrature on `[a, b]` with absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    adapt(&f, a, b, tol, 40)
}

/// Nested adaptive quadrature over a rectangle.
pub fn integrate2<F: Fn(f64, f64) -> f64>(f: F, (a, b): (f64, f64), (c, d): (f64, f64), tol: f64) -> f64 {
    integrate(|x| integrate(|y| f(x, y), c, d, tol * 0.1), a, b, tol)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random PSD weights `B Bᵀ` of order `m` and rank `r`.
pub fn psd_weights(rng: &mut ChaCha8Rng, m: usize, r: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(m, r, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose()
}

/// Random model with anchors in `(-1, 1)^d` and precisions in `[0.5, 4]`.
pub fn random_model(rng: &mut ChaCha8Rng, m: usize, groups: VariableGroups) -> GaussianPsdModel {
    let d = groups.dim();
    let anchors = DMatrix::from_fn(m, d, |_, _| rng.random_range(-1.0..1.0));
    let precision = DVector::from_fn(d, |_, _| rng.random_range(0.5..4.0));
    let weights = psd_weights(rng, m, m.min(2).max(1));
    GaussianPsdModel::new(anchors, precision, weights, groups).unwrap()
}

pub fn groups(spec: &[(&str, usize)]) -> VariableGroups {
    VariableGroups::new(spec.iter().map(|&(n, d)| (n, d))).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Relative error with an absolute floor `scale`, for values that may vanish.
pub fn scaled_err(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / b.abs().max(scale)
}

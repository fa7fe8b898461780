use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, PsdFactor};
use crate::scenarios::LinearGaussian;

use super::trace::{FilterTrace, Method, Posterior};

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl KalmanState {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.shape() != (mean.len(), mean.len()) {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: covariance.nrows(),
            });
        }
        PsdFactor::strict(&covariance, "Kalman covariance")?;
        Ok(KalmanState { mean, covariance })
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let d = self.mean.len() as f64;
        let r = DVector::from_column_slice(x) - &self.mean;
        let f = PsdFactor::new(&self.covariance);
        (-0.5 * r.dot(&f.solve_vec(&r)) - 0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * f.logdet).exp()
    }
}

/// Predict and update for one observation; returns the posterior and the predictive density of `y`.
pub fn kalman_step(state: &KalmanState, model: &LinearGaussian, y: &[f64]) -> Result<(KalmanState, f64)> {
    let m = &model.f * &state.mean + &model.b;
    let mut p = &model.f * &state.covariance * model.f.transpose() + &model.q;
    linalg::symmetrize(&mut p);
    let innovation = DVector::from_column_slice(y) - (&model.h * &m + &model.c);
    let mut s = &model.h * &p * model.h.transpose() + &model.r;
    linalg::symmetrize(&mut s);
    let sf = PsdFactor::strict(&s, "innovation covariance")?;
    let gain = sf.solve_mat(&(&model.h * &p)).transpose();
    let mean = &m + &gain * &innovation;
    // Joseph form keeps the covariance symmetric positive definite
    let n = m.len();
    let ikh = DMatrix::identity(n, n) - &gain * &model.h;
    let mut cov = &ikh * &p * ikh.transpose() + &gain * &model.r * gain.transpose();
    linalg::symmetrize(&mut cov);
    let dy = y.len() as f64;
    let log_z = -0.5 * innovation.dot(&sf.solve_vec(&innovation))
        - 0.5 * dy * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * sf.logdet;
    Ok((KalmanState { mean, covariance: cov }, log_z.exp()))
}

pub fn kalman_filter_run(model: &LinearGaussian, observations: &[Vec<f64>]) -> Result<FilterTrace> {
    let mut state = KalmanState::new(model.m0.clone(), model.p0.clone())?;
    let mut trace = FilterTrace::new(Method::Kalman, Posterior::Kalman(state.clone()));
    for (k, y) in observations.iter().enumerate() {
        let start = Instant::now();
        let (next, z) = kalman_step(&state, model, y).map_err(|e| e.at_step(k + 1))?;
        let wall = start.elapsed().as_nanos() as u64;
        state = next;
        trace.push(Posterior::Kalman(state.clone()), z.ln(), wall);
    }
    Ok(trace)
}

use std::time::Instant;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::psd::GaussianPsdModel;

use super::trace::{FilterTrace, Method, Posterior};

/// One step of the PSD filter.
///
/// `q` is the learned transition over groups `"u"` (previous state) and `"x"`, `g` the learned
/// observation kernel over `"x"` and `"y"`. Returns the normalized posterior over `"x"` and the
/// evidence `Z`; the posterior has order `order(q) · order(g)`.
pub fn psd_filter_step(
    prior: &GaussianPsdModel,
    q: &GaussianPsdModel,
    g: &GaussianPsdModel,
    y: &[f64],
    domain: &Domain,
) -> Result<(GaussianPsdModel, f64)> {
    let predicted = q.markov_step("u", prior, domain)?;
    let likelihood = g.partial_eval("y", y)?;
    let joint = predicted.product(&likelihood)?;
    let z = joint.integral(domain)?;
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::ZeroEvidence {
            step: 0,
            observation: y.to_vec(),
        });
    }
    joint.normalize(domain)
}

/// Iterates `psd_filter_step` over the observations; entry 0 of the trace is `prior`.
pub fn psd_filter_run(
    prior: &GaussianPsdModel,
    q: &GaussianPsdModel,
    g: &GaussianPsdModel,
    observations: &[Vec<f64>],
    domain: &Domain,
) -> Result<FilterTrace> {
    let mut trace = FilterTrace::new(Method::Psd, Posterior::Psd(prior.clone()));
    let mut current = prior.clone();
    for (k, y) in observations.iter().enumerate() {
        let start = Instant::now();
        let (next, z) = psd_filter_step(&current, q, g, y, domain).map_err(|e| e.at_step(k + 1))?;
        let wall = start.elapsed().as_nanos() as u64;
        current = next;
        trace.push(Posterior::Psd(current.clone()), z.ln(), wall);
    }
    Ok(trace)
}

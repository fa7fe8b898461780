use std::time::Instant;

use crate::domain::Domain;
use crate::error::Result;
use crate::generalized::{compress, filter_step, CompressConfig, GeneralizedPsdModel};

use super::trace::{FilterTrace, Method, Posterior};

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedFilterConfig {
    /// Posteriors whose order exceeds `compress.target_order` are re-learned at that order.
    pub compress: CompressConfig,
    /// Box used for compression; whole-space runs that never compress may pass `Domain::Whole`.
    pub domain: Domain,
    pub seed: u64,
}

/// Filter for generalized models. `q` has groups `"u"`, `"x"`; `g` has groups `"x"`, `"y"`.
pub fn generalized_filter_run(
    prior: &GeneralizedPsdModel,
    q: &GeneralizedPsdModel,
    g: &GeneralizedPsdModel,
    observations: &[Vec<f64>],
    cfg: &GeneralizedFilterConfig,
) -> Result<FilterTrace> {
    let mut trace = FilterTrace::new(Method::Generalized, Posterior::Generalized(prior.clone()));
    let mut current = prior.clone();
    for (k, y) in observations.iter().enumerate() {
        let step = k + 1;
        let start = Instant::now();
        let (mut next, z) = filter_step(&current, q, g, y).map_err(|e| e.at_step(step))?;
        if next.order() > cfg.compress.target_order {
            let seed = cfg.seed.wrapping_add(step as u64);
            let compact = compress(&next, &cfg.compress, &cfg.domain, seed).map_err(|e| e.at_step(step))?;
            // the compressed fit is normalized on the box; the filter itself works on all of space
            next = GeneralizedPsdModel::embed_psd(&compact).normalize().map_err(|e| e.at_step(step))?.0;
        }
        let wall = start.elapsed().as_nanos() as u64;
        current = next;
        trace.push(Posterior::Generalized(current.clone()), z.ln(), wall);
    }
    Ok(trace)
}

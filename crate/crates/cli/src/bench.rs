//! Accuracy against cost. Timings vary between runs, so `bench.csv` is not byte-reproducible.

use psdfilter_core::Method;

use crate::config::Experiment;
use crate::error::CliError;
use crate::filter::{trajectory, FilterContext};
use crate::output::{opt, write_atomic};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub label: String,
    pub seed: u64,
    pub size: usize,
    pub median_step_ns: u64,
    pub max_tv: Option<f64>,
}

/// Upper bound on the matched cloud size; every step of a trace keeps its cloud in memory.
pub const MAX_MATCHED_PARTICLES: usize = 200_000;

fn median(mut v: Vec<u64>) -> u64 {
    v.sort_unstable();
    v[v.len() / 2]
}

/// Median per-step wall time of `repeats` runs, with the worst TV to the oracle.
fn measure(ctx: &FilterContext<'_>, method: Method, seed: u64, obs: &[Vec<f64>], oracle: Option<&psdfilter_core::FilterTrace>, particles: Option<usize>) -> Result<(usize, u64, Option<f64>), CliError> {
    let steps = obs.len().max(1) as u64;
    let mut times = Vec::new();
    let mut last = None;
    for _ in 0..ctx.exp.config.bench.repeats {
        let trace = ctx.run_method(method, seed, obs, particles)?;
        times.push(trace.steps.iter().map(|s| s.wall_ns).sum::<u64>() / steps);
        last = Some(trace);
    }
    let trace = last.expect("at least one repeat");
    let tv = ctx.tv_column(&trace, oracle)?;
    let max_tv = tv.iter().skip(1).flatten().copied().reduce(f64::max);
    Ok((trace.last().size(), median(times), max_tv))
}

/// Times each method on the first seed. When both `psd` and `particle` are configured, adds a
/// `particle_matched` row whose cloud size is scaled to the PSD filter's per-step time, capped at
/// [`MAX_MATCHED_PARTICLES`].
pub fn cmd_bench(exp: &Experiment) -> Result<Vec<BenchRow>, CliError> {
    let ctx = FilterContext::new(exp)?;
    let seed = exp.config.seeds[0];
    let traj = trajectory(exp, seed)?;
    let obs = &traj.observations;
    let oracle = ctx.oracle(obs)?;
    let mut rows = Vec::new();
    for &method in &exp.methods {
        let (size, ns, tv) = measure(&ctx, method, seed, obs, oracle.as_ref(), None)?;
        rows.push(BenchRow { label: method.to_string(), seed, size, median_step_ns: ns, max_tv: tv });
    }
    let time_of = |label: &str| rows.iter().find(|r| r.label == label).map(|r| (r.size, r.median_step_ns));
    if let (Some((_, psd_ns)), Some((n, pf_ns))) = (time_of("psd"), time_of("particle")) {
        let matched = ((n as f64) * psd_ns as f64 / pf_ns.max(1) as f64).round().clamp(1.0, MAX_MATCHED_PARTICLES as f64) as usize;
        let (size, ns, tv) = measure(&ctx, Method::Particle, seed, obs, oracle.as_ref(), Some(matched))?;
        rows.push(BenchRow { label: "particle_matched".into(), seed, size, median_step_ns: ns, max_tv: tv });
    }
    let mut csv = exp.hash_line();
    csv.push_str("method,seed,order_or_N,median_step_ns,max_tv\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{},{}\n", r.label, r.seed, r.size, r.median_step_ns, opt(r.max_tv)));
    }
    write_atomic(&exp.out_dir().join("bench.csv"), &csv)?;
    Ok(rows)
}

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use nalgebra::DVector;
use psdfilter_core::filtering::{particle_filter_run, psd_filter_step};
use psdfilter_core::learning::learn_rank_one;
use psdfilter_core::scenarios::scenario;
use psdfilter_core::{Domain, GaussianPsdModel, LearnConfig, VariableGroups};

fn config(m: usize, seed: u64) -> LearnConfig {
    LearnConfig {
        n: 8 * m,
        m,
        precision: DVector::from_element(2, 4.0),
        regularization: 1e-8,
        domain: Domain::unit_cube(2),
        seed,
    }
}

fn kernels(m: usize) -> (GaussianPsdModel, GaussianPsdModel) {
    let s = scenario("ar1").unwrap();
    let fit = |k: &psdfilter_core::DensityKernel, a: &str, b: &str, seed| {
        learn_rank_one(&|z: &[f64]| k.density(&z[..1], &z[1..]), &config(m, seed))
            .unwrap()
            .with_groups(VariableGroups::new([(a, 1), (b, 1)]).unwrap())
            .unwrap()
    };
    (fit(&s.hmm.transition, "u", "x", 1), fit(&s.hmm.observation, "x", "y", 2))
}

fn learning(c: &mut Criterion) {
    let s = scenario("ar1").unwrap();
    let mut group = c.benchmark_group("learn_rank_one");
    for m in [8, 16, 32] {
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, &m| {
            b.iter(|| learn_rank_one(&|z: &[f64]| s.hmm.transition.density(&z[..1], &z[1..]), &config(m, 0)).unwrap())
        });
    }
    group.finish();
}

fn psd_step(c: &mut Criterion) {
    let unit = Domain::unit_cube(1);
    let mut group = c.benchmark_group("psd_filter_step");
    group.sample_size(20);
    for m in [4, 8, 12] {
        let (q, g) = kernels(m);
        let prior = GaussianPsdModel::uniform(&unit, "x").unwrap();
        let (posterior, _) = psd_filter_step(&prior, &q, &g, &[0.1], &unit).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(m * m), &posterior, |b, p| {
            b.iter(|| psd_filter_step(p, &q, &g, &[0.1], &unit).unwrap())
        });
    }
    group.finish();
}

fn markov_step(c: &mut Criterion) {
    let unit = Domain::unit_cube(1);
    let (q, g) = kernels(8);
    let prior = GaussianPsdModel::uniform(&unit, "x").unwrap();
    let (posterior, _) = psd_filter_step(&prior, &q, &g, &[0.1], &unit).unwrap();
    let posterior = posterior.rename_group("x", "u").unwrap();
    c.bench_function("markov_step/64x64", |b| b.iter(|| q.markov_step("u", &posterior, &unit).unwrap()));
}

fn particles(c: &mut Criterion) {
    let s = scenario("ar1").unwrap();
    let obs = s.hmm.simulate(10, 0).unwrap().observations;
    let mut group = c.benchmark_group("particle_filter_10_steps");
    group.sample_size(10);
    for n in [1000, 10_000] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter_batched(|| obs.clone(), |o| particle_filter_run(&s.hmm, n, &o, 0).unwrap(), BatchSize::SmallInput)
        });
    }
    group.finish();
}

criterion_group!(benches, learning, psd_step, markov_step, particles);
criterion_main!(benches);

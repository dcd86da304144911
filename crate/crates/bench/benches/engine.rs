use criterion::{black_box, criterion_group, criterion_main, Criterion};
use pointcause::estimate::{estimate_from_outcomes, outcome_series};
use pointcause::propensity::fit;
use pointcause::simstudy::{Dgp, OracleContext};
use pointcause::smooth::{bandwidth_rule, smoothed_region_integral};
use pointcause::{
    DgpSpec, EstimatorKind, EstimatorSettings, Intervention, InterventionSequence, KernelSpec, LogLinearIntensity,
    OutcomeMode, PoissonProcess, QuadratureGrid, Region, SeedTree, Surface, WeightSeries, Window,
};

fn spec(periods: usize) -> DgpSpec {
    let mut s = DgpSpec::default_spec();
    s.periods = periods;
    s
}

fn processes(c: &mut Criterion) {
    let w = Window::unit_square();
    let grid = QuadratureGrid::default_for(w);
    let f = LogLinearIntensity::new(2.0, vec![1.5], vec![Surface::affine(1.0, -1.0, 0.0)]).unwrap();
    let proc = PoissonProcess::new(f, &grid).unwrap();
    let mut rng = SeedTree::new(1).stream();
    c.bench_function("sample log-linear process", |b| b.iter(|| proc.sample(1, &mut rng).unwrap()));
    let pattern = proc.sample(1, &mut SeedTree::new(2).stream()).unwrap();
    c.bench_function("log density", |b| b.iter(|| proc.log_density(black_box(&pattern), &grid).unwrap()));
    let kernel = KernelSpec::isotropic(0.16).unwrap();
    let region = Region::rect(w, 0.0, 0.0, 0.5, 0.5).unwrap();
    c.bench_function("smoothed region integral", |b| {
        b.iter(|| smoothed_region_integral(black_box(&pattern), &kernel, &region))
    });
}

fn simulation(c: &mut Criterion) {
    let dgp = Dgp::new(spec(200)).unwrap();
    let mut group = c.benchmark_group("design");
    group.sample_size(10);
    group.bench_function("generate T = 200", |b| b.iter(|| dgp.generate(3).unwrap()));
    let series = dgp.generate(3).unwrap();
    let burn = dgp.spec().burn_in;
    let design = dgp.treatment_design(&series, burn..series.len()).unwrap();
    group.bench_function("fit treatment model T = 200", |b| b.iter(|| fit(&design, None).unwrap()));

    let lp = dgp.true_log_propensity(&series);
    let treatments = series.treatments();
    let outcomes = series.outcomes();
    let seq = InterventionSequence::iid(Intervention::homogeneous(5.0, *dgp.window()).unwrap(), 3).unwrap();
    let region = Region::whole(*dgp.window());
    let settings = EstimatorSettings {
        kernel: KernelSpec::isotropic(bandwidth_rule(200)).unwrap(),
        mode: OutcomeMode::Smoothed,
        level: 0.95,
        t_total: None,
    };
    group.bench_function("Hajek estimate M = 3, T = 200", |b| {
        b.iter(|| {
            let ws = WeightSeries::compute(&seq, &treatments, &lp, burn).unwrap();
            let g = outcome_series(&outcomes, burn, ws.len(), &region, &settings).unwrap();
            estimate_from_outcomes("h5", EstimatorKind::Hajek, &ws, &g, &region, &settings).unwrap()
        })
    });
    let ctx = OracleContext::new(&dgp, &series);
    group.bench_function("truth oracle M = 3, 20 periods, 10 reps", |b| {
        b.iter(|| ctx.truth(&seq, std::slice::from_ref(&region), burn + 2..burn + 22, 10, 4).unwrap())
    });
    group.finish();
}

criterion_group!(benches, processes, simulation);
criterion_main!(benches);

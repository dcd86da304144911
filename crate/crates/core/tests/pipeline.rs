use pointcause::estimate::outcome_series;
use pointcause::simstudy::Dgp;
use pointcause::smooth::bandwidth_rule;
use pointcause::{
    effect_contrast, estimate_from_outcomes, fit, DgpSpec, EstimatorKind, EstimatorSettings, Intervention,
    InterventionSequence, KernelSpec, OutcomeMode, Region, WeightSeries,
};

fn short_spec() -> DgpSpec {
    let mut s = DgpSpec::default_spec();
    s.periods = 80;
    s
}

#[test]
fn spec_round_trips_through_toml() {
    let s = DgpSpec::default_spec();
    assert_eq!(DgpSpec::from_toml(&s.to_toml()).unwrap(), s);
}

#[test]
fn simulate_fit_estimate() {
    let dgp = Dgp::new(short_spec()).unwrap();
    let series = dgp.generate(17).unwrap();
    assert_eq!(series, dgp.generate(17).unwrap());
    let burn = dgp.spec().burn_in;

    let design = dgp.treatment_design(&series, burn..series.len()).unwrap();
    let model = fit(&design, None).unwrap();
    assert!(model.diagnostics.as_ref().unwrap().converged);
    assert_eq!(model.coefficients.len(), dgp.treatment_coefficients().len());

    let lp = dgp.true_log_propensity(&series);
    let treatments = series.treatments();
    let outcomes = series.outcomes();
    let window = *dgp.window();
    let region = Region::rect(window, 0.0, 0.0, 0.5, 0.5).unwrap();
    let settings = EstimatorSettings {
        kernel: KernelSpec::isotropic(bandwidth_rule(80)).unwrap(),
        mode: OutcomeMode::Smoothed,
        level: 0.95,
        t_total: None,
    };
    let mut results = Vec::new();
    for h in [3.0, 7.0] {
        let seq = InterventionSequence::iid(Intervention::homogeneous(h, window).unwrap(), 2).unwrap();
        let ws = WeightSeries::compute(&seq, &treatments, &lp, burn).unwrap();
        let g = outcome_series(&outcomes, burn, ws.len(), &region, &settings).unwrap();
        let r = estimate_from_outcomes(&format!("h{h}"), EstimatorKind::Hajek, &ws, &g, &region, &settings).unwrap();
        let lo = g.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo <= r.estimate && r.estimate <= hi);
        assert!(r.interval.lower <= r.estimate && r.estimate <= r.interval.upper);
        assert_eq!(r.contributions.len(), series.len() - burn);
        results.push(r);
    }
    let tau = effect_contrast(&results[0], &results[1]).unwrap();
    assert!((tau.estimate - (results[1].estimate - results[0].estimate)).abs() < 1e-12);
    let zero = effect_contrast(&results[0], &results[0]).unwrap();
    assert_eq!(zero.estimate, 0.0);
    assert_eq!(zero.variance_bound, 0.0);
}

use super::*;
use crate::geom::Region;
use crate::interventions::{Intervention, InterventionSequence};
use crate::propensity::{HistoryFrame, PropensityDesign};
use crate::rng::SeedTree;
use rand::Rng;

fn short(periods: usize) -> DgpSpec {
    let mut s = DgpSpec::default_spec();
    s.periods = periods;
    s
}

/// All slopes and lags zero: both laws are homogeneous.
fn decoupled(periods: usize) -> DgpSpec {
    let mut s = short(periods);
    s.treatment.covariates = [0.0; 4];
    s.treatment.lag_treatment = 0.0;
    s.treatment.lag_outcome = 0.0;
    s.outcome.covariates = [0.0; 4];
    s.outcome.lagged_x2 = 0.0;
    s.outcome.treatment = 0.0;
    s.outcome.lag_outcome = 0.0;
    s
}

fn csv_bytes(series: &SimulatedSeries) -> Vec<u8> {
    let mut out = Vec::new();
    series.write_csv(&mut out).unwrap();
    out
}

#[test]
fn same_seed_same_series() {
    let spec = short(40);
    let a = generate_series(&spec, 11).unwrap();
    let b = generate_series(&spec, 11).unwrap();
    assert_eq!(a, b);
    assert_eq!(csv_bytes(&a), csv_bytes(&b));
    let c = generate_series(&spec, 12).unwrap();
    assert_ne!(a, c);
}

#[test]
fn spec_round_trips_and_rejects_unknown_keys() {
    let spec = DgpSpec::default_spec();
    let back = DgpSpec::from_toml(&spec.to_toml()).unwrap();
    assert_eq!(spec, back);
    let text = spec.to_toml().replacen("periods = ", "perods = ", 1);
    assert!(DgpSpec::from_toml(&text).is_err());
    let mut bad = spec.clone();
    bad.outcome.treatment_lags = 0;
    assert!(Dgp::new(bad).is_err());
}

#[test]
fn fast_intensities_match_generic_surfaces() {
    let spec = short(30);
    let dgp = Dgp::new(spec.clone()).unwrap();
    let series = dgp.generate(3).unwrap();
    let mut rng = SeedTree::new(99).stream();
    for pos in [5usize, 17, 33] {
        let p = &series.periods[pos];
        let conf = Confounders::from(p);
        let w_prev = series.periods[pos - 1].treatment.points();
        let y_prev = series.periods[pos - 1].outcome.points();
        let recent: Vec<&[Point]> = (pos - 3..=pos).map(|k| series.periods[k].treatment.points()).collect();
        let lw = dgp.treatment_intensity(conf, w_prev, y_prev).unwrap();
        let ly = dgp.outcome_intensity(conf, &recent, y_prev).unwrap();
        for _ in 0..200 {
            let q = Point::new(rng.random(), rng.random());
            let a = dgp.treatment_log_intensity(q, conf, w_prev, y_prev);
            assert!((a - lw.log_value(q)).abs() < 1e-12, "treatment {a} vs {}", lw.log_value(q));
            let b = dgp.outcome_log_intensity(q, conf, &recent, y_prev);
            assert!((b - ly.log_value(q)).abs() < 1e-12, "outcome {b} vs {}", ly.log_value(q));
        }
    }
}

#[test]
fn thinning_bounds_dominate_on_a_fine_lattice() {
    let spec = short(20);
    let dgp = Dgp::new(spec).unwrap();
    let series = dgp.generate(8).unwrap();
    for pos in [1usize, 12, 25] {
        let p = &series.periods[pos];
        let conf = Confounders::from(p);
        let field = dgp.static_field(conf);
        let w_prev = series.periods[pos - 1].treatment.points();
        let y_prev = series.periods[pos - 1].outcome.points();
        let recent: Vec<&[Point]> = (pos.saturating_sub(3)..=pos).map(|k| series.periods[k].treatment.points()).collect();
        let n = 200;
        for i in 0..=n {
            for j in 0..=n {
                let q = Point::new(i as f64 / n as f64, j as f64 / n as f64);
                assert!(dgp.treatment_log_intensity(q, conf, w_prev, y_prev) <= field.treatment_log_bound);
                assert!(dgp.outcome_log_intensity(q, conf, &recent, y_prev) <= field.outcome_log_bound);
            }
        }
    }
}

#[test]
fn decoupled_treatment_counts_are_homogeneous() {
    let spec = decoupled(400);
    let rate = spec.treatment.intercept.exp() * spec.window.area();
    let series = generate_series(&spec, 21).unwrap();
    let (w, _) = series.mean_counts();
    let se = (rate / 400.0).sqrt();
    assert!((w - rate).abs() < 4.0 * se, "mean {w} vs {rate}");
}

#[test]
fn calibration_is_exact_when_decoupled() {
    let spec = decoupled(20);
    let targets = CalibrationTargets {
        treatment: 4.0,
        outcome: 9.0,
        ..Default::default()
    };
    let out = calibrate_intercepts(&spec, &targets, 1).unwrap();
    assert_eq!(out.treatment.intercept, (4.0f64).ln());
    assert_eq!(out.outcome.intercept, (9.0f64).ln());
    let doubled = CalibrationTargets {
        treatment: 8.0,
        ..targets
    };
    let out2 = calibrate_intercepts(&spec, &doubled, 1).unwrap();
    assert!((out2.treatment.intercept - out.treatment.intercept - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn confounder_intercepts_hit_their_target_mass() {
    let spec = decoupled(20);
    let out = calibrate_intercepts(&spec, &Default::default(), 1).unwrap();
    let dgp = Dgp::new(out.clone()).unwrap();
    let whole = Region::whole(out.window);
    for j in 0..2 {
        let c = &out.confounders;
        let mass =
            crate::surfaces::integrate(&|p| (c.intercepts[j] + c.slopes[j] * dgp.x1(p)).exp(), &whole, dgp.grid()).unwrap();
        assert!((mass - 10.0).abs() < 1e-9, "confounder {j}: {mass}");
    }
}

#[test]
fn calibration_rejects_bad_targets() {
    let spec = short(20);
    let t = CalibrationTargets {
        outcome: -1.0,
        ..Default::default()
    };
    assert!(matches!(calibrate_intercepts(&spec, &t, 1), Err(SimError::Calibration(_))));
}

#[test]
fn true_log_propensity_matches_design() {
    let spec = short(30);
    let dgp = Dgp::new(spec).unwrap();
    let series = dgp.generate(4).unwrap();
    let truth = dgp.true_log_propensity(&series);
    let design = dgp.treatment_design(&series, 1..series.len()).unwrap();
    let lp = design.log_densities(&dgp.treatment_coefficients());
    for (a, b) in truth[1..].iter().zip(&lp) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn fast_design_matches_generic_features() {
    let spec = short(12);
    let dgp = Dgp::new(spec).unwrap();
    let series = dgp.generate(5).unwrap();
    let covs: Vec<_> = series
        .periods
        .iter()
        .map(|p| dgp.covariate_surfaces(Confounders::from(p)).unwrap())
        .collect();
    let treatments = series.treatments();
    let frames = HistoryFrame::from_series(&treatments, &series.outcomes(), &covs, 1);
    let generic = PropensityDesign::build(&dgp.treatment_features(), &frames, &treatments, dgp.grid()).unwrap();
    let fast = dgp.treatment_design(&series, 1..series.len()).unwrap();
    assert_eq!(generic.periods().len(), fast.periods().len());
    for (g, f) in generic.periods().iter().zip(fast.periods()) {
        assert_eq!(g.period, f.period);
        for (a, b) in g.nodes.iter().zip(&f.nodes).chain(g.points.iter().zip(&f.points)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

fn homogeneous(h: f64, m: usize) -> InterventionSequence {
    InterventionSequence::iid(Intervention::homogeneous(h, Window::unit_square()).unwrap(), m).unwrap()
}

#[test]
fn truth_oracle_increases_with_treatment() {
    let spec = short(40);
    let series = generate_series(&spec, 6).unwrap();
    let whole = [Region::whole(spec.window)];
    let none = mc_truth_oracle(&series, &homogeneous(0.0, 3), &whole, 30, 1).unwrap();
    let five = mc_truth_oracle(&series, &homogeneous(5.0, 3), &whole, 30, 1).unwrap();
    let range = none.positions.clone();
    assert!(none.average(0, range.clone()) < five.average(0, range));
}

#[test]
fn truth_oracle_matches_observed_law_when_decoupled() {
    // the intervention equals the treatment law, so the oracle targets the
    // observed outcome process itself
    let spec = decoupled(300);
    let series = generate_series(&spec, 9).unwrap();
    let rate = spec.treatment.intercept.exp();
    let whole = [Region::whole(spec.window)];
    let oracle = mc_truth_oracle(&series, &homogeneous(rate, 1), &whole, 4, 2).unwrap();
    let range = oracle.positions.clone();
    let observed: Vec<f64> = series.periods[range.clone()].iter().map(|p| p.outcome.len() as f64).collect();
    let obs_mean = crate::numeric::mean(&observed);
    let obs_var = observed.iter().map(|c| (c - obs_mean).powi(2)).sum::<f64>() / (observed.len() - 1) as f64;
    let se = (obs_var / observed.len() as f64 + oracle.standard_error(0, range.clone()).powi(2)).sqrt();
    let est = oracle.average(0, range);
    assert!((est - obs_mean).abs() < 3.0 * se, "oracle {est} observed {obs_mean} se {se}");
}

#[test]
fn truth_oracle_is_deterministic() {
    let spec = short(25);
    let series = generate_series(&spec, 2).unwrap();
    let whole = [Region::whole(spec.window)];
    let a = mc_truth_oracle(&series, &homogeneous(4.0, 2), &whole, 3, 7).unwrap();
    let b = mc_truth_oracle(&series, &homogeneous(4.0, 2), &whole, 3, 7).unwrap();
    assert_eq!(a.mean, b.mean);
}

#[test]
fn variance_oracle_degenerate_case() {
    // no outcomes ever occur, and the intervention is the treatment law
    let mut spec = decoupled(30);
    spec.outcome.intercept = -40.0;
    let series = generate_series(&spec, 1).unwrap();
    let rate = spec.treatment.intercept.exp();
    let region = Region::whole(spec.window);
    let m = mc_variance_oracle(&series, &homogeneous(rate, 2), &region, Functional::Count, 5, 3).unwrap();
    assert_eq!(m.mean, 0.0);
    assert_eq!(m.v, 0.0);
    assert_eq!(m.v_star, 0.0);
}

#[test]
fn variance_oracle_identity_weights() {
    // weights are exactly one, so the estimator is the raw outcome count
    let spec = decoupled(60);
    let series = generate_series(&spec, 4).unwrap();
    let rate = spec.treatment.intercept.exp();
    let mu = spec.outcome.intercept.exp();
    let region = Region::whole(spec.window);
    let m = mc_variance_oracle(&series, &homogeneous(rate, 1), &region, Functional::Count, 40, 3).unwrap();
    // Poisson counts: mean mu, variance mu, second moment mu + mu²
    let n = (series.len() - spec.burn_in) as f64 * 40.0;
    assert!((m.mean - mu).abs() < 4.0 * (mu / n).sqrt(), "{} vs {mu}", m.mean);
    assert!((m.v / mu - 1.0).abs() < 0.1, "v {} vs {mu}", m.v);
    assert!(m.v_star >= m.v);
}

#[test]
fn variance_oracle_second_moment_dominates() {
    let spec = short(30);
    let dgp = Dgp::new(spec.clone()).unwrap();
    let series = dgp.generate(10).unwrap();
    let ctx = OracleContext::new(&dgp, &series);
    let regions: Vec<Region> = study_regions()
        .iter()
        .map(|r| Region::new(spec.window, &[*r]).unwrap())
        .collect();
    let seqs = [homogeneous(3.0, 3), homogeneous(7.0, 3)];
    let k = crate::smooth::KernelSpec::isotropic(0.1).unwrap();
    let o = ctx
        .variance(&seqs, &regions, &[Functional::Smoothed(k), Functional::Count], 12..40, 6, 5)
        .unwrap();
    for s in 0..2 {
        for r in 0..3 {
            for f in 0..2 {
                for (v, v_star) in o.per_period(s, r, f) {
                    assert!(v_star >= v && v >= 0.0);
                }
            }
        }
    }
}

#[test]
fn first_step_cache_matches_direct_density() {
    let spec = short(20);
    let dgp = Dgp::new(spec).unwrap();
    let series = dgp.generate(3).unwrap();
    let truth = dgp.true_log_propensity(&series);
    for pos in [1usize, 10, 29] {
        let p = &series.periods[pos];
        let conf = Confounders::from(p);
        let field = dgp.static_field(conf);
        let w_prev = series.periods[pos - 1].treatment.points();
        let y_prev = series.periods[pos - 1].outcome.points();
        let integral = dgp.treatment_integral(&field, w_prev, y_prev);
        let lp = dgp.treatment_log_density_given(integral, conf, p.treatment.points(), w_prev, y_prev);
        assert_eq!(lp, truth[pos]);
    }
}

#[test]
fn tiny_coverage_run_is_reproducible_and_nested() {
    let spec = short(60);
    let cfg = CoverageConfig {
        datasets: 3,
        lengths: vec![30, 60],
        windows: vec![1, 3],
        intensities: vec![3.0, 7.0],
        truth_reps: 2,
        variance_reps: 3,
        variance_windows: vec![1],
        ..CoverageConfig::desk()
    };
    let a = coverage_experiment(&spec, &cfg).unwrap();
    let b = coverage_experiment(&spec, &cfg).unwrap();
    let mut ca = Vec::new();
    let mut cb = Vec::new();
    write_records_csv(&mut ca, &a.records).unwrap();
    write_records_csv(&mut cb, &b.records).unwrap();
    assert_eq!(ca, cb);
    for cell in a.cells.iter().filter(|c| c.level == 0.95) {
        let wide = a
            .cells
            .iter()
            .find(|d| {
                d.level == 0.99
                    && d.length == cell.length
                    && d.m == cell.m
                    && d.intensity == cell.intensity
                    && d.region == cell.region
                    && d.mode == cell.mode
                    && d.estimator == cell.estimator
                    && d.flavor == cell.flavor
            })
            .unwrap();
        assert!(wide.coverage >= cell.coverage);
    }
}

#[test]
fn balance_needs_two_replicates() {
    let spec = short(20);
    let exp = BalanceExperiment {
        replicates: 1,
        ..Default::default()
    };
    assert!(balance_experiment(&spec, &exp).is_err());
}

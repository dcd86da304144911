//! Examples with self-evident answers, and the exact invariants: dominating
//! measure invariance, log-ratio antisymmetry, Hájek boundedness and unit
//! weights under the identity intervention.

use std::collections::BTreeMap;
use std::error::Error;
use std::sync::Arc;

use pointcause::estimate::{hajek_average, ipw_average, period_estimate, variance_bound};
use pointcause::geom::{count_in_region, distance_to_set};
use pointcause::interventions::{sequence_log_density, uniform_baseline};
use pointcause::pointprocess::log_density_ratio;
use pointcause::propensity::{balance_check, log_propensity};
use pointcause::simstudy::{
    calibrate_intercepts, coverage_experiment, mc_truth_oracle, CalibrationTargets, CoverageConfig, Dgp, Functional,
    OracleContext,
};
use pointcause::smooth::{bandwidth_rule, baseline_density, scott_bandwidth, smoothed_region_integral};
use pointcause::surfaces::{decay_surface, integrate, point_decay, DecayTargets};
use pointcause::{
    confidence_interval, effect_contrast, estimate_from_outcomes, fit, generate_series, DgpSpec, EstimatorKind,
    EstimatorSettings, FeatureSpec, HistoryFrame, Intervention, InterventionSequence, KernelSpec, LogLinearIntensity,
    OutcomeMode, Point, PointPattern, PoissonProcess, PropensityDesign, PropensityModel, QuadratureGrid, Region,
    Segment, SegmentSet, SeedTree, Surface, WeightSeries, Window,
};

use crate::closed_form as cf;
use crate::{report, OracleReport};

type Res = Result<OracleReport, Box<dyn Error>>;

fn unit() -> Window {
    Window::unit_square()
}

fn pattern(points: &[(f64, f64)]) -> Result<PointPattern, Box<dyn Error>> {
    Ok(PointPattern::new(unit(), 1, points.iter().map(|p| Point::from(*p)).collect())?)
}

fn grid() -> QuadratureGrid {
    QuadratureGrid::default_for(unit())
}

fn homogeneous(h: f64) -> Result<PoissonProcess, Box<dyn Error>> {
    Ok(PoissonProcess::homogeneous(h, unit())?)
}

fn probes() -> Vec<Point> {
    (0..7)
        .flat_map(|i| (0..7).map(move |j| Point::new(0.05 + 0.15 * i as f64, 0.05 + 0.15 * j as f64)))
        .collect()
}

fn max_gap(a: &Surface, b: &Surface, scale: f64) -> f64 {
    probes()
        .iter()
        .map(|p| (a.value(*p) - scale * b.value(*p)).abs())
        .fold(0.0, f64::max)
}

/// Treatment patterns from `exp(0.5 + x)` with the covariate surface `x`
/// attached to every frame.
fn fitting_data(periods: usize) -> Result<(Vec<HistoryFrame>, Vec<PointPattern>), Box<dyn Error>> {
    let x = Surface::affine(1.0, 0.0, 0.0);
    let process = PoissonProcess::new(LogLinearIntensity::new(0.5, vec![1.0], vec![x.clone()])?, &grid())?;
    let mut rng = SeedTree::new(5).stream();
    let treatments: Vec<PointPattern> = (0..periods)
        .map(|i| process.sample(i as u32 + 1, &mut rng))
        .collect::<Result<_, _>>()?;
    let outcomes: Vec<PointPattern> = (0..periods).map(|i| PointPattern::empty(unit(), i as u32 + 1)).collect();
    let covs: Vec<BTreeMap<String, Surface>> = (0..periods).map(|_| BTreeMap::from([("x".to_string(), x.clone())])).collect();
    Ok((HistoryFrame::from_series(&treatments, &outcomes, &covs, 0), treatments))
}

fn covariate_features() -> Vec<FeatureSpec> {
    vec![FeatureSpec::Intercept, FeatureSpec::Covariate { name: "x".into() }]
}

fn decoupled(periods: usize) -> DgpSpec {
    let mut s = DgpSpec::default_spec();
    s.periods = periods;
    s.treatment.covariates = [0.0; 4];
    s.treatment.lag_treatment = 0.0;
    s.treatment.lag_outcome = 0.0;
    s.outcome.covariates = [0.0; 4];
    s.outcome.lagged_x2 = 0.0;
    s.outcome.treatment = 0.0;
    s.outcome.lag_outcome = 0.0;
    s
}

fn settings(level: f64) -> Result<EstimatorSettings, Box<dyn Error>> {
    Ok(EstimatorSettings {
        kernel: KernelSpec::isotropic(0.1)?,
        mode: OutcomeMode::Smoothed,
        level,
        t_total: None,
    })
}

fn geometry() -> Vec<OracleReport> {
    vec![
        report("count in [0,0.5]^2 of {(0.2,0.2),(0.8,0.8)}", || -> Res {
            let region = Region::rect(unit(), 0.0, 0.0, 0.5, 0.5)?;
            let n = count_in_region(&pattern(&[(0.2, 0.2), (0.8, 0.8)])?, &region)?;
            Ok(OracleReport::within("", 1.0, n as f64, 0.0))
        }),
        report("count of the empty pattern", || -> Res {
            let region = Region::rect(unit(), 0.1, 0.2, 0.7, 0.9)?;
            let n = count_in_region(&PointPattern::empty(unit(), 1), &region)?;
            Ok(OracleReport::within("", 0.0, n as f64, 0.0))
        }),
        report("count of 7 uniform points in the whole window", || -> Res {
            use rand::Rng;
            let mut rng = SeedTree::new(1).stream();
            let pts: Vec<Point> = (0..7).map(|_| Point::new(rng.random(), rng.random())).collect();
            let n = count_in_region(&PointPattern::new(unit(), 1, pts)?, &Region::whole(unit()))?;
            Ok(OracleReport::within("", 7.0, n as f64, 0.0))
        }),
        report("distance from (0.5,1) to the segment (0,0)-(1,0)", || -> Res {
            let set = SegmentSet::new(
                &unit(),
                vec![Segment::Line {
                    a: Point::new(0.0, 0.0),
                    b: Point::new(1.0, 0.0),
                }],
            )?;
            Ok(OracleReport::within("", 1.0, distance_to_set(Point::new(0.5, 1.0), &set)?, 1e-15))
        }),
        report("distance to a coincident point", || -> Res {
            let p = Point::new(0.3, 0.4);
            Ok(OracleReport::within("", 0.0, distance_to_set(p, &vec![p])?, 0.0))
        }),
        report("distance from the origin to (0.3,0.4)", || -> Res {
            Ok(OracleReport::within("", 0.5, distance_to_set(Point::new(0.0, 0.0), &vec![Point::new(0.3, 0.4)])?, 1e-15))
        }),
        report("decay on a road, amplitude 1.2, scale 2", || -> Res {
            let set = SegmentSet::new(
                &unit(),
                vec![Segment::Line {
                    a: Point::new(0.0, 0.5),
                    b: Point::new(1.0, 0.5),
                }],
            )?;
            let s = decay_surface(DecayTargets::Segments(Arc::new(set)), 2.0, 1.2)?;
            Ok(OracleReport::within("", 1.2, s.value(Point::new(0.3, 0.5)), 1e-15))
        }),
        report("decay at distance 0.5, amplitude 1, scale 2", || -> Res {
            let s = point_decay(&[Point::new(0.2, 0.2)], 2.0, 1.0)?;
            Ok(OracleReport::within("", (-1.0_f64).exp(), s.value(Point::new(0.5, 0.6)), 1e-15))
        }),
        report("decay with no targets", || -> Res {
            let s = point_decay(&[], 2.0, 1.0)?;
            Ok(OracleReport::within("", 0.0, s.value(Point::new(0.5, 0.6)), 0.0))
        }),
        report("integral of the constant 5 over the window", || -> Res {
            Ok(OracleReport::within("", 5.0, integrate(&Surface::Constant(5.0), &Region::whole(unit()), &grid())?, 1e-12))
        }),
        report("integral of the constant 5 over [0,0.5]^2", || -> Res {
            let region = Region::rect(unit(), 0.0, 0.0, 0.5, 0.5)?;
            Ok(OracleReport::within("", 1.25, integrate(&Surface::Constant(5.0), &region, &grid())?, 1e-12))
        }),
    ]
}

fn processes() -> Vec<OracleReport> {
    vec![
        report("mean count at rate 5 over 10000 draws", || -> Res {
            let p = homogeneous(5.0)?;
            let mut rng = SeedTree::new(2).stream();
            let mut total = 0;
            for _ in 0..10_000 {
                total += p.sample(1, &mut rng)?.len();
            }
            Ok(OracleReport::within("", 5.0, total as f64 / 10_000.0, 0.1))
        }),
        report("zero intensity samples nothing", || -> Res {
            let p = PoissonProcess::new(Surface::Constant(0.0), &grid())?;
            let mut rng = SeedTree::new(3).stream();
            let mut total = 0;
            for _ in 0..1000 {
                total += p.sample(1, &mut rng)?.len();
            }
            Ok(OracleReport::within("", 0.0, total as f64, 0.0))
        }),
        report("unit-rate log density of any pattern", || -> Res {
            let v = homogeneous(1.0)?.log_density(&pattern(&[(0.1, 0.2), (0.5, 0.5), (0.9, 0.3)])?, &grid())?;
            Ok(OracleReport::within("", 0.0, v.value(), 0.0))
        }),
        report("log density ratio of identical processes", || -> Res {
            let p = homogeneous(4.0)?;
            let v = log_density_ratio(&p, &p, &pattern(&[(0.1, 0.2), (0.7, 0.5)])?, &grid())?;
            Ok(OracleReport::within("", 0.0, v, 0.0))
        }),
    ]
}

fn propensity() -> Vec<OracleReport> {
    vec![
        report("intercept-only fit equals log(n / (T |W|))", || -> Res {
            let (frames, treatments) = fitting_data(40)?;
            let design = PropensityDesign::build(&[FeatureSpec::Intercept], &frames, &treatments, &grid())?;
            let n: usize = treatments.iter().map(|t| t.len()).sum();
            let model = fit(&design, None)?;
            Ok(OracleReport::within("", (n as f64 / 40.0).ln(), model.coefficients[0], 1e-8))
        }),
        report("equal weights leave the fit unchanged", || -> Res {
            let (frames, treatments) = fitting_data(40)?;
            let design = PropensityDesign::build(&covariate_features(), &frames, &treatments, &grid())?;
            let a = fit(&design, None)?;
            let b = fit(&design, Some(&vec![2.5; design.periods().len()]))?;
            let gap = a.coefficients.iter().zip(&b.coefficients).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            Ok(OracleReport::within("", 0.0, gap, 1e-9))
        }),
        report("intercept-only log propensity with intercept 0", || -> Res {
            let model = PropensityModel::fixed(vec![FeatureSpec::Intercept], vec![0.0])?;
            let frame = HistoryFrame {
                period: 1,
                treatments: vec![],
                outcomes: vec![],
                covariates: Default::default(),
            };
            let v = log_propensity(&model, &frame, &pattern(&[(0.4, 0.4), (0.6, 0.1)])?, &grid())?;
            Ok(OracleReport::within("", 0.0, v.value(), 1e-12))
        }),
        report("log density falls as a feature away from the points grows", || -> Res {
            let bump = Surface::gaussian(Point::new(0.2, 0.2), 50.0);
            let frame = HistoryFrame {
                period: 1,
                treatments: vec![],
                outcomes: vec![],
                covariates: BTreeMap::from([("bump".to_string(), bump)]),
            };
            let pts = pattern(&[(0.8, 0.8), (0.9, 0.6)])?;
            let features = vec![FeatureSpec::Intercept, FeatureSpec::Covariate { name: "bump".into() }];
            let mut last = f64::INFINITY;
            let mut ok = true;
            for c in [0.0, 0.5, 1.0, 2.0] {
                let model = PropensityModel::fixed(features.clone(), vec![0.0, c])?;
                let v = log_propensity(&model, &frame, &pts, &grid())?.value();
                ok &= v < last;
                last = v;
            }
            Ok(OracleReport::holds("", ok))
        }),
        report("truncation quantile 1 truncates nothing", || -> Res {
            let (frames, treatments) = fitting_data(40)?;
            let design = PropensityDesign::build(&covariate_features(), &frames, &treatments, &grid())?;
            let model = fit(&design, None)?;
            let rep = balance_check(&model, &design, 1.0)?;
            Ok(OracleReport::within("", 0.0, rep.truncated_periods as f64, 0.0))
        }),
        report("unweighted refit reproduces the fitted coefficients", || -> Res {
            let (frames, treatments) = fitting_data(40)?;
            let design = PropensityDesign::build(&covariate_features(), &frames, &treatments, &grid())?;
            let model = fit(&design, None)?;
            let rep = balance_check(&model, &design, 1.0)?;
            let gap = rep
                .rows
                .iter()
                .zip(&model.coefficients)
                .map(|(r, b)| (r.unweighted_coefficient - b).abs())
                .fold(0.0, f64::max);
            Ok(OracleReport::within("", 0.0, gap, 1e-8))
        }),
    ]
}

fn smoothing() -> Vec<OracleReport> {
    vec![
        report("bandwidth rule at T = 1000", || -> Res { Ok(OracleReport::within("", 0.1, bandwidth_rule(1000), 1e-12)) }),
        report("bandwidth rule at T = 1", || -> Res { Ok(OracleReport::within("", 10.0, bandwidth_rule(1), 1e-12)) }),
        report("full kernel mass of a centred point, sd 0.001", || -> Res {
            let v = smoothed_region_integral(&pattern(&[(0.5, 0.5)])?, &KernelSpec::isotropic(1e-3)?, &Region::whole(unit()));
            Ok(OracleReport::within("", 1.0, v, 1e-10))
        }),
        report("smoothed mass of the empty pattern", || -> Res {
            let v = smoothed_region_integral(&PointPattern::empty(unit(), 1), &KernelSpec::isotropic(0.2)?, &Region::whole(unit()));
            Ok(OracleReport::within("", 0.0, v, 0.0))
        }),
        report("Scott rule rejects identical points", || -> Res {
            Ok(OracleReport::holds("", scott_bandwidth(&pattern(&[(0.3, 0.3); 5])?).is_err()))
        }),
        report("Scott bandwidths scale with the coordinates", || -> Res {
            let pts = [(0.1, 0.2), (0.4, 0.9), (0.7, 0.3), (0.95, 0.6), (0.2, 0.5)];
            let (ax, ay) = scott_bandwidth(&pattern(&pts)?)?;
            let big = Window::new(0.0, 0.0, 2.0, 2.0)?;
            let scaled = PointPattern::new(big, 1, pts.iter().map(|(x, y)| Point::new(2.0 * x, 2.0 * y)).collect())?;
            let (bx, by) = scott_bandwidth(&scaled)?;
            Ok(OracleReport::within("", 0.0, (bx - 2.0 * ax).abs().max((by - 2.0 * ay).abs()), 1e-14))
        }),
    ]
}

fn interventions() -> Vec<OracleReport> {
    vec![
        report("rate 0 intervention samples nothing", || -> Res {
            let h = Intervention::homogeneous(0.0, unit())?;
            let mut rng = SeedTree::new(4).stream();
            let mut total = 0;
            for _ in 0..500 {
                total += h.sample(1, &grid(), &mut rng)?.len();
            }
            Ok(OracleReport::within("", 0.0, total as f64, 0.0))
        }),
        report("rate 3 on a window of area 2", || -> Res {
            let h = Intervention::homogeneous(3.0, Window::new(0.0, 0.0, 2.0, 1.0)?)?;
            Ok(OracleReport::within("", 6.0, h.expected_count(), 1e-12))
        }),
        report("c = 3 on the uniform baseline is rate 3", || -> Res {
            let h = Intervention::scaled_baseline(3.0, &uniform_baseline(&unit()), &grid())?;
            Ok(OracleReport::within("", 0.0, max_gap(h.intensity(), &Surface::Constant(3.0), 1.0), 1e-12))
        }),
        report("c = 6 against c = 1 differ by a factor 6", || -> Res {
            let base = scott_baseline()?;
            let (a, b) = (
                Intervention::scaled_baseline(6.0, &base, &grid())?,
                Intervention::scaled_baseline(1.0, &base, &grid())?,
            );
            Ok(OracleReport::within("", 0.0, max_gap(a.intensity(), b.intensity(), 6.0), 1e-12))
        }),
        report("focal with alpha 0 equals the scaled baseline", || -> Res {
            let base = scott_baseline()?;
            let a = Intervention::focal(4.0, &base, Point::new(0.3, 0.3), 0.0, &grid())?;
            let b = Intervention::scaled_baseline(4.0, &base, &grid())?;
            Ok(OracleReport::within("", 0.0, max_gap(a.intensity(), b.intensity(), 1.0), 0.0))
        }),
        report("focal expected count equals c", || -> Res {
            let base = scott_baseline()?;
            let mut worst: f64 = 0.0;
            for alpha in [1.0, 10.0, 100.0, 1000.0] {
                let h = Intervention::focal(4.0, &base, Point::new(0.3, 0.6), alpha, &grid())?;
                worst = worst.max((integrate(h.intensity(), &Region::whole(unit()), &grid())? - 4.0).abs());
            }
            Ok(OracleReport::within("", 0.0, worst, 1e-6))
        }),
        report("local split with equal counts on half the window", || -> Res {
            let half = Region::rect(unit(), 0.0, 0.0, 0.5, 1.0)?;
            let h = Intervention::local(&half, 2.0, 2.0, &uniform_baseline(&unit()), &grid())?;
            Ok(OracleReport::within("", 0.0, max_gap(h.intensity(), &Surface::Constant(4.0), 1.0), 1e-12))
        }),
        report("local expected count inside equals c_inside", || -> Res {
            let region = Region::rect(unit(), 0.25, 0.25, 0.75, 0.75)?;
            let h = Intervention::local(&region, 3.0, 1.5, &scott_baseline()?, &grid())?;
            Ok(OracleReport::within("", 3.0, integrate(h.intensity(), &region, &grid())?, 1e-6))
        }),
        report("changing c_inside leaves the complement unchanged", || -> Res {
            let region = Region::rect(unit(), 0.25, 0.25, 0.75, 0.75)?;
            let base = scott_baseline()?;
            let a = Intervention::local(&region, 3.0, 1.5, &base, &grid())?;
            let b = Intervention::local(&region, 9.0, 1.5, &base, &grid())?;
            let gap = probes()
                .iter()
                .filter(|p| !region.contains(**p))
                .map(|p| (a.intensity().value(*p) - b.intensity().value(*p)).abs())
                .fold(0.0, f64::max);
            Ok(OracleReport::within("", 0.0, gap, 0.0))
        }),
        report("length-one sequence density is the process density", || -> Res {
            let h = Intervention::homogeneous(2.5, unit())?;
            let pts = pattern(&[(0.2, 0.4), (0.9, 0.9)])?;
            let seq = InterventionSequence::iid(h.clone(), 1)?;
            let a = sequence_log_density(&seq, &[&pts])?;
            let b = h.process(&grid())?.log_density(&pts, &grid())?.value();
            Ok(OracleReport::within("", b, a, 0.0))
        }),
        report("permuting periods and patterns together", || -> Res {
            let slots = vec![
                Intervention::homogeneous(2.0, unit())?,
                Intervention::homogeneous(5.0, unit())?,
                Intervention::scaled_baseline(3.0, &scott_baseline()?, &grid())?,
            ];
            let pats = [pattern(&[(0.1, 0.1)])?, pattern(&[(0.4, 0.2), (0.6, 0.6)])?, pattern(&[(0.9, 0.5)])?];
            let a = sequence_log_density(&InterventionSequence::new(slots.clone())?, &[&pats[0], &pats[1], &pats[2]])?;
            let perm = vec![slots[2].clone(), slots[0].clone(), slots[1].clone()];
            let b = sequence_log_density(&InterventionSequence::new(perm)?, &[&pats[2], &pats[0], &pats[1]])?;
            Ok(OracleReport::within("", a, b, 1e-12))
        }),
    ]
}

fn scott_baseline() -> Result<Surface, Box<dyn Error>> {
    let p = pattern(&[(0.2, 0.3), (0.35, 0.4), (0.5, 0.8), (0.7, 0.2), (0.8, 0.75), (0.3, 0.6)])?;
    Ok(baseline_density(&p, &grid())?)
}

fn estimators() -> Vec<OracleReport> {
    vec![
        report("identity intervention gives weight one and the smoothed outcome", || -> Res {
            let h = Intervention::homogeneous(4.0, unit())?;
            let treatments: Vec<PointPattern> = (0..6).map(|i| pattern(&[(0.1 * i as f64 + 0.05, 0.5)])).collect::<Result<_, _>>()?;
            let lp: Vec<f64> = treatments.iter().map(|w| h.log_density(w)).collect::<Result<_, _>>()?;
            let ws = WeightSeries::compute(&InterventionSequence::iid(h, 2)?, &treatments, &lp, 1)?;
            let y = pattern(&[(0.3, 0.3), (0.6, 0.7)])?;
            let kernel = KernelSpec::isotropic(0.1)?;
            let whole = Region::whole(unit());
            let est = period_estimate(ws.log_weights[0], &y, &kernel, &whole, OutcomeMode::Smoothed)?;
            let g = smoothed_region_integral(&y, &kernel, &whole);
            let lw = ws.log_weights.iter().map(|l| l.abs()).fold(0.0, f64::max);
            Ok(OracleReport::within("", g, est, 0.0).and(lw == 0.0))
        }),
        report("empty outcome gives zero whatever the weight", || -> Res {
            let v = period_estimate(40.0, &PointPattern::empty(unit(), 1), &KernelSpec::isotropic(0.1)?, &Region::whole(unit()), OutcomeMode::Smoothed)?;
            Ok(OracleReport::within("", 0.0, v, 0.0))
        }),
        report("mean of {2, 4}", || -> Res { Ok(OracleReport::within("", 3.0, ipw_average(&[2.0, 4.0]), 0.0)) }),
        report("mean of zeros", || -> Res { Ok(OracleReport::within("", 0.0, ipw_average(&[0.0; 9]), 0.0)) }),
        report("mean of a constant series", || -> Res { Ok(OracleReport::within("", 1.7, ipw_average(&[1.7; 12]), 1e-15)) }),
        report("Hajek with equal weights is the plain mean", || -> Res {
            let g = [1.0, 4.0, 2.5, 0.0, 3.0];
            Ok(OracleReport::within("", cf::mean(&g), hajek_average(&[0.3; 5], &g)?, 1e-14))
        }),
        report("Hajek stays within the outcome range", || -> Res {
            let g = [1.0, 4.0, 2.5, 0.5, 3.0];
            let v = hajek_average(&[-3.0, 2.0, 0.1, 9.0, -1.0], &g)?;
            Ok(OracleReport::holds("", (0.5..=4.0).contains(&v)))
        }),
        report("Hajek ignores a common weight factor", || -> Res {
            let g = [1.0, 4.0, 2.5, 0.5, 3.0];
            let lw = [-3.0, 2.0, 0.1, 9.0, -1.0];
            let shifted: Vec<f64> = lw.iter().map(|l| l + 2.0_f64.ln()).collect();
            let (a, b) = (hajek_average(&lw, &g)?, hajek_average(&shifted, &g)?);
            Ok(OracleReport::within("", a, b, 1e-14 * a.abs()))
        }),
        report("constant estimates c give bound c^2 / T", || -> Res {
            Ok(OracleReport::within("", 9.0 / 20.0, variance_bound(&[3.0; 18], 20, EstimatorKind::Ipw, None)?, 1e-15))
        }),
        report("one nonzero period gives v* = value^2 / (T - M + 1)", || -> Res {
            let mut per = vec![0.0; 18];
            per[7] = 6.0;
            let v_star = variance_bound(&per, 20, EstimatorKind::Ipw, None)? * 20.0;
            Ok(OracleReport::within("", 36.0 / 18.0, v_star, 1e-14))
        }),
        report("contrast of identical interventions is zero", || -> Res {
            let (ws, g) = toy_weights()?;
            let a = estimate_from_outcomes("a", EstimatorKind::Hajek, &ws, &g, &Region::whole(unit()), &settings(0.95)?)?;
            let c = effect_contrast(&a, &a)?;
            let zero_terms = c.contributions.iter().all(|p| p.term == 0.0);
            Ok(OracleReport::within("", 0.0, c.estimate, 0.0).and(zero_terms))
        }),
        report("contrast antisymmetry", || -> Res {
            let (ws, g) = toy_weights()?;
            let mut other = ws.clone();
            other.log_weights.iter_mut().enumerate().for_each(|(i, l)| *l += 0.1 * i as f64 - 0.3);
            let whole = Region::whole(unit());
            let a = estimate_from_outcomes("a", EstimatorKind::Ipw, &ws, &g, &whole, &settings(0.95)?)?;
            let b = estimate_from_outcomes("b", EstimatorKind::Ipw, &other, &g, &whole, &settings(0.95)?)?;
            let (ab, ba) = (effect_contrast(&a, &b)?, effect_contrast(&b, &a)?);
            Ok(OracleReport::within("", -ba.estimate, ab.estimate, 0.0).and(ab.variance_bound == ba.variance_bound))
        }),
        report("zero bound gives a degenerate interval", || -> Res {
            let ci = confidence_interval(1.5, 0.0, 0.95)?;
            Ok(OracleReport::holds("", ci.lower == 1.5 && ci.upper == 1.5))
        }),
        report("nested levels nest", || -> Res {
            let mut ok = true;
            let mut prev = (f64::INFINITY, f64::NEG_INFINITY);
            for level in [0.5, 0.8, 0.9, 0.95, 0.99] {
                let ci = confidence_interval(1.0, 0.3, level)?;
                ok &= ci.lower < prev.0 || prev.0.is_infinite();
                ok &= ci.upper > prev.1 || prev.1.is_infinite();
                prev = (ci.lower, ci.upper);
            }
            Ok(OracleReport::holds("", ok))
        }),
    ]
}

/// Six periods of log-weights for M = 1 with matching outcomes.
fn toy_weights() -> Result<(WeightSeries, Vec<f64>), Box<dyn Error>> {
    let periods: Vec<u32> = (1..=6).collect();
    let ratios = [0.2, -0.4, 0.0, 1.1, -0.7, 0.3];
    Ok((WeightSeries::from_log_ratios(1, &periods, &ratios, 0)?, vec![1.0, 2.0, 0.5, 3.0, 0.0, 1.5]))
}

fn simulation() -> Vec<OracleReport> {
    vec![
        report("decoupled treatment counts match exp(intercept) times the area", || -> Res {
            let spec = decoupled(400);
            let rate = spec.treatment.intercept.exp() * spec.window.area();
            let (w, _) = generate_series(&spec, 21)?.mean_counts();
            Ok(OracleReport::within("", rate, w, 4.0 * (rate / 400.0).sqrt()))
        }),
        report("same seed, same series", || -> Res {
            let mut spec = DgpSpec::default_spec();
            spec.periods = 30;
            Ok(OracleReport::holds("", generate_series(&spec, 7)? == generate_series(&spec, 7)?))
        }),
        report("doubling the truth replicates from 500 to 1000", || -> Res {
            let mut spec = DgpSpec::default_spec();
            spec.periods = 12;
            let series = generate_series(&spec, 8)?;
            let seq = InterventionSequence::iid(Intervention::homogeneous(5.0, spec.window)?, 1)?;
            let whole = [Region::whole(spec.window)];
            let a = mc_truth_oracle(&series, &seq, &whole, 500, 9)?;
            let b = mc_truth_oracle(&series, &seq, &whole, 1000, 10)?;
            let r = a.positions.clone();
            let pooled = (a.standard_error(0, r.clone()).powi(2) + b.standard_error(0, r.clone()).powi(2)).sqrt();
            Ok(OracleReport::within("", a.average(0, r.clone()), b.average(0, r), 2.0 * pooled))
        }),
        report("empty outcomes under the identity intervention: v = v* = 0", || -> Res {
            let mut spec = decoupled(20);
            spec.outcome.intercept = -60.0;
            let series = generate_series(&spec, 11)?;
            let dgp = Dgp::new(spec.clone())?;
            let rate = spec.treatment.intercept.exp();
            let seq = InterventionSequence::iid(Intervention::homogeneous(rate, spec.window)?, 1)?;
            let positions = spec.burn_in..series.len();
            let o = OracleContext::new(&dgp, &series).variance(&[seq], &[Region::whole(spec.window)], &[Functional::Count], positions.clone(), 20, 12)?;
            let m = o.moments(0, 0, 0, positions);
            Ok(OracleReport::within("", 0.0, m.v.abs().max(m.v_star.abs()), 0.0))
        }),
        report("v* dominates v in every period", || -> Res {
            let mut spec = DgpSpec::default_spec();
            spec.periods = 20;
            let series = generate_series(&spec, 13)?;
            let dgp = Dgp::new(spec.clone())?;
            let seqs = [3.0, 7.0]
                .iter()
                .map(|h| InterventionSequence::iid(Intervention::homogeneous(*h, spec.window)?, 2).map_err(Into::into))
                .collect::<Result<Vec<_>, Box<dyn Error>>>()?;
            let regions = [Region::whole(spec.window), Region::rect(spec.window, 0.0, 0.0, 0.5, 0.5)?];
            let fs = [Functional::Count, Functional::Smoothed(KernelSpec::isotropic(0.2)?)];
            let o = OracleContext::new(&dgp, &series).variance(&seqs, &regions, &fs, spec.burn_in + 1..series.len(), 6, 14)?;
            let mut ok = true;
            for s in 0..2 {
                for r in 0..2 {
                    for f in 0..2 {
                        ok &= o.per_period(s, r, f).iter().all(|(v, vs)| vs >= v);
                    }
                }
            }
            Ok(OracleReport::holds("", ok))
        }),
        report("99% intervals cover at least as often as 95% ones", || -> Res {
            let config = CoverageConfig {
                datasets: 3,
                lengths: vec![40],
                windows: vec![1],
                intensities: vec![5.0],
                regions: vec![pointcause::Rect::new(0.0, 0.0, 1.0, 1.0)],
                truth_reps: 2,
                variance_reps: 2,
                variance_windows: vec![1],
                levels: vec![0.95, 0.99],
                modes: vec![OutcomeMode::Smoothed, OutcomeMode::Count],
                seed: 15,
            };
            let mut spec = DgpSpec::default_spec();
            spec.periods = 40;
            let table = coverage_experiment(&spec, &config)?;
            let ok = table.cells.iter().filter(|c| c.level == 0.99).all(|hi| {
                table.cells.iter().any(|lo| {
                    lo.level == 0.95
                        && lo.estimator == hi.estimator
                        && lo.flavor == hi.flavor
                        && lo.mode == hi.mode
                        && lo.m == hi.m
                        && lo.intensity == hi.intensity
                        && lo.region == hi.region
                        && lo.length == hi.length
                        && hi.coverage >= lo.coverage
                })
            });
            Ok(OracleReport::holds("", ok))
        }),
        report("decoupled calibration is log(m / area)", || -> Res {
            let targets = CalibrationTargets {
                treatment: 4.0,
                outcome: 9.0,
                ..Default::default()
            };
            let spec = calibrate_intercepts(&decoupled(20), &targets, 16)?;
            let gap = (spec.treatment.intercept - 4.0_f64.ln()).abs().max((spec.outcome.intercept - 9.0_f64.ln()).abs());
            Ok(OracleReport::within("", 0.0, gap, 0.0))
        }),
        report("doubling a decoupled target adds log 2", || -> Res {
            let base = CalibrationTargets {
                treatment: 4.0,
                outcome: 9.0,
                ..Default::default()
            };
            let double = CalibrationTargets {
                treatment: 8.0,
                ..base
            };
            let a = calibrate_intercepts(&decoupled(20), &base, 17)?;
            let b = calibrate_intercepts(&decoupled(20), &double, 17)?;
            Ok(OracleReport::within("", 2.0_f64.ln(), b.treatment.intercept - a.treatment.intercept, 1e-12))
        }),
    ]
}

/// The self-evident examples outside the command-line tool.
pub fn trivial_examples() -> Vec<OracleReport> {
    let mut out = geometry();
    out.extend(processes());
    out.extend(propensity());
    out.extend(smoothing());
    out.extend(interventions());
    out.extend(estimators());
    out.extend(simulation());
    out
}

/// Randomized-input exact identities, over a fixed set of seeds.
pub fn exact_invariants() -> Vec<OracleReport> {
    let mut out = Vec::new();
    for seed in 0..20u64 {
        out.push(report(&format!("dominating measure invariance, seed {seed}"), || -> Res {
            let (a, b, c, w) = random_case(seed)?;
            let g = grid();
            // the ratio through a third reference process equals the direct one
            let direct = log_density_ratio(&a, &b, &w, &g)?;
            let via = log_density_ratio(&a, &c, &w, &g)? - log_density_ratio(&b, &c, &w, &g)?;
            Ok(OracleReport::within("", direct, via, 1e-9 * (1.0 + direct.abs())))
        }));
        out.push(report(&format!("log-ratio antisymmetry, seed {seed}"), || -> Res {
            let (a, b, _, w) = random_case(seed)?;
            let g = grid();
            Ok(OracleReport::within("", -log_density_ratio(&b, &a, &w, &g)?, log_density_ratio(&a, &b, &w, &g)?, 0.0))
        }));
        out.push(report(&format!("Hajek boundedness, seed {seed}"), || -> Res {
            let mut rng = SeedTree::new(seed).child(1).stream();
            use rand::Rng;
            let n = rng.random_range(1..40);
            let lw: Vec<f64> = (0..n).map(|_| rng.random_range(-30.0..30.0)).collect();
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
            let v = hajek_average(&lw, &g)?;
            let (lo, hi) = (g.iter().cloned().fold(f64::INFINITY, f64::min), g.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
            Ok(OracleReport::holds("", lo <= v && v <= hi))
        }));
        out.push(report(&format!("identity intervention weight one, seed {seed}"), || -> Res {
            let mut rng = SeedTree::new(seed).child(2).stream();
            let h = Intervention::homogeneous(1.0 + seed as f64 * 0.5, unit())?;
            let treatments: Vec<PointPattern> =
                (0..8).map(|i| h.sample(i + 1, &grid(), &mut rng)).collect::<Result<_, _>>()?;
            let lp: Vec<f64> = treatments.iter().map(|w| h.log_density(w)).collect::<Result<_, _>>()?;
            let ws = WeightSeries::compute(&InterventionSequence::iid(h, 3)?, &treatments, &lp, 2)?;
            Ok(OracleReport::holds("", ws.log_weights.iter().all(|l| *l == 0.0)))
        }));
    }
    out.push(report("grid refinement shrinks the quadrature error", || -> Res {
        let f = LogLinearIntensity::new(1.0, vec![1.0], vec![Surface::affine(1.0, 0.0, 0.0)])?;
        let exact = cf::exp_linear_integral(1.0, 1.0, 0.0, 1.0, 0.0, 1.0);
        let mut errs = Vec::new();
        for n in [16, 32, 64, 128, 256] {
            let g = QuadratureGrid::new(unit(), n, n)?;
            errs.push((integrate(&f, &Region::whole(unit()), &g)? - exact).abs());
        }
        Ok(OracleReport::holds("", errs.windows(2).all(|w| w[1] < w[0])))
    }));
    out
}

/// Two log-linear processes, a homogeneous reference and a pattern.
fn random_case(seed: u64) -> Result<(PoissonProcess, PoissonProcess, PoissonProcess, PointPattern), Box<dyn Error>> {
    use rand::Rng;
    let mut rng = SeedTree::new(seed).stream();
    let g = grid();
    let loglin = |rng: &mut pointcause::rng::Stream| -> Result<PoissonProcess, Box<dyn Error>> {
        let (c, ax, ay) = (rng.random_range(-1.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        Ok(PoissonProcess::new(LogLinearIntensity::new(c, vec![1.0], vec![Surface::affine(ax, ay, 0.0)])?, &g)?)
    };
    let a = loglin(&mut rng)?;
    let b = loglin(&mut rng)?;
    let c = PoissonProcess::homogeneous(rng.random_range(0.5..8.0), unit())?;
    let w = a.sample(1, &mut rng)?;
    Ok((a, b, c, w))
}

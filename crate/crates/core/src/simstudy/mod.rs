//! The simulation design: road-network confounders, point-process
//! confounders redrawn every period, and treatment and outcome processes with
//! feedback through lagged decay features.
//!
//! Intensities are evaluated directly rather than through [`Surface`] trees,
//! since the oracles sample millions of patterns. [`Dgp::treatment_intensity`]
//! and [`Dgp::outcome_intensity`] build the equivalent generic intensities.

mod balance;
mod calibrate;
mod coverage;
mod oracle;

pub use balance::{balance_experiment, BalanceExperiment, BalanceSummary};
pub use calibrate::{calibrate_intercepts, CalibrationTargets};
pub use coverage::{
    coverage_experiment, summarize, write_cells_csv, write_records_csv, CoverageCell, CoverageConfig, CoverageRecord,
    CoverageTable, VarianceRecord, mode_label,
};
pub use oracle::{mc_truth_oracle, mc_variance_oracle, Functional, OracleContext, TruthOracle, VarianceMoments, VarianceOracle};

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimate::EstimateError;
use crate::geom::{GeomError, NearestDistance, Point, PointPattern, Rect, Segment, SegmentSet, Window};
use crate::interventions::InterventionError;
use crate::pointprocess::{uniform_points, PointProcessError};
use crate::propensity::{FeatureSpec, LagSource, PeriodDesign, PropensityDesign, PropensityError};
use crate::rng::{purpose, SeedTree};
use crate::smooth::SmoothError;
use crate::surfaces::{decay_surface, point_decay, DecayTargets, LogLinearIntensity, QuadratureGrid, Surface, SurfaceError};

const DEFAULT_SPEC: &str = include_str!("../../data/default_dgp.toml");

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation spec: {0}")]
    Spec(String),
    #[error("spec file {path}: {message}")]
    Format { path: String, message: String },
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    PointProcess(#[from] PointProcessError),
    #[error(transparent)]
    Propensity(#[from] PropensityError),
    #[error(transparent)]
    Intervention(#[from] InterventionError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Smooth(#[from] SmoothError),
}

/// Segments whose decayed distance gives the two static covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadSpec {
    pub lines: Vec<Segment>,
    pub arcs: Vec<Segment>,
    pub line_amplitude: f64,
    pub line_scale: f64,
    pub arc_amplitude: f64,
    pub arc_scale: f64,
}

/// Two point processes `exp(ρ0 + ρ1·X1)` whose decayed distance gives the
/// time-varying covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfounderSpec {
    pub intercepts: [f64; 2],
    pub slopes: [f64; 2],
    pub scale: f64,
    pub amplitude: f64,
}

/// `log λ^W = α0 + αX·X_t + αW·W*_{t−1} + αY·Y*_{t−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreatmentSpec {
    pub intercept: f64,
    pub covariates: [f64; 4],
    pub lag_treatment: f64,
    pub lag_outcome: f64,
    pub scale: f64,
}

/// `log λ^Y = γ0 + γX·X_t + γ2·X2 + γW·W*_{(t−L+1):t} + γY·Y*_{t−1}` with
/// `L = treatment_lags`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeSpec {
    pub intercept: f64,
    pub covariates: [f64; 4],
    pub lagged_x2: f64,
    pub treatment: f64,
    pub treatment_lags: usize,
    pub lag_outcome: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub window: Window,
    /// Periods used for estimation, after the burn-in.
    pub periods: usize,
    pub burn_in: usize,
    /// Quadrature nodes per axis for propensity integrals.
    pub resolution: usize,
    pub roads: RoadSpec,
    pub confounders: ConfounderSpec,
    pub treatment: TreatmentSpec,
    pub outcome: OutcomeSpec,
}

impl DgpSpec {
    /// The shipped calibrated defaults.
    pub fn default_spec() -> Self {
        Self::from_toml(DEFAULT_SPEC).expect("shipped spec parses")
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let spec: DgpSpec = toml::from_str(text).map_err(|e| SimError::Format {
            path: "<inline>".into(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            SimError::Format { message, .. } => SimError::Format {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn total_periods(&self) -> usize {
        self.burn_in + self.periods
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("roads.line_scale", self.roads.line_scale),
            ("roads.arc_scale", self.roads.arc_scale),
            ("confounders.scale", self.confounders.scale),
            ("treatment.scale", self.treatment.scale),
            ("outcome.scale", self.outcome.scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Spec(format!("{name} must be positive, got {v}")));
            }
        }
        let finite = [
            self.roads.line_amplitude,
            self.roads.arc_amplitude,
            self.confounders.amplitude,
            self.treatment.intercept,
            self.treatment.lag_treatment,
            self.treatment.lag_outcome,
            self.outcome.intercept,
            self.outcome.lagged_x2,
            self.outcome.treatment,
            self.outcome.lag_outcome,
        ]
        .into_iter()
        .chain(self.confounders.intercepts)
        .chain(self.confounders.slopes)
        .chain(self.treatment.covariates)
        .chain(self.outcome.covariates);
        for v in finite {
            if !v.is_finite() {
                return Err(SimError::Spec(format!("non-finite coefficient {v}")));
            }
        }
        if self.roads.line_amplitude < 0.0 || self.roads.arc_amplitude < 0.0 || self.confounders.amplitude < 0.0 {
            return Err(SimError::Spec("decay amplitudes must be nonnegative".into()));
        }
        if self.periods < 2 {
            return Err(SimError::Spec(format!("periods must be at least 2, got {}", self.periods)));
        }
        if self.resolution < 2 {
            return Err(SimError::Spec(format!("resolution must be at least 2, got {}", self.resolution)));
        }
        if self.outcome.treatment_lags == 0 {
            return Err(SimError::Spec("outcome.treatment_lags must be at least 1".into()));
        }
        SegmentSet::new(&self.window, self.roads.lines.clone())?;
        SegmentSet::new(&self.window, self.roads.arcs.clone())?;
        Ok(())
    }
}

/// One realized period: the confounder points and both patterns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimPeriod {
    pub period: u32,
    pub confounder_3: Vec<Point>,
    pub confounder_4: Vec<Point>,
    pub treatment: PointPattern,
    pub outcome: PointPattern,
}

/// A generated series including its burn-in periods; position `i` holds
/// period `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedSeries {
    pub spec: DgpSpec,
    pub seed: u64,
    pub periods: Vec<SimPeriod>,
}

impl SimulatedSeries {
    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    pub fn treatments(&self) -> Vec<PointPattern> {
        self.periods.iter().map(|p| p.treatment.clone()).collect()
    }

    pub fn outcomes(&self) -> Vec<PointPattern> {
        self.periods.iter().map(|p| p.outcome.clone()).collect()
    }

    /// Mean treatment and outcome counts over the post-burn-in periods.
    pub fn mean_counts(&self) -> (f64, f64) {
        let kept = &self.periods[self.spec.burn_in.min(self.periods.len())..];
        let n = kept.len().max(1) as f64;
        (
            kept.iter().map(|p| p.treatment.len() as f64).sum::<f64>() / n,
            kept.iter().map(|p| p.outcome.len() as f64).sum::<f64>() / n,
        )
    }

    /// Rows `t,x,y,type` with type `treatment`, `outcome`, `x3` or `x4`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "y", "type"])?;
        for p in &self.periods {
            let t = p.period.to_string();
            let groups: [(&str, &[Point]); 4] = [
                ("treatment", p.treatment.points()),
                ("outcome", p.outcome.points()),
                ("x3", &p.confounder_3),
                ("x4", &p.confounder_4),
            ];
            for (kind, pts) in groups {
                for q in pts {
                    w.write_record([t.as_str(), &q.x.to_string(), &q.y.to_string(), kind])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Time-varying confounder points of one period.
#[derive(Debug, Clone, Copy)]
pub struct Confounders<'a> {
    pub x3: &'a [Point],
    pub x4: &'a [Point],
}

impl<'a> From<&'a SimPeriod> for Confounders<'a> {
    fn from(p: &'a SimPeriod) -> Self {
        Confounders {
            x3: &p.confounder_3,
            x4: &p.confounder_4,
        }
    }
}

/// The parts of both log-intensities fixed within a period, on the
/// quadrature nodes, with thinning bounds that dominate the full intensities
/// whatever the lagged patterns.
#[derive(Debug, Clone)]
pub struct StaticField {
    pub treatment: Vec<f64>,
    pub outcome: Vec<f64>,
    pub treatment_log_bound: f64,
    pub outcome_log_bound: f64,
}

#[inline]
fn nearest(sets: &[&[Point]], p: Point) -> Option<f64> {
    let mut best = f64::INFINITY;
    for s in sets {
        for q in *s {
            let d = p.dist2(*q);
            if d < best {
                best = d;
            }
        }
    }
    best.is_finite().then(|| best.sqrt())
}

#[inline]
fn decay(sets: &[&[Point]], p: Point, scale: f64) -> f64 {
    nearest(sets, p).map_or(0.0, |d| (-scale * d).exp())
}

/// The compiled design: validated spec, road sets and static node values.
#[derive(Debug, Clone)]
pub struct Dgp {
    spec: DgpSpec,
    grid: QuadratureGrid,
    lines: SegmentSet,
    arcs: SegmentSet,
    x1_nodes: Vec<f64>,
    x2_nodes: Vec<f64>,
    x1_sup: f64,
}

impl Dgp {
    pub fn new(spec: DgpSpec) -> Result<Self, SimError> {
        spec.validate()?;
        let grid = QuadratureGrid::new(spec.window, spec.resolution, spec.resolution)?;
        let lines = SegmentSet::new(&spec.window, spec.roads.lines.clone())?;
        let arcs = SegmentSet::new(&spec.window, spec.roads.arcs.clone())?;
        let mut dgp = Dgp {
            spec,
            grid,
            lines,
            arcs,
            x1_nodes: Vec::new(),
            x2_nodes: Vec::new(),
            x1_sup: 0.0,
        };
        dgp.x1_nodes = dgp.grid.nodes().iter().map(|p| dgp.x1(*p)).collect();
        dgp.x2_nodes = dgp.grid.nodes().iter().map(|p| dgp.x2(*p)).collect();
        // X1 attains its amplitude on the lines themselves
        dgp.x1_sup = if dgp.lines.is_empty() { 0.0 } else { dgp.spec.roads.line_amplitude };
        Ok(dgp)
    }

    pub fn spec(&self) -> &DgpSpec {
        &self.spec
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn window(&self) -> &Window {
        &self.spec.window
    }

    #[inline]
    pub fn x1(&self, p: Point) -> f64 {
        let r = &self.spec.roads;
        self.lines.nearest_distance(p).map_or(0.0, |d| r.line_amplitude * (-r.line_scale * d).exp())
    }

    #[inline]
    pub fn x2(&self, p: Point) -> f64 {
        let r = &self.spec.roads;
        self.arcs.nearest_distance(p).map_or(0.0, |d| r.arc_amplitude * (-r.arc_scale * d).exp())
    }

    #[inline]
    fn confounder_values(&self, p: Point, conf: Confounders) -> (f64, f64) {
        let c = &self.spec.confounders;
        (
            c.amplitude * decay(&[conf.x3], p, c.scale),
            c.amplitude * decay(&[conf.x4], p, c.scale),
        )
    }

    /// `(X1, X2, X3_t, X4_t)` at `p`.
    #[inline]
    pub fn covariates(&self, p: Point, conf: Confounders) -> [f64; 4] {
        let (x3, x4) = self.confounder_values(p, conf);
        [self.x1(p), self.x2(p), x3, x4]
    }

    fn outcome_covariate_coefficients(&self) -> [f64; 4] {
        let o = &self.spec.outcome;
        // X2 is static, so its lag coincides with its current value
        [o.covariates[0], o.covariates[1] + o.lagged_x2, o.covariates[2], o.covariates[3]]
    }

    fn lipschitz(&self, coefs: [f64; 4]) -> f64 {
        let r = &self.spec.roads;
        let c = &self.spec.confounders;
        let l = [
            r.line_amplitude * r.line_scale,
            r.arc_amplitude * r.arc_scale,
            c.amplitude * c.scale,
            c.amplitude * c.scale,
        ];
        coefs.iter().zip(l).map(|(b, l)| b.abs() * l).sum()
    }

    pub fn static_field(&self, conf: Confounders) -> StaticField {
        let a = &self.spec.treatment;
        let g = self.outcome_covariate_coefficients();
        let o = &self.spec.outcome;
        let n = self.grid.len();
        let mut tw = Vec::with_capacity(n);
        let mut ty = Vec::with_capacity(n);
        for (k, p) in self.grid.nodes().iter().enumerate() {
            let (x3, x4) = self.confounder_values(*p, conf);
            let x = [self.x1_nodes[k], self.x2_nodes[k], x3, x4];
            tw.push(a.intercept + dot4(a.covariates, x));
            ty.push(o.intercept + dot4(g, x));
        }
        let hd = self.grid.half_diagonal();
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        StaticField {
            treatment_log_bound: max(&tw)
                + self.lipschitz(a.covariates) * hd
                + a.lag_treatment.max(0.0)
                + a.lag_outcome.max(0.0),
            outcome_log_bound: max(&ty) + self.lipschitz(g) * hd + o.treatment.max(0.0) + o.lag_outcome.max(0.0),
            treatment: tw,
            outcome: ty,
        }
    }

    /// `log λ^W_t(p)` given the previous period's patterns.
    #[inline]
    pub fn treatment_log_intensity(&self, p: Point, conf: Confounders, w_prev: &[Point], y_prev: &[Point]) -> f64 {
        let a = &self.spec.treatment;
        a.intercept
            + dot4(a.covariates, self.covariates(p, conf))
            + a.lag_treatment * decay(&[w_prev], p, a.scale)
            + a.lag_outcome * decay(&[y_prev], p, a.scale)
    }

    /// `log λ^Y_t(p)`; `w_recent` holds the treatment patterns of periods
    /// `t−L+1..t` (any order).
    #[inline]
    pub fn outcome_log_intensity(&self, p: Point, conf: Confounders, w_recent: &[&[Point]], y_prev: &[Point]) -> f64 {
        let o = &self.spec.outcome;
        o.intercept
            + dot4(self.outcome_covariate_coefficients(), self.covariates(p, conf))
            + o.treatment * decay(w_recent, p, o.scale)
            + o.lag_outcome * decay(&[y_prev], p, o.scale)
    }

    fn confounder_log_bound(&self, j: usize) -> f64 {
        let c = &self.spec.confounders;
        c.intercepts[j] + c.slopes[j].max(0.0) * self.x1_sup
    }

    pub fn sample_confounder<R: Rng + ?Sized>(&self, j: usize, rng: &mut R) -> Result<Vec<Point>, SimError> {
        let c = &self.spec.confounders;
        thin(self.window(), self.confounder_log_bound(j), 0.0, rng, |p| c.intercepts[j] + c.slopes[j] * self.x1(p), |_| 0.0)
    }

    pub fn sample_treatment<R: Rng + ?Sized>(
        &self,
        field: &StaticField,
        conf: Confounders,
        w_prev: &[Point],
        y_prev: &[Point],
        rng: &mut R,
    ) -> Result<Vec<Point>, SimError> {
        let a = &self.spec.treatment;
        let lag_bound = a.lag_treatment.max(0.0) + a.lag_outcome.max(0.0);
        thin(
            self.window(),
            field.treatment_log_bound - lag_bound,
            lag_bound,
            rng,
            |p| a.intercept + dot4(a.covariates, self.covariates(p, conf)),
            |p| a.lag_treatment * decay(&[w_prev], p, a.scale) + a.lag_outcome * decay(&[y_prev], p, a.scale),
        )
    }

    pub fn sample_outcome<R: Rng + ?Sized>(
        &self,
        field: &StaticField,
        conf: Confounders,
        w_recent: &[&[Point]],
        y_prev: &[Point],
        rng: &mut R,
    ) -> Result<Vec<Point>, SimError> {
        let o = &self.spec.outcome;
        let g = self.outcome_covariate_coefficients();
        let lag_bound = o.treatment.max(0.0) + o.lag_outcome.max(0.0);
        thin(
            self.window(),
            field.outcome_log_bound - lag_bound,
            lag_bound,
            rng,
            |p| o.intercept + dot4(g, self.covariates(p, conf)),
            |p| o.treatment * decay(w_recent, p, o.scale) + o.lag_outcome * decay(&[y_prev], p, o.scale),
        )
    }

    /// `log p_t(w)` under the true treatment law, with the same midpoint
    /// quadrature the propensity fit uses.
    pub fn treatment_log_density(
        &self,
        field: &StaticField,
        conf: Confounders,
        w: &[Point],
        w_prev: &[Point],
        y_prev: &[Point],
    ) -> f64 {
        let integral = self.treatment_integral(field, w_prev, y_prev);
        self.treatment_log_density_given(integral, conf, w, w_prev, y_prev)
    }

    /// Node quadrature of `∫ λ^W_t` for the given history.
    pub fn treatment_integral(&self, field: &StaticField, w_prev: &[Point], y_prev: &[Point]) -> f64 {
        let a = &self.spec.treatment;
        let mut sum = 0.0;
        for (k, p) in self.grid.nodes().iter().enumerate() {
            sum += (field.treatment[k]
                + a.lag_treatment * decay(&[w_prev], *p, a.scale)
                + a.lag_outcome * decay(&[y_prev], *p, a.scale))
            .exp();
        }
        self.grid.cell_area() * sum
    }

    /// [`Dgp::treatment_log_density`] with a precomputed integral.
    pub fn treatment_log_density_given(
        &self,
        integral: f64,
        conf: Confounders,
        w: &[Point],
        w_prev: &[Point],
        y_prev: &[Point],
    ) -> f64 {
        let mut acc = self.window().area() - integral;
        for p in w {
            acc += self.treatment_log_intensity(*p, conf, w_prev, y_prev);
        }
        acc
    }

    /// Generates burn-in plus estimation periods.
    pub fn generate(&self, seed: u64) -> Result<SimulatedSeries, SimError> {
        let tree = SeedTree::new(seed);
        let n = self.spec.total_periods();
        let lags = self.spec.outcome.treatment_lags;
        let window = *self.window();
        let mut periods: Vec<SimPeriod> = Vec::with_capacity(n);
        for i in 0..n {
            let t = i as u32 + 1;
            let node = tree.child(t as u64);
            let x3 = self.sample_confounder(0, &mut node.child(purpose::CONFOUNDER_3).stream())?;
            let x4 = self.sample_confounder(1, &mut node.child(purpose::CONFOUNDER_4).stream())?;
            let conf = Confounders { x3: &x3, x4: &x4 };
            let field = self.static_field(conf);
            let (w_prev, y_prev): (&[Point], &[Point]) = match i {
                0 => (&[], &[]),
                _ => (periods[i - 1].treatment.points(), periods[i - 1].outcome.points()),
            };
            let w = self.sample_treatment(&field, conf, w_prev, y_prev, &mut node.child(purpose::TREATMENT).stream())?;
            let mut recent: Vec<&[Point]> = vec![&w];
            for back in 1..lags.min(i + 1) {
                recent.push(periods[i - back].treatment.points());
            }
            let y = self.sample_outcome(&field, conf, &recent, y_prev, &mut node.child(purpose::OUTCOME).stream())?;
            periods.push(SimPeriod {
                period: t,
                treatment: PointPattern::new(window, t, w)?,
                outcome: PointPattern::new(window, t, y)?,
                confounder_3: x3,
                confounder_4: x4,
            });
        }
        Ok(SimulatedSeries {
            spec: self.spec.clone(),
            seed,
            periods,
        })
    }

    /// Features of the correctly specified treatment model, in the order of
    /// [`Dgp::treatment_coefficients`].
    pub fn treatment_features(&self) -> Vec<FeatureSpec> {
        let scale = self.spec.treatment.scale;
        let mut f = vec![FeatureSpec::Intercept];
        for name in ["x1", "x2", "x3", "x4"] {
            f.push(FeatureSpec::Covariate { name: name.into() });
        }
        for source in [LagSource::Treatment, LagSource::Outcome] {
            f.push(FeatureSpec::LagDecay {
                source,
                lags: vec![1],
                scale,
                amplitude: 1.0,
            });
        }
        f
    }

    pub fn treatment_coefficients(&self) -> Vec<f64> {
        let a = &self.spec.treatment;
        let mut c = vec![a.intercept];
        c.extend(a.covariates);
        c.extend([a.lag_treatment, a.lag_outcome]);
        c
    }

    fn feature_row(&self, out: &mut Vec<f64>, x: [f64; 4], wd: f64, yd: f64) {
        out.push(1.0);
        out.extend(x);
        out.extend([wd, yd]);
    }

    /// Design rows of the correct treatment model for one series position.
    pub fn period_design(&self, series: &SimulatedSeries, pos: usize) -> PeriodDesign {
        let p = &series.periods[pos];
        let conf = Confounders::from(p);
        let (w_prev, y_prev): (&[Point], &[Point]) = match pos {
            0 => (&[], &[]),
            _ => (series.periods[pos - 1].treatment.points(), series.periods[pos - 1].outcome.points()),
        };
        let s = self.spec.treatment.scale;
        let dim = 7;
        let mut nodes = Vec::with_capacity(self.grid.len() * dim);
        for (k, q) in self.grid.nodes().iter().enumerate() {
            let (x3, x4) = self.confounder_values(*q, conf);
            let x = [self.x1_nodes[k], self.x2_nodes[k], x3, x4];
            self.feature_row(&mut nodes, x, decay(&[w_prev], *q, s), decay(&[y_prev], *q, s));
        }
        let mut points = Vec::with_capacity(p.treatment.len() * dim);
        for q in p.treatment.points() {
            let x = self.covariates(*q, conf);
            self.feature_row(&mut points, x, decay(&[w_prev], *q, s), decay(&[y_prev], *q, s));
        }
        PeriodDesign {
            period: p.period,
            nodes,
            points,
        }
    }

    /// Design of the correct treatment model over series positions `range`.
    pub fn treatment_design(&self, series: &SimulatedSeries, range: std::ops::Range<usize>) -> Result<PropensityDesign, SimError> {
        use rayon::prelude::*;
        let periods: Vec<PeriodDesign> = range.into_par_iter().map(|i| self.period_design(series, i)).collect();
        Ok(PropensityDesign::from_periods(self.treatment_features(), &self.grid, periods)?)
    }

    /// True `log p_t(W_t)` for every position of the series.
    pub fn true_log_propensity(&self, series: &SimulatedSeries) -> Vec<f64> {
        use rayon::prelude::*;
        (0..series.len())
            .into_par_iter()
            .map(|i| {
                let p = &series.periods[i];
                let conf = Confounders::from(p);
                let field = self.static_field(conf);
                let (w_prev, y_prev): (&[Point], &[Point]) = match i {
                    0 => (&[], &[]),
                    _ => (series.periods[i - 1].treatment.points(), series.periods[i - 1].outcome.points()),
                };
                self.treatment_log_density(&field, conf, p.treatment.points(), w_prev, y_prev)
            })
            .collect()
    }

    /// The four covariate surfaces of a period, keyed `x1`..`x4`.
    pub fn covariate_surfaces(&self, conf: Confounders) -> Result<BTreeMap<String, Surface>, SimError> {
        let r = &self.spec.roads;
        let c = &self.spec.confounders;
        let mut m = BTreeMap::new();
        m.insert(
            "x1".to_string(),
            decay_surface(DecayTargets::Segments(self.lines.clone().into()), r.line_scale, r.line_amplitude)?,
        );
        m.insert(
            "x2".to_string(),
            decay_surface(DecayTargets::Segments(self.arcs.clone().into()), r.arc_scale, r.arc_amplitude)?,
        );
        m.insert("x3".to_string(), point_decay(conf.x3, c.scale, c.amplitude)?);
        m.insert("x4".to_string(), point_decay(conf.x4, c.scale, c.amplitude)?);
        Ok(m)
    }

    /// The treatment intensity of a period as a generic log-linear surface.
    pub fn treatment_intensity(&self, conf: Confounders, w_prev: &[Point], y_prev: &[Point]) -> Result<LogLinearIntensity, SimError> {
        let a = &self.spec.treatment;
        let mut features: Vec<Surface> = self.covariate_surfaces(conf)?.into_values().collect();
        features.push(point_decay(w_prev, a.scale, 1.0)?);
        features.push(point_decay(y_prev, a.scale, 1.0)?);
        Ok(LogLinearIntensity::from_parts(self.treatment_coefficients(), prepend_one(features))?)
    }

    /// The outcome intensity of a period as a generic log-linear surface.
    pub fn outcome_intensity(&self, conf: Confounders, w_recent: &[&[Point]], y_prev: &[Point]) -> Result<LogLinearIntensity, SimError> {
        let o = &self.spec.outcome;
        let mut features: Vec<Surface> = self.covariate_surfaces(conf)?.into_values().collect();
        let union: Vec<Point> = w_recent.iter().flat_map(|s| s.iter().copied()).collect();
        features.push(point_decay(&union, o.scale, 1.0)?);
        features.push(point_decay(y_prev, o.scale, 1.0)?);
        let mut coefs = vec![o.intercept];
        coefs.extend(self.outcome_covariate_coefficients());
        coefs.extend([o.treatment, o.lag_outcome]);
        Ok(LogLinearIntensity::from_parts(coefs, prepend_one(features))?)
    }
}

fn prepend_one(mut features: Vec<Surface>) -> Vec<Surface> {
    features.insert(0, Surface::Constant(1.0));
    features
}

#[inline]
fn dot4(a: [f64; 4], b: [f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// Thinning of `exp(a(p) + b(p))` with `a ≤ bound_a` and `b ≤ bound_b`:
/// candidates at rate `exp(bound_a + bound_b)` pass two independent
/// acceptance steps, so `b` is only evaluated for survivors of `a`. A breach
/// means an analytic bound was wrong; the draw is repeated with that bound
/// raised past the offending value.
fn thin<R: Rng + ?Sized>(
    window: &Window,
    mut bound_a: f64,
    mut bound_b: f64,
    rng: &mut R,
    a: impl Fn(Point) -> f64,
    b: impl Fn(Point) -> f64,
) -> Result<Vec<Point>, SimError> {
    'retry: loop {
        let candidates = uniform_points(window, (bound_a + bound_b).exp(), rng);
        let mut kept = Vec::new();
        for p in candidates {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            let la = a(p);
            if la > bound_a {
                log::warn!("thinning bound exceeded ({la} > {bound_a}); resampling with a raised bound");
                bound_a = la + std::f64::consts::LN_2;
                continue 'retry;
            }
            if u >= (la - bound_a).exp() {
                continue;
            }
            let lb = b(p);
            if lb > bound_b {
                log::warn!("thinning bound exceeded ({lb} > {bound_b}); resampling with a raised bound");
                bound_b = lb + std::f64::consts::LN_2;
                continue 'retry;
            }
            if v < (lb - bound_b).exp() {
                kept.push(p);
            }
        }
        return Ok(kept);
    }
}

pub fn generate_series(spec: &DgpSpec, seed: u64) -> Result<SimulatedSeries, SimError> {
    Dgp::new(spec.clone())?.generate(seed)
}

/// Region helper for the three regions used throughout the study.
pub fn study_regions() -> Vec<Rect> {
    vec![
        Rect::new(0.0, 0.0, 1.0, 1.0),
        Rect::new(0.0, 0.0, 0.5, 0.5),
        Rect::new(0.75, 0.75, 1.0, 1.0),
    ]
}

#[cfg(test)]
mod tests;

//! Treatment-assignment models: log-linear Poisson process intensities on
//! history-derived features, fitted by maximum likelihood on a quadrature
//! grid, plus the weighted-refit balance diagnostic.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point, PointPattern};
use crate::numeric::{quantile, two_sided_p};
use crate::pointprocess::{LogDensity, PointProcessError, PoissonProcess};
use crate::surfaces::{decay_surface, DecayTargets, LogLinearIntensity, QuadratureGrid, Surface, SurfaceError};

const MAX_ITERATIONS: usize = 100;
const GRADIENT_TOLERANCE: f64 = 1e-8;
const DIVERGENCE_NORM: f64 = 50.0;

#[derive(Debug, Error)]
pub enum PropensityError {
    #[error("no usable periods to fit (all {dropped} lacked a complete history)")]
    NoPeriods { dropped: usize },
    #[error("no treatment events in the {periods} fitted periods; the likelihood has no maximum")]
    NoEvents { periods: usize },
    #[error("{frames} history frames but {patterns} treatment patterns")]
    LengthMismatch { frames: usize, patterns: usize },
    #[error("weights must be nonnegative and finite (period index {index}: {value})")]
    BadWeight { index: usize, value: f64 },
    #[error("history frame for period {period} has no covariate named {name:?}")]
    MissingCovariate { period: u32, name: String },
    #[error("feature {feature:?} is not finite at ({x}, {y}) in period {period}")]
    NonFiniteFeature { feature: String, period: u32, x: f64, y: f64 },
    #[error("ill-conditioned fit: coefficient on {feature:?} ran away (|beta| = {norm:.3e})")]
    IllConditioned { feature: String, norm: f64 },
    #[error("degenerate balance weights: {0}")]
    DegenerateWeights(String),
    #[error("model has {model} features but the design has {design}")]
    DesignMismatch { model: usize, design: usize },
    #[error("invalid model file: {0}")]
    Format(String),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error(transparent)]
    PointProcess(#[from] PointProcessError),
}

/// Which lagged series a decay feature measures distance to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagSource {
    Treatment,
    Outcome,
}

/// A feature constructor: maps a history frame to a surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    Intercept,
    Covariate {
        name: String,
    },
    /// `amplitude · exp(−scale · d)`, `d` the distance to the union of the
    /// source patterns at the listed lags (1 = previous period).
    LagDecay {
        source: LagSource,
        lags: Vec<usize>,
        scale: f64,
        amplitude: f64,
    },
}

impl FeatureSpec {
    pub fn name(&self) -> String {
        match self {
            FeatureSpec::Intercept => "intercept".into(),
            FeatureSpec::Covariate { name } => name.clone(),
            FeatureSpec::LagDecay { source, lags, .. } => {
                let s = match source {
                    LagSource::Treatment => "W",
                    LagSource::Outcome => "Y",
                };
                let lags: Vec<String> = lags.iter().map(|l| l.to_string()).collect();
                format!("{s}*[{}]", lags.join(","))
            }
        }
    }

    fn max_lag(&self) -> usize {
        match self {
            FeatureSpec::LagDecay { lags, .. } => lags.iter().copied().max().unwrap_or(0),
            _ => 0,
        }
    }

    pub fn surface(&self, frame: &HistoryFrame) -> Result<Surface, PropensityError> {
        match self {
            FeatureSpec::Intercept => Ok(Surface::Constant(1.0)),
            FeatureSpec::Covariate { name } => {
                frame
                    .covariates
                    .get(name)
                    .cloned()
                    .ok_or_else(|| PropensityError::MissingCovariate {
                        period: frame.period,
                        name: name.clone(),
                    })
            }
            FeatureSpec::LagDecay {
                source,
                lags,
                scale,
                amplitude,
            } => {
                let series = match source {
                    LagSource::Treatment => &frame.treatments,
                    LagSource::Outcome => &frame.outcomes,
                };
                let mut points: Vec<Point> = Vec::new();
                for &lag in lags {
                    // lags reaching before the series contribute nothing
                    if let Some(p) = lag.checked_sub(1).and_then(|i| series.get(i)) {
                        points.extend_from_slice(p.points());
                    }
                }
                Ok(decay_surface(DecayTargets::Points(points.into()), *scale, *amplitude)?)
            }
        }
    }
}

/// Everything realized before the treatment of `period`: lagged patterns
/// (index 0 is lag 1) and the period's covariate surfaces.
#[derive(Debug, Clone)]
pub struct HistoryFrame {
    pub period: u32,
    pub treatments: Vec<PointPattern>,
    pub outcomes: Vec<PointPattern>,
    pub covariates: BTreeMap<String, Surface>,
}

impl HistoryFrame {
    /// Number of complete lags available in both series.
    pub fn depth(&self) -> usize {
        self.treatments.len().min(self.outcomes.len())
    }

    /// Frames for every period of a series. `treatments[i]`, `outcomes[i]`
    /// and `covariates[i]` belong to period `i + 1`.
    pub fn from_series(
        treatments: &[PointPattern],
        outcomes: &[PointPattern],
        covariates: &[BTreeMap<String, Surface>],
        max_lag: usize,
    ) -> Vec<HistoryFrame> {
        (0..treatments.len())
            .map(|i| {
                let lo = i.saturating_sub(max_lag);
                HistoryFrame {
                    period: i as u32 + 1,
                    treatments: treatments[lo..i].iter().rev().cloned().collect(),
                    outcomes: outcomes[lo..i].iter().rev().cloned().collect(),
                    covariates: covariates.get(i).cloned().unwrap_or_default(),
                }
            })
            .collect()
    }
}

/// Feature values of one period at the quadrature nodes and at the
/// treatment points, row-major with one row per location.
#[derive(Debug, Clone)]
pub struct PeriodDesign {
    pub period: u32,
    pub nodes: Vec<f64>,
    pub points: Vec<f64>,
}

impl PeriodDesign {
    pub fn point_count(&self, p: usize) -> usize {
        self.points.len() / p
    }
}

/// The discretized likelihood's data: per-period feature matrices sharing one
/// quadrature weight.
#[derive(Debug, Clone)]
pub struct PropensityDesign {
    features: Vec<FeatureSpec>,
    names: Vec<String>,
    cell_area: f64,
    area: f64,
    periods: Vec<PeriodDesign>,
    dropped: usize,
}

impl PropensityDesign {
    /// Evaluates every feature of every complete frame. Frames with fewer
    /// lags than the deepest feature needs are dropped.
    pub fn build(
        features: &[FeatureSpec],
        frames: &[HistoryFrame],
        treatments: &[PointPattern],
        grid: &QuadratureGrid,
    ) -> Result<Self, PropensityError> {
        if frames.len() != treatments.len() {
            return Err(PropensityError::LengthMismatch {
                frames: frames.len(),
                patterns: treatments.len(),
            });
        }
        let need = features.iter().map(FeatureSpec::max_lag).max().unwrap_or(0);
        let names: Vec<String> = features.iter().map(FeatureSpec::name).collect();
        let keep: Vec<usize> = (0..frames.len()).filter(|&i| frames[i].depth() >= need).collect();
        let periods = keep
            .par_iter()
            .map(|&i| {
                let surfaces = features
                    .iter()
                    .map(|f| f.surface(&frames[i]))
                    .collect::<Result<Vec<_>, _>>()?;
                let eval = |locs: &[Point]| -> Result<Vec<f64>, PropensityError> {
                    let mut out = Vec::with_capacity(locs.len() * surfaces.len());
                    for p in locs {
                        for (k, s) in surfaces.iter().enumerate() {
                            let v = s.value(*p);
                            if !v.is_finite() {
                                return Err(PropensityError::NonFiniteFeature {
                                    feature: names[k].clone(),
                                    period: frames[i].period,
                                    x: p.x,
                                    y: p.y,
                                });
                            }
                            out.push(v);
                        }
                    }
                    Ok(out)
                };
                Ok(PeriodDesign {
                    period: frames[i].period,
                    nodes: eval(grid.nodes())?,
                    points: eval(treatments[i].points())?,
                })
            })
            .collect::<Result<Vec<_>, PropensityError>>()?;
        Ok(PropensityDesign {
            features: features.to_vec(),
            names,
            cell_area: grid.cell_area(),
            area: grid.window().area(),
            periods,
            dropped: frames.len() - keep.len(),
        })
    }

    /// Assembles a design from precomputed feature rows.
    pub fn from_periods(
        features: Vec<FeatureSpec>,
        grid: &QuadratureGrid,
        periods: Vec<PeriodDesign>,
    ) -> Result<Self, PropensityError> {
        let p = features.len();
        for d in &periods {
            if d.nodes.len() != grid.len() * p || d.points.len() % p != 0 {
                return Err(PropensityError::DesignMismatch {
                    model: p,
                    design: d.nodes.len() / grid.len().max(1),
                });
            }
        }
        Ok(PropensityDesign {
            names: features.iter().map(FeatureSpec::name).collect(),
            features,
            cell_area: grid.cell_area(),
            area: grid.window().area(),
            periods,
            dropped: 0,
        })
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn periods(&self) -> &[PeriodDesign] {
        &self.periods
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    /// `log p_t(W_t)` for every period under coefficients `beta`.
    pub fn log_densities(&self, beta: &[f64]) -> Vec<f64> {
        let p = self.dim();
        self.periods
            .par_iter()
            .map(|d| {
                let mut integral = 0.0;
                for row in d.nodes.chunks_exact(p) {
                    integral += dot(beta, row).exp();
                }
                let mut acc = self.area - self.cell_area * integral;
                for row in d.points.chunks_exact(p) {
                    acc += dot(beta, row);
                }
                acc
            })
            .collect()
    }

    /// Weighted log-likelihood, score and negative Hessian at `beta`, plus
    /// the per-period scores.
    fn evaluate(&self, beta: &[f64], weights: &[f64]) -> Evaluation {
        let p = self.dim();
        let parts: Vec<(f64, Vec<f64>, Vec<f64>)> = self
            .periods
            .par_iter()
            .map(|d| {
                let mut integral = 0.0;
                let mut grad = vec![0.0; p];
                let mut info = vec![0.0; p * p];
                for row in d.nodes.chunks_exact(p) {
                    let lam = self.cell_area * dot(beta, row).exp();
                    integral += lam;
                    for a in 0..p {
                        let la = lam * row[a];
                        grad[a] -= la;
                        for b in a..p {
                            info[a * p + b] += la * row[b];
                        }
                    }
                }
                let mut ll = self.area - integral;
                for row in d.points.chunks_exact(p) {
                    ll += dot(beta, row);
                    for a in 0..p {
                        grad[a] += row[a];
                    }
                }
                (ll, grad, info)
            })
            .collect();
        let mut ll = 0.0;
        let mut grad = vec![0.0; p];
        let mut info = DMatrix::zeros(p, p);
        let mut scores = Vec::with_capacity(parts.len());
        for ((l, g, h), w) in parts.into_iter().zip(weights) {
            ll += w * l;
            for a in 0..p {
                grad[a] += w * g[a];
                for b in a..p {
                    info[(a, b)] += w * h[a * p + b];
                }
            }
            scores.push(g);
        }
        for a in 0..p {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }
        Evaluation {
            log_likelihood: ll,
            gradient: grad,
            information: info,
            scores,
        }
    }

    /// Weighted log-likelihood only.
    pub fn log_likelihood(&self, beta: &[f64], weights: Option<&[f64]>) -> f64 {
        let ld = self.log_densities(beta);
        match weights {
            Some(w) => ld.iter().zip(w).map(|(l, w)| l * w).sum(),
            None => ld.iter().sum(),
        }
    }

    /// Analytic score of the weighted log-likelihood.
    pub fn score(&self, beta: &[f64], weights: Option<&[f64]>) -> Vec<f64> {
        let w = weights.map(<[f64]>::to_vec).unwrap_or_else(|| vec![1.0; self.periods.len()]);
        self.evaluate(beta, &w).gradient
    }
}

struct Evaluation {
    log_likelihood: f64,
    gradient: Vec<f64>,
    information: DMatrix<f64>,
    scores: Vec<Vec<f64>>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// How coefficient standard errors were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceKind {
    /// Inverse observed information.
    ObservedInformation,
    /// Sandwich `A⁻¹ B A⁻¹` with per-period weighted scores, for weighted fits.
    Robust,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_max_norm: f64,
    pub periods_used: usize,
    pub periods_dropped: usize,
    pub weighted: bool,
    pub variance_kind: VarianceKind,
    /// Observed information, row-major.
    pub information: Vec<f64>,
    /// Coefficient covariance, row-major.
    pub covariance: Vec<f64>,
}

/// A fitted (or fixed) log-linear propensity model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropensityModel {
    pub features: Vec<FeatureSpec>,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub diagnostics: Option<FitDiagnostics>,
}

impl PropensityModel {
    /// A model with known coefficients, e.g. the data-generating law.
    pub fn fixed(features: Vec<FeatureSpec>, coefficients: Vec<f64>) -> Result<Self, PropensityError> {
        if features.len() != coefficients.len() {
            return Err(PropensityError::DesignMismatch {
                model: coefficients.len(),
                design: features.len(),
            });
        }
        Ok(PropensityModel {
            names: features.iter().map(FeatureSpec::name).collect(),
            features,
            coefficients,
            diagnostics: None,
        })
    }

    pub fn standard_errors(&self) -> Option<Vec<f64>> {
        let d = self.diagnostics.as_ref()?;
        let p = self.coefficients.len();
        Some((0..p).map(|i| d.covariance[i * p + i].max(0.0).sqrt()).collect())
    }

    /// Two-sided Wald p-values.
    pub fn p_values(&self) -> Option<Vec<f64>> {
        let se = self.standard_errors()?;
        Some(self.coefficients.iter().zip(se).map(|(b, s)| two_sided_p(b / s)).collect())
    }

    pub fn intensity(&self, frame: &HistoryFrame) -> Result<LogLinearIntensity, PropensityError> {
        let surfaces = self
            .features
            .iter()
            .map(|f| f.surface(frame))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(LogLinearIntensity::from_parts(self.coefficients.clone(), surfaces)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PropensityError> {
        let m: PropensityModel = serde_json::from_str(text).map_err(|e| PropensityError::Format(e.to_string()))?;
        if m.features.len() != m.coefficients.len() || m.names.len() != m.features.len() {
            return Err(PropensityError::Format("feature and coefficient counts differ".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, PropensityError> {
        let text = std::fs::read_to_string(path).map_err(|e| PropensityError::Format(format!("{}: {e}", path.display())))?;
        PropensityModel::from_json(&text)
    }
}

fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(b));
    }
    a.clone().lu().solve(b)
}

fn invert(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| a.clone().try_inverse())
        .unwrap_or_else(|| DMatrix::from_element(a.nrows(), a.ncols(), f64::NAN))
}

fn start_value(design: &PropensityDesign, weights: &[f64]) -> Vec<f64> {
    let mut beta = vec![0.0; design.dim()];
    let Some(k) = design.features.iter().position(|f| *f == FeatureSpec::Intercept) else {
        return beta;
    };
    let p = design.dim();
    let (mut n, mut tot) = (0.0, 0.0);
    for (d, w) in design.periods.iter().zip(weights) {
        n += w * d.point_count(p) as f64;
        tot += w * design.area;
    }
    if n > 0.0 && tot > 0.0 {
        beta[k] = (n / tot).ln();
    }
    beta
}

/// Maximizes the (weighted) discretized Poisson likelihood by Newton's
/// method with step halving. Non-convergence is reported, not raised.
pub fn fit(design: &PropensityDesign, weights: Option<&[f64]>) -> Result<PropensityModel, PropensityError> {
    let t = design.periods.len();
    if t == 0 {
        return Err(PropensityError::NoPeriods { dropped: design.dropped });
    }
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != t {
                return Err(PropensityError::LengthMismatch {
                    frames: t,
                    patterns: w.len(),
                });
            }
            if let Some((i, v)) = w.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
                return Err(PropensityError::BadWeight { index: i, value: *v });
            }
            w.to_vec()
        }
        None => vec![1.0; t],
    };
    let p = design.dim();
    let events: f64 = design.periods.iter().zip(&w).map(|(d, wt)| wt * d.point_count(p) as f64).sum();
    if !(events > 0.0) {
        return Err(PropensityError::NoEvents { periods: t });
    }
    let mut beta = start_value(design, &w);
    let mut ev = design.evaluate(&beta, &w);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        let gmax = ev.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax < GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        let g = DVector::from_vec(ev.gradient.clone());
        let Some(step) = solve_spd(&ev.information, &g) else {
            break;
        };
        let decrement = g.dot(&step);
        iterations += 1;
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            let cev = design.evaluate(&cand, &w);
            if cev.log_likelihood.is_finite() && cev.log_likelihood >= ev.log_likelihood {
                accepted = Some((cand, cev));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, cev)) = accepted else {
            // no ascent possible at machine precision
            converged = decrement.abs() < 1e-12 * (1.0 + ev.log_likelihood.abs());
            break;
        };
        let norm = cand.iter().map(|b| b * b).sum::<f64>().sqrt();
        if norm > DIVERGENCE_NORM {
            let (k, b) = cand
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .expect("nonempty");
            return Err(PropensityError::IllConditioned {
                feature: design.names[k].clone(),
                norm: b.abs(),
            });
        }
        let stalled = cev.log_likelihood - ev.log_likelihood <= 1e-15 * ev.log_likelihood.abs() && decrement.abs() < 1e-12;
        beta = cand;
        ev = cev;
        if stalled {
            converged = true;
            break;
        }
    }
    let gmax = ev.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    converged |= gmax < GRADIENT_TOLERANCE;

    let weighted = weights.is_some();
    let a_inv = invert(&ev.information);
    let (covariance, variance_kind) = if weighted {
        let mut b = DMatrix::zeros(p, p);
        for (s, wt) in ev.scores.iter().zip(&w) {
            let v = DVector::from_iterator(p, s.iter().map(|x| wt * x));
            b += &v * v.transpose();
        }
        (&a_inv * b * &a_inv, VarianceKind::Robust)
    } else {
        (a_inv, VarianceKind::ObservedInformation)
    };
    Ok(PropensityModel {
        features: design.features.clone(),
        names: design.names.clone(),
        coefficients: beta,
        diagnostics: Some(FitDiagnostics {
            log_likelihood: ev.log_likelihood,
            iterations,
            converged,
            gradient_max_norm: gmax,
            periods_used: t,
            periods_dropped: design.dropped,
            weighted,
            variance_kind,
            information: ev.information.transpose().as_slice().to_vec(),
            covariance: covariance.transpose().as_slice().to_vec(),
        }),
    })
}

/// Builds the design from frames and fits it.
pub fn fit_frames(
    features: &[FeatureSpec],
    frames: &[HistoryFrame],
    treatments: &[PointPattern],
    grid: &QuadratureGrid,
    weights: Option<&[f64]>,
) -> Result<PropensityModel, PropensityError> {
    let design = PropensityDesign::build(features, frames, treatments, grid)?;
    fit(&design, weights)
}

/// `log p_t(w)` under the model for the history in `frame`.
pub fn log_propensity(
    model: &PropensityModel,
    frame: &HistoryFrame,
    pattern: &PointPattern,
    grid: &QuadratureGrid,
) -> Result<LogDensity, PropensityError> {
    let process = PoissonProcess::new(model.intensity(frame)?, grid)?;
    Ok(process.log_density(pattern, grid)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BalanceRow {
    pub feature: String,
    pub unweighted_coefficient: f64,
    pub unweighted_se: f64,
    pub unweighted_p: f64,
    pub weighted_coefficient: f64,
    pub weighted_se: f64,
    pub weighted_p: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BalanceReport {
    pub rows: Vec<BalanceRow>,
    pub truncation_quantile: f64,
    pub truncation_threshold: f64,
    pub truncated_periods: usize,
    pub effective_sample_size: f64,
    pub weighted_converged: bool,
}

impl BalanceReport {
    pub fn row(&self, feature: &str) -> Option<&BalanceRow> {
        self.rows.iter().find(|r| r.feature == feature)
    }
}

/// Inverse-propensity balance weights. Each period's weight is
/// `q(W_t) / p_t(W_t)` with `q` the homogeneous Poisson law at the pooled
/// rate, normalized to mean one, then truncated above at the given quantile.
pub fn balance_weights(design: &PropensityDesign, log_propensity: &[f64], truncation_quantile: f64) -> Result<(Vec<f64>, f64, usize), PropensityError> {
    if !(truncation_quantile > 0.0 && truncation_quantile <= 1.0) {
        return Err(PropensityError::DegenerateWeights(format!(
            "truncation quantile {truncation_quantile} outside (0, 1]"
        )));
    }
    let p = design.dim();
    let counts: Vec<f64> = design.periods.iter().map(|d| d.point_count(p) as f64).collect();
    let rate = counts.iter().sum::<f64>() / (counts.len() as f64 * design.area);
    let log_q: Vec<f64> = counts
        .iter()
        .map(|n| design.area - rate * design.area + if *n > 0.0 { n * rate.ln() } else { 0.0 })
        .collect();
    let lw: Vec<f64> = log_q.iter().zip(log_propensity).map(|(q, p)| q - p).collect();
    let top = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(PropensityError::DegenerateWeights("log-weights are not finite".into()));
    }
    let mut w: Vec<f64> = lw.iter().map(|l| (l - top).exp()).collect();
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(PropensityError::DegenerateWeights("weights sum to zero".into()));
    }
    for v in &mut w {
        *v /= mean;
    }
    let threshold = quantile(&w, truncation_quantile);
    let mut truncated = 0;
    if truncation_quantile < 1.0 {
        for v in &mut w {
            if *v > threshold {
                *v = threshold;
                truncated += 1;
            }
        }
    }
    if !w.iter().any(|v| *v > 0.0) {
        return Err(PropensityError::DegenerateWeights("all weights truncated to zero".into()));
    }
    Ok((w, threshold, truncated))
}

/// Refits the model's specification with and without inverse-propensity
/// weights taken from `weights_model`, reporting Wald tests per feature.
pub fn balance_check(
    weights_model: &PropensityModel,
    design: &PropensityDesign,
    truncation_quantile: f64,
) -> Result<BalanceReport, PropensityError> {
    if weights_model.coefficients.len() != design.dim() {
        return Err(PropensityError::DesignMismatch {
            model: weights_model.coefficients.len(),
            design: design.dim(),
        });
    }
    let log_p = design.log_densities(&weights_model.coefficients);
    let (w, threshold, truncated) = balance_weights(design, &log_p, truncation_quantile)?;
    let unweighted = fit(design, None)?;
    let weighted = fit(design, Some(&w))?;
    let (su, sw) = (
        unweighted.standard_errors().expect("fitted"),
        weighted.standard_errors().expect("fitted"),
    );
    let (pu, pw) = (unweighted.p_values().expect("fitted"), weighted.p_values().expect("fitted"));
    let rows = (0..design.dim())
        .map(|k| BalanceRow {
            feature: design.names[k].clone(),
            unweighted_coefficient: unweighted.coefficients[k],
            unweighted_se: su[k],
            unweighted_p: pu[k],
            weighted_coefficient: weighted.coefficients[k],
            weighted_se: sw[k],
            weighted_p: pw[k],
        })
        .collect();
    let sum: f64 = w.iter().sum();
    let sum2: f64 = w.iter().map(|v| v * v).sum();
    Ok(BalanceReport {
        rows,
        truncation_quantile,
        truncation_threshold: threshold,
        truncated_periods: truncated,
        effective_sample_size: sum * sum / sum2,
        weighted_converged: weighted.diagnostics.as_ref().is_some_and(|d| d.converged),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Window;
    use crate::rng::SeedTree;

    fn unit() -> Window {
        Window::unit_square()
    }

    /// Periods of a process with intensity exp(b0 + b1·x) and a lagged
    /// treatment decay feature with coefficient b2.
    fn simulate(beta: [f64; 3], periods: usize, grid: &QuadratureGrid, seed: u64) -> (Vec<FeatureSpec>, Vec<HistoryFrame>, Vec<PointPattern>) {
        let features = vec![
            FeatureSpec::Intercept,
            FeatureSpec::Covariate { name: "x".into() },
            FeatureSpec::LagDecay {
                source: LagSource::Treatment,
                lags: vec![1],
                scale: 2.0,
                amplitude: 1.0,
            },
        ];
        let mut cov = BTreeMap::new();
        cov.insert("x".to_string(), Surface::affine(1.0, 0.0, 0.0));
        let model = PropensityModel::fixed(features.clone(), beta.to_vec()).unwrap();
        let root = SeedTree::new(seed);
        let mut frames = Vec::new();
        let mut pats: Vec<PointPattern> = Vec::new();
        for t in 1..=periods {
            let frame = HistoryFrame {
                period: t as u32,
                treatments: pats.last().cloned().into_iter().collect(),
                outcomes: vec![PointPattern::empty(unit(), 0); usize::from(t > 1)],
                covariates: cov.clone(),
            };
            let proc = PoissonProcess::new(model.intensity(&frame).unwrap(), grid).unwrap();
            let w = proc.sample(t as u32, &mut root.child(t as u64).stream()).unwrap();
            frames.push(frame);
            pats.push(w);
        }
        (features, frames, pats)
    }

    #[test]
    fn intercept_only_closed_form() {
        let w = Window::new(0.0, 0.0, 2.0, 1.0).unwrap();
        let grid = QuadratureGrid::new(w, 8, 4).unwrap();
        let pats: Vec<PointPattern> = [3usize, 0, 5, 1]
            .iter()
            .enumerate()
            .map(|(t, n)| PointPattern::new(w, t as u32 + 1, vec![Point::new(0.5, 0.5); *n]).unwrap())
            .collect();
        let frames: Vec<HistoryFrame> = (0..4)
            .map(|t| HistoryFrame {
                period: t + 1,
                treatments: vec![],
                outcomes: vec![],
                covariates: BTreeMap::new(),
            })
            .collect();
        let m = fit_frames(&[FeatureSpec::Intercept], &frames, &pats, &grid, None).unwrap();
        assert!((m.coefficients[0] - (9.0f64 / 8.0).ln()).abs() < 1e-10);
        assert!(m.diagnostics.unwrap().converged);
    }

    #[test]
    fn no_events_has_no_maximum() {
        let grid = QuadratureGrid::new(unit(), 8, 8).unwrap();
        let pats = vec![PointPattern::empty(unit(), 1), PointPattern::empty(unit(), 2)];
        let frames: Vec<HistoryFrame> = HistoryFrame::from_series(&pats, &pats, &[], 0);
        let e = fit_frames(&[FeatureSpec::Intercept], &frames, &pats, &grid, None).unwrap_err();
        assert!(matches!(e, PropensityError::NoEvents { periods: 2 }));
    }

    #[test]
    fn recovers_coefficients_and_scaling_invariance() {
        let grid = QuadratureGrid::new(unit(), 32, 32).unwrap();
        let (features, frames, pats) = simulate([1.2, 0.8, 0.6], 300, &grid, 11);
        let design = PropensityDesign::build(&features, &frames, &pats, &grid).unwrap();
        assert_eq!(design.dropped(), 1);
        let m = fit(&design, None).unwrap();
        let se = m.standard_errors().unwrap();
        for (k, truth) in [1.2, 0.8, 0.6].iter().enumerate() {
            assert!((m.coefficients[k] - truth).abs() < 4.0 * se[k], "{k}: {} vs {truth}", m.coefficients[k]);
        }
        let c = vec![3.7; design.periods().len()];
        let mw = fit(&design, Some(&c)).unwrap();
        for k in 0..3 {
            assert!((mw.coefficients[k] - m.coefficients[k]).abs() < 1e-8);
        }
        let again = fit(&design, None).unwrap();
        assert_eq!(again.coefficients, m.coefficients);
    }

    #[test]
    fn score_matches_finite_differences() {
        let grid = QuadratureGrid::new(unit(), 16, 16).unwrap();
        let (features, frames, pats) = simulate([1.0, 0.5, 0.5], 40, &grid, 5);
        let design = PropensityDesign::build(&features, &frames, &pats, &grid).unwrap();
        let mut rng = SeedTree::new(9).stream();
        use rand::Rng;
        for _ in 0..5 {
            let beta: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.5)).collect();
            let g = design.score(&beta, None);
            for k in 0..3 {
                let h = 1e-5;
                let mut up = beta.clone();
                let mut dn = beta.clone();
                up[k] += h;
                dn[k] -= h;
                let fd = (design.log_likelihood(&up, None) - design.log_likelihood(&dn, None)) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1.0), "k={k} fd={fd} g={}", g[k]);
            }
        }
    }

    #[test]
    fn information_is_symmetric_psd() {
        let grid = QuadratureGrid::new(unit(), 16, 16).unwrap();
        let (features, frames, pats) = simulate([1.0, 0.5, 0.5], 60, &grid, 6);
        let m = fit_frames(&features, &frames, &pats, &grid, None).unwrap();
        let d = m.diagnostics.unwrap();
        let info = DMatrix::from_row_slice(3, 3, &d.information);
        assert_eq!(info, info.transpose());
        assert!(info.symmetric_eigenvalues().iter().all(|e| *e >= 0.0));
    }

    #[test]
    fn log_propensity_examples() {
        let grid = QuadratureGrid::new(unit(), 16, 16).unwrap();
        let frame = HistoryFrame {
            period: 1,
            treatments: vec![],
            outcomes: vec![],
            covariates: BTreeMap::new(),
        };
        let m = PropensityModel::fixed(vec![FeatureSpec::Intercept], vec![3f64.ln()]).unwrap();
        let lp = log_propensity(&m, &frame, &PointPattern::empty(unit(), 1), &grid).unwrap();
        assert!((lp.0 + 2.0).abs() < 1e-12);
        let m0 = PropensityModel::fixed(vec![FeatureSpec::Intercept], vec![0.0]).unwrap();
        let pat = PointPattern::new(unit(), 1, vec![Point::new(0.2, 0.2), Point::new(0.7, 0.4)]).unwrap();
        assert_eq!(log_propensity(&m0, &frame, &pat, &grid).unwrap().0, 0.0);

        // a bump away from the pattern: raising its coefficient lowers the density
        let mut cov = BTreeMap::new();
        cov.insert("bump".to_string(), Surface::gaussian(Point::new(0.8, 0.8), 50.0));
        let frame = HistoryFrame { covariates: cov, ..frame };
        let features = vec![FeatureSpec::Intercept, FeatureSpec::Covariate { name: "bump".into() }];
        let near = PointPattern::new(unit(), 1, vec![Point::new(0.1, 0.1)]).unwrap();
        let mut last = f64::INFINITY;
        for b in [0.0, 0.2, 0.4, 0.6] {
            let m = PropensityModel::fixed(features.clone(), vec![0.5, b]).unwrap();
            let v = log_propensity(&m, &frame, &near, &grid).unwrap().0;
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn json_round_trip() {
        let grid = QuadratureGrid::new(unit(), 16, 16).unwrap();
        let (features, frames, pats) = simulate([1.0, 0.5, 0.5], 30, &grid, 7);
        let m = fit_frames(&features, &frames, &pats, &grid, None).unwrap();
        let back = PropensityModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back.coefficients, m.coefficients);
        assert_eq!(back.features, m.features);
        assert!(PropensityModel::from_json("{}").is_err());
    }

    #[test]
    fn divergence_names_the_feature() {
        let grid = QuadratureGrid::new(unit(), 8, 8).unwrap();
        // every point sits where the covariate is maximal and nothing elsewhere
        let mut cov = BTreeMap::new();
        cov.insert("spike".to_string(), Surface::gaussian(Point::new(0.5, 0.5), 400.0));
        let frames: Vec<HistoryFrame> = (1..=5)
            .map(|t| HistoryFrame {
                period: t,
                treatments: vec![],
                outcomes: vec![],
                covariates: cov.clone(),
            })
            .collect();
        let pats: Vec<PointPattern> = (1..=5)
            .map(|t| PointPattern::new(unit(), t, vec![Point::new(0.5, 0.5); 3]).unwrap())
            .collect();
        let features = vec![FeatureSpec::Intercept, FeatureSpec::Covariate { name: "spike".into() }];
        match fit_frames(&features, &frames, &pats, &grid, None) {
            Err(PropensityError::IllConditioned { feature, .. }) => assert!(feature == "spike" || feature == "intercept"),
            Ok(m) => panic!("expected divergence, got {:?}", m.coefficients),
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn balance_weights_truncation() {
        let grid = QuadratureGrid::new(unit(), 16, 16).unwrap();
        let (features, frames, pats) = simulate([1.0, 0.5, 0.5], 50, &grid, 8);
        let design = PropensityDesign::build(&features, &frames, &pats, &grid).unwrap();
        let lp = design.log_densities(&[1.0, 0.5, 0.5]);
        let (w1, _, n1) = balance_weights(&design, &lp, 1.0).unwrap();
        assert_eq!(n1, 0);
        assert!((w1.iter().sum::<f64>() / w1.len() as f64 - 1.0).abs() < 1e-12);
        let (w9, thr, n9) = balance_weights(&design, &lp, 0.9).unwrap();
        assert!(n9 > 0 && w9.iter().all(|v| *v <= thr));
        assert!(balance_weights(&design, &lp, 0.0).is_err());
    }
}

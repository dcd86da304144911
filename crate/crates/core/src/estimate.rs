//! Inverse-probability-weighted and Hájek estimators of expected outcome
//! counts under stochastic interventions, their variance bounds, effect
//! contrasts and normal confidence intervals.
//!
//! Weights stay in log space until the last step of each period.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{count_in_region, GeomError, PointPattern, Rect, Region};
use crate::interventions::{InterventionError, InterventionSequence};
use crate::numeric::{log_sum_exp, norm_quantile, pairwise_sum};
use crate::pointprocess::PointProcessError;
use crate::smooth::{smoothed_region_integral, KernelSpec};

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("series of {t} periods is too short for interventions over M = {m} periods")]
    TooShort { t: usize, m: usize },
    #[error("positivity violation in period {period}: the propensity density is zero")]
    PositivityViolation { period: u32 },
    #[error("log-weight of period {period} is not usable ({value})")]
    NonFiniteWeight { period: u32, value: f64 },
    #[error("degenerate weights: every period has weight zero")]
    DegenerateWeights,
    #[error("mismatched estimands: {0}")]
    Mismatch(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Intervention(#[from] InterventionError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Ipw,
    Hajek,
}

/// Per-period outcome functional: kernel-smoothed mass in the region, or the
/// raw count of outcome points in it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeMode {
    #[default]
    Smoothed,
    Count,
}

/// Log-weights `ℓ_t = Σ_{j=t−M+1}^{t} [log f_{h}(W_j) − log p_j(W_j)]` for the
/// estimation periods.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightSeries {
    pub m: usize,
    /// Period index of each entry.
    pub periods: Vec<u32>,
    pub log_weights: Vec<f64>,
    /// First period whose propensity density was zero, if any.
    pub violation: Option<u32>,
}

impl WeightSeries {
    /// `treatments[i]` and `log_propensity[i]` belong to series position `i`;
    /// estimation covers positions `first..treatments.len()` and requires
    /// `first ≥ M − 1`. A `-inf` or NaN propensity marks a positivity
    /// violation; a zero intervention density yields weight zero.
    pub fn compute(
        seq: &InterventionSequence,
        treatments: &[PointPattern],
        log_propensity: &[f64],
        first: usize,
    ) -> Result<Self, EstimateError> {
        let m = seq.len();
        let t = treatments.len();
        if log_propensity.len() != t {
            return Err(EstimateError::Input(format!(
                "{t} treatment patterns but {} propensity values",
                log_propensity.len()
            )));
        }
        if first + 1 < m || first >= t {
            return Err(EstimateError::TooShort { t: t.saturating_sub(first), m });
        }
        let lo = first + 1 - m;
        let violation = (lo..t)
            .find(|&j| !log_propensity[j].is_finite() || log_propensity[j] == f64::INFINITY)
            .map(|j| treatments[j].timestamp());
        // numerators[k][j - lo]: log density of slot k at position j
        let numerators: Vec<Vec<f64>> = seq
            .slots()
            .iter()
            .map(|h| {
                (lo..t)
                    .map(|j| match h.log_density(&treatments[j]) {
                        Ok(v) => Ok(v),
                        Err(PointProcessError::DensityZero { .. }) => Ok(f64::NEG_INFINITY),
                        Err(e) => Err(EstimateError::Intervention(InterventionError::PointProcess(e))),
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?;
        let log_weights = (first..t)
            .map(|pos| {
                let mut acc = 0.0;
                for k in 0..m {
                    let j = pos - k;
                    acc += numerators[k][j - lo] - log_propensity[j];
                }
                acc
            })
            .collect();
        Ok(WeightSeries {
            m,
            periods: (first..t).map(|j| treatments[j].timestamp()).collect(),
            log_weights,
            violation,
        })
    }

    /// Builds a series from per-period log-ratios `log f − log p` where the
    /// same law applies at every lag (an i.i.d. sequence).
    pub fn from_log_ratios(m: usize, periods: &[u32], log_ratios: &[f64], first: usize) -> Result<Self, EstimateError> {
        let t = log_ratios.len();
        if m == 0 || first + 1 < m || first >= t {
            return Err(EstimateError::TooShort { t: t.saturating_sub(first), m });
        }
        let violation = (first + 1 - m..t)
            .find(|&j| log_ratios[j].is_nan() || log_ratios[j] == f64::INFINITY)
            .map(|j| periods[j]);
        let log_weights = (first..t)
            .map(|pos| {
                let mut acc = 0.0;
                for j in pos + 1 - m..=pos {
                    acc += log_ratios[j];
                }
                acc
            })
            .collect();
        Ok(WeightSeries {
            m,
            periods: periods[first..].to_vec(),
            log_weights,
            violation,
        })
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    /// Errors on a recorded violation or an unusable log-weight.
    pub fn check(&self) -> Result<(), EstimateError> {
        if let Some(period) = self.violation {
            return Err(EstimateError::PositivityViolation { period });
        }
        for (l, p) in self.log_weights.iter().zip(&self.periods) {
            if l.is_nan() || *l == f64::INFINITY {
                return Err(EstimateError::NonFiniteWeight { period: *p, value: *l });
            }
        }
        Ok(())
    }

    /// Kish effective sample size `(Σ v)² / Σ v²`, computed in log space.
    pub fn effective_sample_size(&self) -> f64 {
        let lse = log_sum_exp(&self.log_weights);
        if lse == f64::NEG_INFINITY {
            return 0.0;
        }
        let doubled: Vec<f64> = self.log_weights.iter().map(|l| 2.0 * l).collect();
        (2.0 * lse - log_sum_exp(&doubled)).exp()
    }

    /// Mean of `exp(ℓ_t)`.
    pub fn mean_weight(&self) -> f64 {
        (log_sum_exp(&self.log_weights) - (self.len() as f64).ln()).exp()
    }
}

/// `G_t`: the unweighted outcome functional of one period.
pub fn outcome_functional(outcome: &PointPattern, kernel: &KernelSpec, region: &Region, mode: OutcomeMode) -> Result<f64, EstimateError> {
    Ok(match mode {
        OutcomeMode::Smoothed => smoothed_region_integral(outcome, kernel, region),
        OutcomeMode::Count => count_in_region(outcome, region)? as f64,
    })
}

/// `exp(ℓ_t) · G_t`.
pub fn period_estimate(
    log_weight: f64,
    outcome: &PointPattern,
    kernel: &KernelSpec,
    region: &Region,
    mode: OutcomeMode,
) -> Result<f64, EstimateError> {
    if log_weight.is_nan() || log_weight == f64::INFINITY {
        return Err(EstimateError::NonFiniteWeight {
            period: outcome.timestamp(),
            value: log_weight,
        });
    }
    let g = outcome_functional(outcome, kernel, region, mode)?;
    if g == 0.0 {
        return Ok(0.0);
    }
    Ok(log_weight.exp() * g)
}

pub fn ipw_average(estimates: &[f64]) -> f64 {
    if estimates.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(estimates) / estimates.len() as f64
}

/// Normalized weights `v_t / Σ v`.
pub fn normalized_weights(log_weights: &[f64]) -> Result<Vec<f64>, EstimateError> {
    let lse = log_sum_exp(log_weights);
    if lse == f64::NEG_INFINITY || lse.is_nan() {
        return Err(EstimateError::DegenerateWeights);
    }
    Ok(log_weights.iter().map(|l| (l - lse).exp()).collect())
}

/// `Σ v_t G_t / Σ v_t`.
pub fn hajek_average(log_weights: &[f64], outcomes: &[f64]) -> Result<f64, EstimateError> {
    let w = normalized_weights(log_weights)?;
    let terms: Vec<f64> = w.iter().zip(outcomes).map(|(w, g)| w * g).collect();
    Ok(pairwise_sum(&terms))
}

/// Per-period terms whose mean is the Hájek estimate: `n · ṽ_t · G_t`.
pub fn hajek_terms(log_weights: &[f64], outcomes: &[f64]) -> Result<Vec<f64>, EstimateError> {
    let n = log_weights.len() as f64;
    Ok(normalized_weights(log_weights)?
        .iter()
        .zip(outcomes)
        .map(|(w, g)| n * w * g)
        .collect())
}

/// Variance bound of the temporal average: `v̂* / T`, with `v̂*` the mean
/// squared per-period estimate. For the Hájek estimator the bound is scaled
/// by `[(T − M + 1) / Σ v_t]²`.
pub fn variance_bound(per_period: &[f64], t_total: usize, kind: EstimatorKind, log_weights: Option<&[f64]>) -> Result<f64, EstimateError> {
    let n = per_period.len();
    if n == 0 || t_total == 0 {
        return Err(EstimateError::TooShort { t: t_total, m: 0 });
    }
    let sq: Vec<f64> = per_period.iter().map(|y| y * y).collect();
    let v_star = pairwise_sum(&sq) / n as f64;
    let scale = match kind {
        EstimatorKind::Ipw => 1.0,
        EstimatorKind::Hajek => {
            let lw = log_weights.ok_or_else(|| EstimateError::Input("Hájek bound needs the log-weights".into()))?;
            let lse = log_sum_exp(lw);
            if lse == f64::NEG_INFINITY {
                return Err(EstimateError::DegenerateWeights);
            }
            (2.0 * ((n as f64).ln() - lse)).exp()
        }
    };
    Ok(v_star * scale / t_total as f64)
}

/// `v̂* / T` from terms whose mean is the estimate.
fn bound_from_terms(terms: &[f64], t_total: usize) -> f64 {
    let sq: Vec<f64> = terms.iter().map(|y| y * y).collect();
    pairwise_sum(&sq) / terms.len() as f64 / t_total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

/// `estimate ± z_{(1+level)/2} · sqrt(bound)`.
pub fn confidence_interval(estimate: f64, bound: f64, level: f64) -> Result<ConfidenceInterval, EstimateError> {
    if !(bound >= 0.0) {
        return Err(EstimateError::Input(format!("variance bound must be nonnegative, got {bound}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(EstimateError::Input(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let half = norm_quantile(0.5 + 0.5 * level) * bound.sqrt();
    Ok(ConfidenceInterval {
        level,
        lower: estimate - half,
        upper: estimate + half,
    })
}

/// What was estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandDescriptor {
    pub label: String,
    pub estimator: EstimatorKind,
    pub m: usize,
    pub region: Vec<Rect>,
    /// Series length `T` used in the bound `v̂*/T`.
    pub t_total: usize,
    pub outcome_mode: OutcomeMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodContribution {
    pub period: u32,
    pub log_weight: f64,
    /// Unweighted outcome functional `G_t`.
    pub outcome: f64,
    /// `exp(ℓ_t) · G_t`.
    pub estimate: f64,
    /// Term entering the mean and the bound: `Ŷ_t` for IPW, `n ṽ_t G_t` for
    /// Hájek.
    pub term: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateResult {
    pub descriptor: EstimandDescriptor,
    pub estimate: f64,
    pub variance_bound: f64,
    pub interval: ConfidenceInterval,
    pub effective_sample_size: f64,
    pub contributions: Vec<PeriodContribution>,
    /// Caveats on the variance bound.
    pub note: Option<String>,
}

const HAJEK_NOTE: &str = "Hájek variance bound uses the heuristic rescaling of the IPW bound; it is not backed by an asymptotic result";

impl EstimateResult {
    pub fn standard_error(&self) -> f64 {
        self.variance_bound.sqrt()
    }

    pub fn terms(&self) -> Vec<f64> {
        self.contributions.iter().map(|c| c.term).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn row(&self) -> EstimateRow {
        EstimateRow {
            label: self.descriptor.label.clone(),
            estimator: self.descriptor.estimator,
            m: self.descriptor.m,
            region: region_label(&self.descriptor.region),
            t_total: self.descriptor.t_total,
            periods: self.contributions.len(),
            estimate: self.estimate,
            variance_bound: self.variance_bound,
            std_error: self.standard_error(),
            level: self.interval.level,
            lower: self.interval.lower,
            upper: self.interval.upper,
            effective_sample_size: self.effective_sample_size,
        }
    }
}

pub fn region_label(parts: &[Rect]) -> String {
    parts
        .iter()
        .map(|r| format!("[{},{}]x[{},{}]", r.x0, r.x1, r.y0, r.y1))
        .collect::<Vec<_>>()
        .join("+")
}

/// One CSV row per estimand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateRow {
    pub label: String,
    pub estimator: EstimatorKind,
    pub m: usize,
    pub region: String,
    pub t_total: usize,
    pub periods: usize,
    pub estimate: f64,
    pub variance_bound: f64,
    pub std_error: f64,
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
    pub effective_sample_size: f64,
}

pub fn write_csv<W: Write>(out: W, results: &[EstimateResult]) -> Result<(), EstimateError> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        w.serialize(r.row())?;
    }
    w.flush()?;
    Ok(())
}

/// Settings shared by every estimate of one analysis.
#[derive(Debug, Clone)]
pub struct EstimatorSettings {
    pub kernel: KernelSpec,
    pub mode: OutcomeMode,
    pub level: f64,
    /// `T` in the bound `v̂*/T`; `None` uses the number of estimation
    /// periods plus `M − 1`.
    pub t_total: Option<usize>,
}

/// `G_t` for every estimation period of `weights`, with `outcomes` indexed by
/// series position and `offset` the position of `weights.periods[0]`.
pub fn outcome_series(
    outcomes: &[PointPattern],
    offset: usize,
    count: usize,
    region: &Region,
    settings: &EstimatorSettings,
) -> Result<Vec<f64>, EstimateError> {
    if offset + count > outcomes.len() {
        return Err(EstimateError::Input(format!(
            "need outcomes up to position {} but only {} given",
            offset + count,
            outcomes.len()
        )));
    }
    outcomes[offset..offset + count]
        .par_iter()
        .map(|y| outcome_functional(y, &settings.kernel, region, settings.mode))
        .collect()
}

/// Full estimate from weights and precomputed outcome functionals.
pub fn estimate_from_outcomes(
    label: &str,
    kind: EstimatorKind,
    weights: &WeightSeries,
    outcomes: &[f64],
    region: &Region,
    settings: &EstimatorSettings,
) -> Result<EstimateResult, EstimateError> {
    weights.check()?;
    let n = weights.len();
    if outcomes.len() != n {
        return Err(EstimateError::Input(format!("{n} weights but {} outcome values", outcomes.len())));
    }
    let t_total = settings.t_total.unwrap_or(n + weights.m - 1);
    if t_total < weights.m + 1 {
        return Err(EstimateError::TooShort { t: t_total, m: weights.m });
    }
    let estimates: Vec<f64> = weights
        .log_weights
        .iter()
        .zip(outcomes)
        .map(|(l, g)| if *g == 0.0 { 0.0 } else { l.exp() * g })
        .collect();
    let (terms, note) = match kind {
        EstimatorKind::Ipw => (estimates.clone(), None),
        EstimatorKind::Hajek => (hajek_terms(&weights.log_weights, outcomes)?, Some(HAJEK_NOTE.to_string())),
    };
    let estimate = match kind {
        EstimatorKind::Ipw => ipw_average(&estimates),
        EstimatorKind::Hajek => hajek_average(&weights.log_weights, outcomes)?,
    };
    let bound = bound_from_terms(&terms, t_total);
    let interval = confidence_interval(estimate, bound, settings.level)?;
    let contributions = (0..n)
        .map(|i| PeriodContribution {
            period: weights.periods[i],
            log_weight: weights.log_weights[i],
            outcome: outcomes[i],
            estimate: estimates[i],
            term: terms[i],
        })
        .collect();
    Ok(EstimateResult {
        descriptor: EstimandDescriptor {
            label: label.to_string(),
            estimator: kind,
            m: weights.m,
            region: region.parts().to_vec(),
            t_total,
            outcome_mode: settings.mode,
        },
        estimate,
        variance_bound: bound,
        interval,
        effective_sample_size: weights.effective_sample_size(),
        contributions,
        note,
    })
}

/// Estimate from outcome patterns indexed by series position.
pub fn estimate(
    label: &str,
    kind: EstimatorKind,
    weights: &WeightSeries,
    outcomes: &[PointPattern],
    offset: usize,
    region: &Region,
    settings: &EstimatorSettings,
) -> Result<EstimateResult, EstimateError> {
    let g = outcome_series(outcomes, offset, weights.len(), region, settings)?;
    estimate_from_outcomes(label, kind, weights, &g, region, settings)
}

/// `τ̂ = N̂₂ − N̂₁` with bound `mean(τ_t²)/T`, `τ_t` the per-period difference
/// of the estimators' terms.
pub fn effect_contrast(first: &EstimateResult, second: &EstimateResult) -> Result<EstimateResult, EstimateError> {
    let (a, b) = (&first.descriptor, &second.descriptor);
    if a.estimator != b.estimator || a.m != b.m || a.region != b.region || a.t_total != b.t_total || a.outcome_mode != b.outcome_mode {
        return Err(EstimateError::Mismatch(format!("{} vs {}", a.label, b.label)));
    }
    if first.contributions.len() != second.contributions.len()
        || first
            .contributions
            .iter()
            .zip(&second.contributions)
            .any(|(x, y)| x.period != y.period || x.outcome != y.outcome)
    {
        return Err(EstimateError::Mismatch("results come from different observed series".into()));
    }
    let contributions: Vec<PeriodContribution> = first
        .contributions
        .iter()
        .zip(&second.contributions)
        .map(|(x, y)| PeriodContribution {
            period: x.period,
            log_weight: f64::NAN,
            outcome: x.outcome,
            estimate: y.estimate - x.estimate,
            term: y.term - x.term,
        })
        .collect();
    let terms: Vec<f64> = contributions.iter().map(|c| c.term).collect();
    let bound = bound_from_terms(&terms, a.t_total);
    let estimate = second.estimate - first.estimate;
    let interval = confidence_interval(estimate, bound, first.interval.level)?;
    Ok(EstimateResult {
        descriptor: EstimandDescriptor {
            label: format!("{} - {}", b.label, a.label),
            ..a.clone()
        },
        estimate,
        variance_bound: bound,
        interval,
        effective_sample_size: first.effective_sample_size.min(second.effective_sample_size),
        contributions,
        note: first.note.clone().or_else(|| second.note.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Point, Window};
    use crate::interventions::Intervention;
    use crate::rng::SeedTree;
    use proptest::prelude::*;
    use rand::Rng;

    fn unit() -> Window {
        Window::unit_square()
    }

    fn settings() -> EstimatorSettings {
        EstimatorSettings {
            kernel: KernelSpec::isotropic(0.1).unwrap(),
            mode: OutcomeMode::Smoothed,
            level: 0.95,
            t_total: None,
        }
    }

    fn random_series(n: usize, seed: u64) -> (Vec<PointPattern>, Vec<PointPattern>, Vec<f64>) {
        let mut rng = SeedTree::new(seed).stream();
        let mut pat = |t: usize, k: usize| {
            let pts = (0..k).map(|_| Point::new(rng.random(), rng.random())).collect();
            PointPattern::new(unit(), t as u32 + 1, pts).unwrap()
        };
        let w: Vec<PointPattern> = (0..n).map(|t| pat(t, 2 + t % 5)).collect();
        let y: Vec<PointPattern> = (0..n).map(|t| pat(t, 1 + t % 7)).collect();
        let lp: Vec<f64> = w.iter().map(|p| -3.0 + 0.3 * p.len() as f64).collect();
        (w, y, lp)
    }

    #[test]
    fn identity_intervention_has_unit_weights() {
        let h = Intervention::homogeneous(4.0, unit()).unwrap();
        let seq = InterventionSequence::iid(h.clone(), 3).unwrap();
        let (w, y, _) = random_series(20, 1);
        let lp: Vec<f64> = w.iter().map(|p| h.log_density(p).unwrap()).collect();
        let ws = WeightSeries::compute(&seq, &w, &lp, 2).unwrap();
        assert!(ws.log_weights.iter().all(|l| *l == 0.0));
        let s = settings();
        let region = Region::rect(unit(), 0.0, 0.0, 0.5, 0.5).unwrap();
        let r = estimate("id", EstimatorKind::Ipw, &ws, &y, 2, &region, &s).unwrap();
        for (c, pat) in r.contributions.iter().zip(&y[2..]) {
            assert_eq!(c.estimate, smoothed_region_integral(pat, &s.kernel, &region));
        }
        let hj = estimate("id", EstimatorKind::Hajek, &ws, &y, 2, &region, &s).unwrap();
        assert!((hj.estimate - r.estimate).abs() < 1e-12);
    }

    #[test]
    fn period_estimate_of_empty_outcome_is_zero() {
        let k = KernelSpec::isotropic(0.1).unwrap();
        let e = period_estimate(40.0, &PointPattern::empty(unit(), 3), &k, &Region::whole(unit()), OutcomeMode::Smoothed).unwrap();
        assert_eq!(e, 0.0);
        assert!(period_estimate(f64::NAN, &PointPattern::empty(unit(), 3), &k, &Region::whole(unit()), OutcomeMode::Count).is_err());
    }

    #[test]
    fn averages() {
        assert_eq!(ipw_average(&[2.0, 4.0]), 3.0);
        assert_eq!(ipw_average(&[0.0; 5]), 0.0);
        assert!((ipw_average(&[1.7; 9]) - 1.7).abs() < 1e-15);
        assert!((hajek_average(&[0.3; 4], &[1.0, 2.0, 3.0, 6.0]).unwrap() - 3.0).abs() < 1e-14);
        assert!(matches!(
            hajek_average(&[f64::NEG_INFINITY; 3], &[1.0, 2.0, 3.0]),
            Err(EstimateError::DegenerateWeights)
        ));
    }

    #[test]
    fn variance_bound_examples() {
        assert!((variance_bound(&[3.0; 10], 12, EstimatorKind::Ipw, None).unwrap() - 9.0 / 12.0).abs() < 1e-15);
        let mut single = vec![0.0; 8];
        single[3] = 4.0;
        // v̂* = 16 / 8
        assert!((variance_bound(&single, 10, EstimatorKind::Ipw, None).unwrap() * 10.0 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn hajek_bound_matches_rescaled_ipw_bound() {
        let lw = [-0.5f64, 0.2, 1.3, -2.0, 0.0];
        let g = [1.0, 2.5, 0.4, 3.0, 1.1];
        let yhat: Vec<f64> = lw.iter().zip(&g).map(|(l, g)| l.exp() * g).collect();
        let ipw = variance_bound(&yhat, 7, EstimatorKind::Ipw, None).unwrap();
        let sum_v: f64 = lw.iter().map(|l| l.exp()).sum();
        let expected = ipw * (5.0 / sum_v).powi(2);
        let hajek = variance_bound(&yhat, 7, EstimatorKind::Hajek, Some(&lw)).unwrap();
        assert!((hajek - expected).abs() < 1e-12 * expected);
        let terms = hajek_terms(&lw, &g).unwrap();
        assert!((bound_from_terms(&terms, 7) - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn confidence_interval_examples() {
        let ci = confidence_interval(2.0, 0.0, 0.95).unwrap();
        assert_eq!((ci.lower, ci.upper), (2.0, 2.0));
        let ci = confidence_interval(0.0, 1.0, 0.95).unwrap();
        assert!((ci.upper - 1.959963984540054).abs() < 1e-9 && (ci.lower + 1.959963984540054).abs() < 1e-9);
        let (a, b) = (confidence_interval(1.0, 0.3, 0.9).unwrap(), confidence_interval(1.0, 0.3, 0.99).unwrap());
        assert!(b.lower < a.lower && b.upper > a.upper);
    }

    #[test]
    fn contrasts() {
        let (w, y, lp) = random_series(30, 2);
        let s = settings();
        let region = Region::rect(unit(), 0.5, 0.5, 1.0, 1.0).unwrap();
        let make = |h: f64, kind| {
            let seq = InterventionSequence::iid(Intervention::homogeneous(h, unit()).unwrap(), 2).unwrap();
            let ws = WeightSeries::compute(&seq, &w, &lp, 1).unwrap();
            estimate(&format!("h={h}"), kind, &ws, &y, 1, &region, &s).unwrap()
        };
        for kind in [EstimatorKind::Ipw, EstimatorKind::Hajek] {
            let (a, b) = (make(3.0, kind), make(7.0, kind));
            let same = effect_contrast(&a, &a).unwrap();
            assert_eq!(same.estimate, 0.0);
            assert!(same.contributions.iter().all(|c| c.term == 0.0));
            let ab = effect_contrast(&a, &b).unwrap();
            let ba = effect_contrast(&b, &a).unwrap();
            assert_eq!(ab.estimate, -ba.estimate);
            assert_eq!(ab.variance_bound, ba.variance_bound);
            assert!(ab.interval.lower <= ab.estimate && ab.estimate <= ab.interval.upper);
        }
        assert!(effect_contrast(&make(3.0, EstimatorKind::Ipw), &make(3.0, EstimatorKind::Hajek)).is_err());
    }

    #[test]
    fn positivity_violation_is_reported() {
        let (w, y, mut lp) = random_series(10, 3);
        lp[4] = f64::NEG_INFINITY;
        let seq = InterventionSequence::iid(Intervention::homogeneous(3.0, unit()).unwrap(), 2).unwrap();
        let ws = WeightSeries::compute(&seq, &w, &lp, 1).unwrap();
        assert_eq!(ws.violation, Some(5));
        let err = estimate("x", EstimatorKind::Ipw, &ws, &y, 1, &Region::whole(unit()), &settings()).unwrap_err();
        assert!(matches!(err, EstimateError::PositivityViolation { period: 5 }));
    }

    #[test]
    fn rejects_short_series() {
        let (w, _, lp) = random_series(3, 4);
        let seq = InterventionSequence::iid(Intervention::homogeneous(3.0, unit()).unwrap(), 5).unwrap();
        assert!(matches!(WeightSeries::compute(&seq, &w, &lp, 1), Err(EstimateError::TooShort { .. })));
    }

    #[test]
    fn lagged_sequence_matches_iid_sliding_sum() {
        let (w, _, lp) = random_series(25, 5);
        let h = Intervention::homogeneous(5.0, unit()).unwrap();
        let seq = InterventionSequence::iid(h.clone(), 4).unwrap();
        let a = WeightSeries::compute(&seq, &w, &lp, 5).unwrap();
        let ratios: Vec<f64> = w.iter().zip(&lp).map(|(p, l)| h.log_density(p).unwrap() - l).collect();
        let periods: Vec<u32> = w.iter().map(|p| p.timestamp()).collect();
        let b = WeightSeries::from_log_ratios(4, &periods, &ratios, 5).unwrap();
        for (x, y) in a.log_weights.iter().zip(&b.log_weights) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn hajek_is_bounded_and_scale_free(
            lw in proptest::collection::vec(-30.0f64..30.0, 1..40),
            shift in -50.0f64..50.0,
            seed in 0u64..1000,
        ) {
            let mut rng = SeedTree::new(seed).stream();
            let g: Vec<f64> = lw.iter().map(|_| rng.random_range(0.0..10.0)).collect();
            let est = hajek_average(&lw, &g).unwrap();
            let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(est >= lo - 1e-9 * hi.abs().max(1.0) && est <= hi + 1e-9 * hi.abs().max(1.0));
            let shifted: Vec<f64> = lw.iter().map(|l| l + shift).collect();
            let est2 = hajek_average(&shifted, &g).unwrap();
            prop_assert!((est - est2).abs() <= 1e-12 * est.abs().max(1.0));
        }

        #[test]
        fn dominating_measure_constant_cancels(c in -40.0f64..40.0, seed in 0u64..500) {
            let (w, y, lp) = random_series(15, seed);
            let h = Intervention::homogeneous(4.0, unit()).unwrap();
            let num: Vec<f64> = w.iter().map(|p| h.log_density(p).unwrap()).collect();
            let periods: Vec<u32> = w.iter().map(|p| p.timestamp()).collect();
            let ratio = |shift: f64| -> Vec<f64> { num.iter().zip(&lp).map(|(n, l)| (n + shift) - (l + shift)).collect() };
            let s = settings();
            let region = Region::whole(unit());
            for kind in [EstimatorKind::Ipw, EstimatorKind::Hajek] {
                let a = WeightSeries::from_log_ratios(3, &periods, &ratio(0.0), 2).unwrap();
                let b = WeightSeries::from_log_ratios(3, &periods, &ratio(c), 2).unwrap();
                let ra = estimate("a", kind, &a, &y, 2, &region, &s).unwrap();
                let rb = estimate("b", kind, &b, &y, 2, &region, &s).unwrap();
                prop_assert!((ra.estimate - rb.estimate).abs() <= 1e-12 * ra.estimate.abs().max(1.0));
                prop_assert!((ra.variance_bound - rb.variance_bound).abs() <= 1e-12 * ra.variance_bound.abs().max(1.0));
            }
        }
    }
}

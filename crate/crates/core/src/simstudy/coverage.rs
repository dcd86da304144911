//! Coverage experiment: many datasets, each estimated with true, fitted and
//! homogeneous propensities and compared with its own Monte Carlo truth.

use std::collections::HashMap;
use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::oracle::{Functional, OracleContext, TruthOracle, VarianceOracle};
use super::{Dgp, DgpSpec, SimError, SimulatedSeries};
use crate::estimate::{
    confidence_interval, estimate_from_outcomes, region_label, EstimatorKind, EstimatorSettings, OutcomeMode, WeightSeries,
};
use crate::geom::{PointPattern, Rect, Region};
use crate::interventions::{Intervention, InterventionSequence};
use crate::numeric::median;
use crate::propensity::fit;
use crate::rng::{purpose, SeedTree};
use crate::smooth::{bandwidth_rule, smoothed_region_integral, KernelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageConfig {
    pub datasets: usize,
    /// Series lengths `T`; shorter ones are prefixes of the longest.
    pub lengths: Vec<usize>,
    /// Intervention lengths `M`.
    pub windows: Vec<usize>,
    /// Homogeneous intervention intensities `h`.
    pub intensities: Vec<f64>,
    pub regions: Vec<Rect>,
    pub truth_reps: usize,
    pub variance_reps: usize,
    /// The `M` values for which the variance oracle runs.
    pub variance_windows: Vec<usize>,
    pub levels: Vec<f64>,
    pub modes: Vec<OutcomeMode>,
    pub seed: u64,
}

impl CoverageConfig {
    /// The checked desk-scale profile.
    pub fn desk() -> Self {
        CoverageConfig {
            datasets: 50,
            lengths: vec![200, 500],
            windows: vec![1, 3, 7, 30],
            intensities: vec![3.0, 5.0, 7.0],
            regions: super::study_regions(),
            truth_reps: 4,
            variance_reps: 12,
            variance_windows: vec![1, 3, 7],
            levels: vec![0.95, 0.99],
            modes: vec![OutcomeMode::Smoothed, OutcomeMode::Count],
            seed: 20_240_601,
        }
    }

    /// Dataset count and lengths of the full reproduction.
    pub fn full() -> Self {
        CoverageConfig {
            datasets: 200,
            lengths: vec![200, 400, 500],
            truth_reps: 50,
            variance_reps: 50,
            ..Self::desk()
        }
    }

    pub fn validate(&self, spec: &DgpSpec) -> Result<(), SimError> {
        let fail = |m: String| Err(SimError::Spec(m));
        if self.datasets == 0 || self.truth_reps == 0 || self.variance_reps == 0 {
            return fail("datasets and replicate counts must be positive".into());
        }
        if self.lengths.is_empty() || self.windows.is_empty() || self.intensities.is_empty() || self.regions.is_empty() {
            return fail("lengths, windows, intensities and regions must be non-empty".into());
        }
        for &m in self.windows.iter().chain(&self.variance_windows) {
            if m == 0 {
                return fail("intervention lengths must be positive".into());
            }
        }
        for &t in &self.lengths {
            let longest = self.windows.iter().max().copied().unwrap_or(1);
            if t < longest + 1 {
                return fail(format!("length {t} too short for M = {longest}"));
            }
        }
        for &h in &self.intensities {
            if !(h >= 0.0 && h.is_finite()) {
                return fail(format!("intensity {h} must be nonnegative"));
            }
        }
        for &l in &self.levels {
            if !(l > 0.0 && l < 1.0) {
                return fail(format!("level {l} outside (0, 1)"));
            }
        }
        for r in &self.regions {
            Region::new(spec.window, &[*r])?;
        }
        Ok(())
    }
}

/// One confidence interval of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRecord {
    pub dataset: usize,
    pub length: usize,
    pub m: usize,
    pub intensity: f64,
    pub region: String,
    pub mode: OutcomeMode,
    pub estimator: String,
    pub flavor: String,
    pub level: f64,
    pub estimate: f64,
    pub truth: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
    pub covered: bool,
}

/// Oracle moments against the estimated bound for the true-propensity IPW
/// estimator of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRecord {
    pub dataset: usize,
    pub length: usize,
    pub m: usize,
    pub intensity: f64,
    pub region: String,
    pub mode: OutcomeMode,
    pub v: f64,
    pub v_star: f64,
    pub v_star_hat: f64,
    pub oracle_mean: f64,
    pub truth: f64,
}

/// Aggregate over datasets of one `(T, M, h, B, mode, estimator, flavor,
/// level)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCell {
    pub length: usize,
    pub m: usize,
    pub intensity: f64,
    pub region: String,
    pub mode: OutcomeMode,
    pub estimator: String,
    pub flavor: String,
    pub level: f64,
    pub datasets: usize,
    pub coverage: f64,
    pub median_abs_error: f64,
    pub mean_estimate: f64,
    pub mean_truth: f64,
    pub mean_std_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoverageTable {
    pub config: CoverageConfig,
    pub records: Vec<CoverageRecord>,
    pub variance: Vec<VarianceRecord>,
    pub cells: Vec<CoverageCell>,
}

impl CoverageTable {
    pub fn records_for<'a>(&'a self, filter: impl Fn(&CoverageRecord) -> bool + 'a) -> impl Iterator<Item = &'a CoverageRecord> {
        self.records.iter().filter(move |r| filter(r))
    }
}

pub fn mode_label(mode: OutcomeMode) -> &'static str {
    match mode {
        OutcomeMode::Smoothed => "smoothed",
        OutcomeMode::Count => "count",
    }
}

/// Propensities for one series length: fitted correct model and
/// homogeneous fit, by position (NaN outside the fitted range).
struct Fitted {
    range: Range<usize>,
    correct: Vec<f64>,
    homogeneous: Vec<f64>,
}

fn fit_length(dgp: &Dgp, series: &SimulatedSeries, range: Range<usize>) -> Result<Fitted, SimError> {
    let design = dgp.treatment_design(series, range.clone())?;
    let model = fit(&design, None)?;
    let lp = design.log_densities(&model.coefficients);
    let area = dgp.window().area();
    let counts: Vec<f64> = range.clone().map(|i| series.periods[i].treatment.len() as f64).collect();
    let rate = counts.iter().sum::<f64>() / (counts.len() as f64 * area);
    let mut correct = vec![f64::NAN; series.len()];
    let mut homogeneous = vec![f64::NAN; series.len()];
    for (k, i) in range.clone().enumerate() {
        correct[i] = lp[k];
        homogeneous[i] = area - rate * area + if counts[k] > 0.0 { counts[k] * rate.ln() } else { 0.0 };
    }
    Ok(Fitted {
        range,
        correct,
        homogeneous,
    })
}

fn run_dataset(
    dgp: &Dgp,
    config: &CoverageConfig,
    regions: &[Region],
    d: usize,
) -> Result<(Vec<CoverageRecord>, Vec<VarianceRecord>), SimError> {
    let spec = dgp.spec();
    let burn = spec.burn_in;
    let longest = *config.lengths.iter().max().expect("validated");
    let tree = SeedTree::new(config.seed).path(&[purpose::DATASET, d as u64]);
    let series = dgp.generate(tree.value())?;
    let ctx = OracleContext::new(dgp, &series);
    let true_lp = dgp.true_log_propensity(&series);
    let treatments: Vec<PointPattern> = series.treatments();
    let fitted: Vec<Fitted> = config
        .lengths
        .iter()
        .map(|&t| fit_length(dgp, &series, burn..burn + t))
        .collect::<Result<_, _>>()?;
    let kernels: Vec<KernelSpec> = config
        .lengths
        .iter()
        .map(|&t| KernelSpec::isotropic(bandwidth_rule(t)))
        .collect::<Result<_, _>>()?;
    // outcome functionals by (length, region, mode) over all positions
    let g = |li: usize, ri: usize, mode: OutcomeMode| -> Vec<f64> {
        series
            .periods
            .iter()
            .map(|p| match mode {
                OutcomeMode::Smoothed => smoothed_region_integral(&p.outcome, &kernels[li], &regions[ri]),
                OutcomeMode::Count => p.outcome.points().iter().filter(|q| regions[ri].contains(**q)).count() as f64,
            })
            .collect()
    };
    let mut outcomes: HashMap<(usize, usize, OutcomeMode), Vec<f64>> = HashMap::new();
    for li in 0..config.lengths.len() {
        for ri in 0..regions.len() {
            for &mode in &config.modes {
                outcomes.insert((li, ri, mode), g(li, ri, mode));
            }
        }
    }
    let interventions: Vec<Intervention> = config
        .intensities
        .iter()
        .map(|&h| Intervention::homogeneous(h, spec.window))
        .collect::<Result<_, _>>()?;

    let mut records = Vec::new();
    let mut variance_records = Vec::new();
    for &m in &config.windows {
        let seqs: Vec<InterventionSequence> = interventions
            .iter()
            .map(|i| InterventionSequence::iid(i.clone(), m))
            .collect::<Result<_, _>>()?;
        let positions = burn + m - 1..burn + longest;
        let truths: Vec<TruthOracle> = seqs
            .iter()
            .enumerate()
            .map(|(hi, seq)| {
                let seed = tree.path(&[purpose::TRUTH, m as u64, hi as u64]).value();
                ctx.truth(seq, regions, positions.clone(), config.truth_reps, seed)
            })
            .collect::<Result<_, _>>()?;
        let functionals: Vec<Functional> = kernels
            .iter()
            .map(|k| Functional::Smoothed(*k))
            .chain(std::iter::once(Functional::Count))
            .collect();
        let variance: Option<VarianceOracle> = if config.variance_windows.contains(&m) {
            let seed = tree.path(&[purpose::VARIANCE, m as u64]).value();
            Some(ctx.variance(&seqs, regions, &functionals, positions.clone(), config.variance_reps, seed)?)
        } else {
            None
        };
        for (li, &t_len) in config.lengths.iter().enumerate() {
            let end = burn + t_len;
            let first = burn + m - 1;
            let fit_l = &fitted[li];
            debug_assert_eq!(fit_l.range.end, end);
            for (hi, seq) in seqs.iter().enumerate() {
                let h = config.intensities[hi];
                let true_ws = WeightSeries::compute(seq, &treatments[..end], &true_lp[..end], first)?;
                let fitted_ws = WeightSeries::compute(seq, &treatments[..end], &fit_l.correct[..end], first)?;
                let unadjusted_ws = WeightSeries::compute(seq, &treatments[..end], &fit_l.homogeneous[..end], first)?;
                let estimators = [
                    ("ipw", EstimatorKind::Ipw, &true_ws),
                    ("hajek", EstimatorKind::Hajek, &true_ws),
                    ("ipw-fitted", EstimatorKind::Ipw, &fitted_ws),
                    ("hajek-fitted", EstimatorKind::Hajek, &fitted_ws),
                    ("unadjusted", EstimatorKind::Ipw, &unadjusted_ws),
                ];
                for (ri, region) in regions.iter().enumerate() {
                    let label = region_label(region.parts());
                    let truth = truths[hi].average(ri, first..end);
                    for &mode in &config.modes {
                        let gs = &outcomes[&(li, ri, mode)][first..end];
                        for (name, kind, ws) in &estimators {
                            let settings = EstimatorSettings {
                                kernel: kernels[li],
                                mode,
                                level: config.levels[0],
                                t_total: Some(t_len),
                            };
                            let result = estimate_from_outcomes(name, *kind, ws, gs, region, &settings)?;
                            let mut push = |flavor: &str, var: f64| -> Result<(), SimError> {
                                for &level in &config.levels {
                                    let ci = confidence_interval(result.estimate, var, level)?;
                                    records.push(CoverageRecord {
                                        dataset: d,
                                        length: t_len,
                                        m,
                                        intensity: h,
                                        region: label.clone(),
                                        mode,
                                        estimator: name.to_string(),
                                        flavor: flavor.to_string(),
                                        level,
                                        estimate: result.estimate,
                                        truth,
                                        std_error: var.sqrt(),
                                        lower: ci.lower,
                                        upper: ci.upper,
                                        covered: ci.lower <= truth && truth <= ci.upper,
                                    });
                                }
                                Ok(())
                            };
                            push("bound", result.variance_bound)?;
                            if *name == "ipw" {
                                if let Some(vo) = &variance {
                                    let fi = match mode {
                                        OutcomeMode::Smoothed => li,
                                        OutcomeMode::Count => kernels.len(),
                                    };
                                    let mom = vo.moments(hi, ri, fi, first..end);
                                    push("mc-v", mom.v / t_len as f64)?;
                                    push("mc-v*", mom.v_star / t_len as f64)?;
                                    variance_records.push(VarianceRecord {
                                        dataset: d,
                                        length: t_len,
                                        m,
                                        intensity: h,
                                        region: label.clone(),
                                        mode,
                                        v: mom.v,
                                        v_star: mom.v_star,
                                        v_star_hat: result.variance_bound * t_len as f64,
                                        oracle_mean: mom.mean,
                                        truth,
                                    });
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    log::info!("coverage dataset {d} done");
    Ok((records, variance_records))
}

/// Runs every dataset and cell of the experiment. Datasets run in parallel;
/// results are ordered by dataset regardless of scheduling.
pub fn coverage_experiment(spec: &DgpSpec, config: &CoverageConfig) -> Result<CoverageTable, SimError> {
    config.validate(spec)?;
    let mut spec = spec.clone();
    spec.periods = *config.lengths.iter().max().expect("validated");
    let dgp = Dgp::new(spec.clone())?;
    let regions: Vec<Region> = config
        .regions
        .iter()
        .map(|r| Region::new(spec.window, &[*r]))
        .collect::<Result<_, _>>()?;
    let parts: Vec<(Vec<CoverageRecord>, Vec<VarianceRecord>)> = (0..config.datasets)
        .into_par_iter()
        .map(|d| run_dataset(&dgp, config, &regions, d))
        .collect::<Result<_, _>>()?;
    let mut records = Vec::new();
    let mut variance = Vec::new();
    for (r, v) in parts {
        records.extend(r);
        variance.extend(v);
    }
    let cells = summarize(&records);
    Ok(CoverageTable {
        config: config.clone(),
        records,
        variance,
        cells,
    })
}

/// Groups records into cells in order of first appearance.
pub fn summarize(records: &[CoverageRecord]) -> Vec<CoverageCell> {
    type Key = (usize, usize, u64, String, OutcomeMode, String, String, u64);
    let mut index: HashMap<Key, usize> = HashMap::new();
    let mut groups: Vec<Vec<&CoverageRecord>> = Vec::new();
    for r in records {
        let key = (
            r.length,
            r.m,
            r.intensity.to_bits(),
            r.region.clone(),
            r.mode,
            r.estimator.clone(),
            r.flavor.clone(),
            r.level.to_bits(),
        );
        let i = *index.entry(key).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[i].push(r);
    }
    groups
        .into_iter()
        .map(|g| {
            let n = g.len() as f64;
            let errors: Vec<f64> = g.iter().map(|r| (r.estimate - r.truth).abs()).collect();
            let first = g[0];
            CoverageCell {
                length: first.length,
                m: first.m,
                intensity: first.intensity,
                region: first.region.clone(),
                mode: first.mode,
                estimator: first.estimator.clone(),
                flavor: first.flavor.clone(),
                level: first.level,
                datasets: g.len(),
                coverage: g.iter().filter(|r| r.covered).count() as f64 / n,
                median_abs_error: median(&errors),
                mean_estimate: g.iter().map(|r| r.estimate).sum::<f64>() / n,
                mean_truth: g.iter().map(|r| r.truth).sum::<f64>() / n,
                mean_std_error: g.iter().map(|r| r.std_error).sum::<f64>() / n,
            }
        })
        .collect()
}

pub fn write_cells_csv<W: Write>(out: W, cells: &[CoverageCell]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_csv<W: Write>(out: W, records: &[CoverageRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

//! Mode execution and artifact writing.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use pointcause::estimate::{estimate_from_outcomes, outcome_series, write_csv};
use pointcause::interventions::uniform_baseline;
use pointcause::propensity::{fit, log_propensity, LagSource};
use pointcause::simstudy::{
    balance_experiment, coverage_experiment, write_cells_csv, write_records_csv, Dgp, OracleContext,
};
use pointcause::smooth::{bandwidth_rule, baseline_density};
use pointcause::surfaces::{read_raster, write_raster, GridSurface};
use pointcause::{
    effect_contrast, DgpSpec, EstimateResult, EstimatorSettings, FeatureSpec, HistoryFrame, Intervention,
    InterventionSequence, KernelSpec, Point, PointPattern, PoissonProcess, PropensityDesign, PropensityModel,
    QuadratureGrid, Region, Surface, WeightSeries, Window,
};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{rect, resolve, Baseline, InterventionSection, Mode, Profile, PropensitySection, ScenarioConfig};
use crate::error::CliError;
use crate::ingest::{align, ingest_patterns, DataQuality};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub threads: Option<usize>,
    pub profile: Profile,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
}

/// Everything a mode produces, before it touches the disk.
#[derive(Default)]
struct Outputs {
    results_csv: Vec<u8>,
    results_json: Value,
    files: Vec<(String, Vec<u8>)>,
    rasters: Vec<(String, GridSurface)>,
    dgp: Option<DgpSpec>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_sha256: String,
    config_path: String,
    config: &'a ScenarioConfig,
    config_toml: String,
    dgp_spec: Option<&'a DgpSpec>,
    mode: Mode,
    profile: Profile,
    seed: u64,
    threads: usize,
    versions: BTreeMap<&'static str, &'static str>,
    outputs: BTreeMap<String, String>,
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn run(config_path: &Path, opts: &RunOptions) -> Result<RunSummary, CliError> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let mut config = ScenarioConfig::parse(&text)?;
    let base = config_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let base = fs::canonicalize(&base).unwrap_or(base);
    let out = match (&opts.out, &config.output) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => resolve(&base, o),
        (None, None) => base.join("pointcause-out"),
    };
    fs::create_dir_all(&out).map_err(|e| CliError::Config(format!("output: cannot create {}: {e}", out.display())))?;
    let out = fs::canonicalize(&out).unwrap_or(out);
    let threads = opts
        .threads
        .or(config.threads)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if threads == 0 {
        return Err(CliError::Config("threads: must be at least 1".into()));
    }
    absolutize(&mut config, &base);
    config.threads = Some(threads);
    config.output = Some(out.clone());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(CliError::other)?;
    log::info!("mode {:?}, {threads} threads, output {}", config.mode, out.display());
    let outputs = pool.install(|| match config.mode {
        Mode::Simulate => simulate(&config),
        Mode::Estimate => estimate(&config),
        Mode::TruthOracle => truth_oracle(&config),
        Mode::Coverage => coverage(&config, opts.profile),
        Mode::Balance => balance(&config),
    })?;

    let mut written: BTreeMap<String, String> = BTreeMap::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<(), CliError> {
        fs::write(out.join(name), bytes)?;
        written.insert(name.to_string(), sha256(bytes));
        Ok(())
    };
    put("results.csv", &outputs.results_csv)?;
    let json = serde_json::to_vec_pretty(&outputs.results_json).map_err(CliError::other)?;
    put("results.json", &json)?;
    for (name, bytes) in &outputs.files {
        put(name, bytes)?;
    }
    for (name, raster) in &outputs.rasters {
        let path = out.join(name);
        write_raster(&path, raster).map_err(CliError::other)?;
        written.insert(name.clone(), sha256(&fs::read(&path)?));
    }

    let manifest = Manifest {
        config_sha256: sha256(text.as_bytes()),
        config_path: fs::canonicalize(config_path)
            .unwrap_or_else(|_| config_path.to_path_buf())
            .display()
            .to_string(),
        config: &config,
        config_toml: toml::to_string(&config).map_err(CliError::other)?,
        dgp_spec: outputs.dgp.as_ref(),
        mode: config.mode,
        profile: opts.profile,
        seed: config.seed,
        threads,
        versions: BTreeMap::from([
            ("pointcause", pointcause::VERSION),
            ("pointcause-cli", env!("CARGO_PKG_VERSION")),
        ]),
        outputs: written.clone(),
    };
    let bytes = serde_json::to_vec_pretty(&manifest).map_err(CliError::other)?;
    fs::write(out.join("manifest.json"), bytes)?;
    let mut files: Vec<String> = written.into_keys().collect();
    files.push("manifest.json".into());
    Ok(RunSummary { out_dir: out, files })
}

/// Rewrites every input path relative to the config file as an absolute
/// path, so the manifest's copy runs from anywhere.
fn absolutize(config: &mut ScenarioConfig, base: &Path) {
    if let Some(d) = config.dgp.as_mut() {
        if let Some(p) = d.spec.as_mut() {
            *p = resolve(base, p);
        }
    }
    if let Some(d) = config.data.as_mut() {
        d.treatments.path = resolve(base, &d.treatments.path);
        d.outcomes.path = resolve(base, &d.outcomes.path);
    }
    match config.propensity.as_mut() {
        Some(PropensitySection::Fit { covariates, .. }) => {
            covariates.values_mut().for_each(|p| *p = resolve(base, p));
        }
        Some(PropensitySection::File { path, covariates, .. }) => {
            *path = resolve(base, path);
            covariates.values_mut().for_each(|p| *p = resolve(base, p));
        }
        _ => {}
    }
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(CliError::other)?;
    }
    w.into_inner().map_err(CliError::other)
}

fn to_json<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(CliError::other)
}

// ---------------------------------------------------------------- simulate

#[derive(Serialize)]
struct CountRow {
    period: u32,
    burn_in: bool,
    treatment: usize,
    outcome: usize,
    x3: usize,
    x4: usize,
}

fn simulate(config: &ScenarioConfig) -> Result<Outputs, CliError> {
    let spec = config.dgp_spec(Path::new(""))?;
    let dgp = Dgp::new(spec.clone())?;
    let series = dgp.generate(config.seed)?;
    let rows: Vec<CountRow> = series
        .periods
        .iter()
        .enumerate()
        .map(|(i, p)| CountRow {
            period: p.period,
            burn_in: i < spec.burn_in,
            treatment: p.treatment.len(),
            outcome: p.outcome.len(),
            x3: p.confounder_3.len(),
            x4: p.confounder_4.len(),
        })
        .collect();
    let mut events = Vec::new();
    series.write_csv(&mut events).map_err(CliError::other)?;
    let (mean_w, mean_y) = series.mean_counts();
    let mut out = Outputs {
        results_csv: csv_bytes(&rows)?,
        results_json: json!({
            "seed": config.seed,
            "periods": spec.periods,
            "burn_in": spec.burn_in,
            "mean_treatment_count": mean_w,
            "mean_outcome_count": mean_y,
        }),
        files: vec![("series.csv".into(), events)],
        ..Default::default()
    };
    if config.rasters {
        let g = dgp.grid();
        let w = *dgp.window();
        let x1 = GridSurface::from_fn(w, g.nx(), g.ny(), |p| dgp.x1(p)).map_err(CliError::other)?;
        let x2 = GridSurface::from_fn(w, g.nx(), g.ny(), |p| dgp.x2(p)).map_err(CliError::other)?;
        out.rasters = vec![("x1.csv".into(), x1), ("x2.csv".into(), x2)];
    }
    out.dgp = Some(spec);
    Ok(out)
}

// ---------------------------------------------------------------- estimate

fn grid_for(window: Window, resolution: Option<usize>, key: &str) -> Result<QuadratureGrid, CliError> {
    match resolution {
        None => Ok(QuadratureGrid::default_for(window)),
        Some(n) => QuadratureGrid::new(window, n, n).map_err(|e| CliError::Config(format!("{key}: {e}"))),
    }
}

fn max_lag(features: &[FeatureSpec]) -> usize {
    features
        .iter()
        .map(|f| match f {
            FeatureSpec::LagDecay { lags, .. } => lags.iter().copied().max().unwrap_or(0),
            _ => 0,
        })
        .max()
        .unwrap_or(0)
}

fn load_covariates(
    features: &[FeatureSpec],
    paths: &BTreeMap<String, PathBuf>,
) -> Result<BTreeMap<String, Surface>, CliError> {
    for f in features {
        if let FeatureSpec::Covariate { name } = f {
            if !paths.contains_key(name) {
                return Err(CliError::Config(format!("propensity.covariates: no raster for feature {name:?}")));
            }
        }
        if let FeatureSpec::LagDecay { lags, scale, source, .. } = f {
            let what = match source {
                LagSource::Treatment => "treatment",
                LagSource::Outcome => "outcome",
            };
            if lags.is_empty() || lags.contains(&0) || !(*scale > 0.0) {
                return Err(CliError::Config(format!(
                    "propensity.features: {what} lag feature needs lags >= 1 and a positive scale"
                )));
            }
        }
    }
    paths
        .iter()
        .map(|(name, p)| {
            let r = read_raster(p).map_err(|e| CliError::Config(format!("propensity.covariates.{name}: {e}")))?;
            Ok((name.clone(), Surface::Grid(r)))
        })
        .collect()
}

/// Log propensity per series position; NaN where the history is too short
/// for the model's lags.
struct Propensity {
    log_p: Vec<f64>,
    lag: usize,
    model: Option<PropensityModel>,
    grid: QuadratureGrid,
}

fn propensity(
    section: &PropensitySection,
    window: Window,
    treatments: &[PointPattern],
    outcomes: &[PointPattern],
) -> Result<Propensity, CliError> {
    let t = treatments.len();
    let (model, covs, grid) = match section {
        PropensitySection::Homogeneous => {
            let grid = QuadratureGrid::default_for(window);
            let total: usize = treatments.iter().map(PointPattern::len).sum();
            let rate = total as f64 / (t as f64 * window.area());
            if total == 0 {
                return Err(CliError::Fit("homogeneous propensity: no treatment points".into()));
            }
            let process = PoissonProcess::homogeneous(rate, window).map_err(|e| CliError::Fit(e.to_string()))?;
            let log_p = treatments
                .iter()
                .map(|w| process.log_density(w, &grid).map(|d| d.value()))
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Fit(e.to_string()))?;
            return Ok(Propensity {
                log_p,
                lag: 0,
                model: None,
                grid,
            });
        }
        PropensitySection::Fit {
            features,
            covariates,
            resolution,
        } => {
            if features.is_empty() {
                return Err(CliError::Config("propensity.features: empty".into()));
            }
            let grid = grid_for(window, *resolution, "propensity.resolution")?;
            let covs = load_covariates(features, covariates)?;
            let frames = HistoryFrame::from_series(treatments, outcomes, &vec![covs.clone(); t], max_lag(features));
            let design = PropensityDesign::build(features, &frames, treatments, &grid)?;
            let model = fit(&design, None)?;
            if let Some(d) = &model.diagnostics {
                if !d.converged {
                    return Err(CliError::Fit(format!(
                        "no convergence after {} iterations (max |score| {:.3e})",
                        d.iterations, d.gradient_max_norm
                    )));
                }
            }
            (model, covs, grid)
        }
        PropensitySection::File {
            path,
            covariates,
            resolution,
        } => {
            let model = PropensityModel::load(path)
                .map_err(|e| CliError::Config(format!("propensity.path: {}: {e}", path.display())))?;
            let grid = grid_for(window, *resolution, "propensity.resolution")?;
            let covs = load_covariates(&model.features, covariates)?;
            (model, covs, grid)
        }
    };
    let lag = max_lag(&model.features);
    let frames = HistoryFrame::from_series(treatments, outcomes, &vec![covs; t], lag);
    let log_p = frames
        .par_iter()
        .zip(treatments)
        .map(|(f, w)| {
            if f.depth() < lag {
                Ok(f64::NAN)
            } else {
                log_propensity(&model, f, w, &grid).map(|d| d.value())
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Propensity {
        log_p,
        lag,
        model: Some(model),
        grid,
    })
}

fn build_intervention(
    i: usize,
    section: &InterventionSection,
    window: Window,
    grid: &QuadratureGrid,
    pooled: &PointPattern,
) -> Result<Intervention, CliError> {
    let key = format!("interventions[{i}]");
    let baseline = |b: &Baseline| -> Result<Surface, CliError> {
        match b {
            Baseline::Uniform => Ok(uniform_baseline(&window)),
            Baseline::Treatments => baseline_density(pooled, grid)
                .map_err(|e| CliError::Config(format!("{key}.baseline: {e}"))),
        }
    };
    let built = match section {
        InterventionSection::Homogeneous { rate, .. } => Intervention::homogeneous(*rate, window),
        InterventionSection::ScaledBaseline { count, baseline: b, .. } => {
            Intervention::scaled_baseline(*count, &baseline(b)?, grid)
        }
        InterventionSection::Focal {
            count,
            focus,
            precision,
            baseline: b,
            ..
        } => Intervention::focal(*count, &baseline(b)?, Point::new(focus[0], focus[1]), *precision, grid),
        InterventionSection::Local {
            region,
            inside,
            outside,
            baseline: b,
            ..
        } => {
            let r = Region::new(window, &[rect(region)]).map_err(|e| CliError::Config(format!("{key}.region: {e}")))?;
            Intervention::local(&r, *inside, *outside, &baseline(b)?, grid)
        }
    };
    built.map_err(|e| CliError::Config(format!("{key}: {e}")))
}

fn regions(window: Window, rects: &[[f64; 4]], key: &str) -> Result<Vec<Region>, CliError> {
    if rects.is_empty() {
        return Ok(vec![Region::whole(window)]);
    }
    rects
        .iter()
        .enumerate()
        .map(|(i, r)| Region::new(window, &[rect(r)]).map_err(|e| CliError::Config(format!("{key}[{i}]: {e}"))))
        .collect()
}

fn pooled(window: Window, patterns: &[PointPattern]) -> Result<PointPattern, CliError> {
    let pts: Vec<Point> = patterns.iter().flat_map(|p| p.points().iter().copied()).collect();
    PointPattern::new(window, 1, pts).map_err(CliError::other)
}

fn estimate(config: &ScenarioConfig) -> Result<Outputs, CliError> {
    let data = config.data.as_ref().expect("validated");
    let w = data.window;
    let window = Window::new(w[0], w[1], w[2], w[3]).map_err(|e| CliError::Config(format!("data.window: {e}")))?;
    let tr = ingest_patterns(&data.treatments.path, window, data.treatments.kind.as_deref())?;
    let yo = ingest_patterns(&data.outcomes.path, window, data.outcomes.kind.as_deref())?;
    let quality: Vec<DataQuality> = vec![tr.quality, yo.quality];
    let (mut treatments, mut outcomes) = (tr.patterns, yo.patterns);
    align(&mut treatments, &mut outcomes, window);
    let t = treatments.len();
    if t < 2 {
        return Err(CliError::Config(format!("data: need at least two periods, found {t}")));
    }
    let settings_section = config.estimator.clone().unwrap_or_default();
    let prop = propensity(config.propensity.as_ref().expect("validated"), window, &treatments, &outcomes)?;
    let grid = &prop.grid;
    let all = pooled(window, &treatments)?;
    let interventions: Vec<(String, Intervention)> = config
        .interventions
        .iter()
        .enumerate()
        .map(|(i, s)| Ok((s.name().to_string(), build_intervention(i, s, window, grid, &all)?)))
        .collect::<Result<_, CliError>>()?;
    let bandwidth = settings_section.bandwidth.unwrap_or_else(|| bandwidth_rule(t));
    let settings = EstimatorSettings {
        kernel: KernelSpec::isotropic(bandwidth).map_err(|e| CliError::Config(format!("estimator.bandwidth: {e}")))?,
        mode: settings_section.outcome,
        level: settings_section.level,
        t_total: None,
    };
    let regions = regions(window, &settings_section.regions, "estimator.regions")?;

    let mut results: Vec<EstimateResult> = Vec::new();
    let mut contrasts: Vec<EstimateResult> = Vec::new();
    for &m in &settings_section.windows {
        let first = prop.lag + m - 1;
        if first >= t {
            return Err(CliError::Config(format!(
                "estimator.windows: M = {m} leaves no estimation periods in a series of {t} with lag {}",
                prop.lag
            )));
        }
        let weights: Vec<WeightSeries> = interventions
            .iter()
            .map(|(_, h)| {
                let seq = InterventionSequence::iid(h.clone(), m)?;
                let ws = WeightSeries::compute(&seq, &treatments, &prop.log_p, first)?;
                Ok(ws)
            })
            .collect::<Result<_, CliError>>()?;
        for region in &regions {
            let g = outcome_series(&outcomes, first, t - first, region, &settings)?;
            let mut cell: Vec<EstimateResult> = Vec::new();
            for ((name, _), ws) in interventions.iter().zip(&weights) {
                for &kind in &settings_section.kinds {
                    cell.push(estimate_from_outcomes(name, kind, ws, &g, region, &settings)?);
                }
            }
            for [a, b] in &settings_section.contrasts {
                for &kind in &settings_section.kinds {
                    let find = |n: &str| {
                        cell.iter()
                            .find(|r| r.descriptor.label == n && r.descriptor.estimator == kind)
                            .expect("contrast names validated")
                    };
                    contrasts.push(effect_contrast(find(a), find(b))?);
                }
            }
            results.extend(cell);
        }
    }
    let everything: Vec<EstimateResult> = results.iter().chain(&contrasts).cloned().collect();
    let mut table = Vec::new();
    write_csv(&mut table, &everything)?;
    let mut out = Outputs {
        results_csv: table,
        results_json: json!({
            "periods": t,
            "bandwidth": bandwidth,
            "propensity": prop.model,
            "estimates": to_json(&results)?,
            "contrasts": to_json(&contrasts)?,
            "data_quality": to_json(&quality)?,
        }),
        files: vec![("data_quality.json".into(), serde_json::to_vec_pretty(&quality).map_err(CliError::other)?)],
        ..Default::default()
    };
    if let Some(model) = &prop.model {
        out.files.push(("propensity_model.json".into(), model.to_json().into_bytes()));
    }
    if config.rasters {
        for (name, h) in &interventions {
            let r = h.intensity().rasterize(grid).map_err(CliError::other)?;
            out.rasters.push((format!("intervention_{name}.csv"), r));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- truth oracle

#[derive(Serialize)]
struct TruthRow {
    intervention: String,
    m: usize,
    region: String,
    period: u32,
    truth: f64,
    mc_variance: f64,
}

#[derive(Serialize)]
struct TruthSummary {
    intervention: String,
    m: usize,
    region: String,
    periods: usize,
    reps: usize,
    average: f64,
    standard_error: f64,
}

fn truth_oracle(config: &ScenarioConfig) -> Result<Outputs, CliError> {
    let spec = config.dgp_spec(Path::new(""))?;
    let dgp = Dgp::new(spec.clone())?;
    let series = dgp.generate(config.seed)?;
    let section = config.oracle.clone().unwrap_or(crate::config::OracleSection {
        reps: 100,
        windows: vec![1],
        regions: vec![],
    });
    let window = spec.window;
    let regions = regions(window, &section.regions, "oracle.regions")?;
    let all = pooled(window, &series.treatments())?;
    let ctx = OracleContext::new(&dgp, &series);
    let labels: Vec<String> = regions
        .iter()
        .map(|r| pointcause::estimate::region_label(r.parts()))
        .collect();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (i, s) in config.interventions.iter().enumerate() {
        let h = build_intervention(i, s, window, dgp.grid(), &all)?;
        for &m in &section.windows {
            let start = spec.burn_in.max(m - 1);
            let positions = start..series.len();
            let seq = InterventionSequence::iid(h.clone(), m)?;
            let seed = pointcause::SeedTree::new(config.seed).path(&[i as u64, m as u64]).value();
            let oracle = ctx.truth(&seq, &regions, positions.clone(), section.reps, seed)?;
            for (r, label) in labels.iter().enumerate() {
                for (k, pos) in positions.clone().enumerate() {
                    let mean = oracle.mean[r][k];
                    rows.push(TruthRow {
                        intervention: s.name().to_string(),
                        m,
                        region: label.clone(),
                        period: series.periods[pos].period,
                        truth: mean,
                        mc_variance: oracle.second[r][k] - mean * mean,
                    });
                }
                summary.push(TruthSummary {
                    intervention: s.name().to_string(),
                    m,
                    region: label.clone(),
                    periods: positions.len(),
                    reps: section.reps,
                    average: oracle.average(r, positions.clone()),
                    standard_error: oracle.standard_error(r, positions.clone()),
                });
            }
        }
    }
    Ok(Outputs {
        results_csv: csv_bytes(&rows)?,
        results_json: json!({ "seed": config.seed, "summary": to_json(&summary)? }),
        files: vec![("summary.csv".into(), csv_bytes(&summary)?)],
        dgp: Some(spec),
        ..Default::default()
    })
}

// ---------------------------------------------------------------- coverage

fn coverage(config: &ScenarioConfig, profile: Profile) -> Result<Outputs, CliError> {
    let spec = config.dgp_spec(Path::new(""))?;
    let cc = config.coverage_config(profile);
    log::info!(
        "coverage: {} datasets, lengths {:?}, windows {:?}, intensities {:?}",
        cc.datasets,
        cc.lengths,
        cc.windows,
        cc.intensities
    );
    let table = coverage_experiment(&spec, &cc)?;
    let mut cells = Vec::new();
    write_cells_csv(&mut cells, &table.cells).map_err(CliError::other)?;
    let mut records = Vec::new();
    write_records_csv(&mut records, &table.records).map_err(CliError::other)?;
    Ok(Outputs {
        results_csv: cells,
        results_json: json!({
            "config": to_json(&table.config)?,
            "cells": to_json(&table.cells)?,
        }),
        files: vec![
            ("records.csv".into(), records),
            ("variance.csv".into(), csv_bytes(&table.variance)?),
        ],
        dgp: Some(spec),
        ..Default::default()
    })
}

// ---------------------------------------------------------------- balance

#[derive(Serialize)]
struct BalanceLine {
    replicate: usize,
    feature: String,
    unweighted_coefficient: f64,
    unweighted_se: f64,
    unweighted_p: f64,
    weighted_coefficient: f64,
    weighted_se: f64,
    weighted_p: f64,
    truncated_periods: usize,
    effective_sample_size: f64,
}

fn balance(config: &ScenarioConfig) -> Result<Outputs, CliError> {
    let spec = config.dgp_spec(Path::new(""))?;
    let experiment = config.balance_experiment();
    let summary = balance_experiment(&spec, &experiment)?;
    let rows: Vec<BalanceLine> = summary
        .reports
        .iter()
        .enumerate()
        .flat_map(|(i, rep)| {
            rep.rows.iter().map(move |r| BalanceLine {
                replicate: i,
                feature: r.feature.clone(),
                unweighted_coefficient: r.unweighted_coefficient,
                unweighted_se: r.unweighted_se,
                unweighted_p: r.unweighted_p,
                weighted_coefficient: r.weighted_coefficient,
                weighted_se: r.weighted_se,
                weighted_p: r.weighted_p,
                truncated_periods: rep.truncated_periods,
                effective_sample_size: rep.effective_sample_size,
            })
        })
        .collect();
    Ok(Outputs {
        results_csv: csv_bytes(&rows)?,
        results_json: json!({
            "experiment": {
                "replicates": experiment.replicates,
                "truncation_quantile": experiment.truncation_quantile,
                "fitted_weights": experiment.fitted_weights,
                "feature": experiment.feature,
                "seed": experiment.seed,
            },
            "feature": summary.feature,
            "mean_weighted_coefficient": summary.mean_weighted_coefficient,
            "weighted_coefficient_se": summary.weighted_coefficient_se,
            "median_weighted_p": summary.median_weighted_p,
            "median_unweighted_p": summary.median_unweighted_p,
        }),
        dgp: Some(spec),
        ..Default::default()
    })
}

//! Monte Carlo truth and variance oracles. Both roll the known design
//! forward from the observed history, one independent stream per
//! `(period, replicate)`.

use std::ops::Range;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::Serialize;

use super::{Confounders, Dgp, SimError, SimulatedSeries, StaticField};
use crate::geom::{Point, Region};
use crate::interventions::InterventionSequence;
use crate::pointprocess::{PointProcessError, PoissonProcess};
use crate::rng::{purpose, SeedTree, Stream};
use crate::smooth::{smoothed_points_integral, KernelSpec};

/// An outcome functional `G(Y_t)` evaluated inside the variance oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Functional {
    Smoothed(KernelSpec),
    Count,
}

impl Functional {
    fn eval(&self, points: &[Point], region: &Region) -> f64 {
        match self {
            Functional::Smoothed(k) => smoothed_points_integral(points, k, region),
            Functional::Count => points.iter().filter(|p| region.contains(**p)).count() as f64,
        }
    }
}

/// Per-position static fields of one observed series.
pub struct OracleContext<'a> {
    dgp: &'a Dgp,
    series: &'a SimulatedSeries,
    fields: Vec<StaticField>,
    // ∫λ^W at each position given the observed previous period
    observed_integrals: OnceLock<Vec<f64>>,
}

impl<'a> OracleContext<'a> {
    pub fn new(dgp: &'a Dgp, series: &'a SimulatedSeries) -> Self {
        let fields = series
            .periods
            .par_iter()
            .map(|p| dgp.static_field(Confounders::from(p)))
            .collect();
        OracleContext {
            dgp,
            series,
            fields,
            observed_integrals: OnceLock::new(),
        }
    }

    pub fn series(&self) -> &SimulatedSeries {
        self.series
    }

    pub fn dgp(&self) -> &Dgp {
        self.dgp
    }

    fn conf(&self, j: usize) -> Confounders<'a> {
        Confounders::from(&self.series.periods[j])
    }

    fn observed_w(&self, j: usize) -> &'a [Point] {
        self.series.periods[j].treatment.points()
    }

    fn observed_y(&self, j: usize) -> &'a [Point] {
        self.series.periods[j].outcome.points()
    }

    fn observed_integral(&self, j: usize) -> f64 {
        let all = self.observed_integrals.get_or_init(|| {
            (0..self.series.len())
                .into_par_iter()
                .map(|j| {
                    let (w_prev, y_prev) = match j {
                        0 => (&[][..], &[][..]),
                        _ => (self.observed_w(j - 1), self.observed_y(j - 1)),
                    };
                    self.dgp.treatment_integral(&self.fields[j], w_prev, y_prev)
                })
                .collect()
        });
        all[j]
    }

    fn check_positions(&self, m: usize, positions: &Range<usize>) -> Result<(), SimError> {
        if m == 0 || positions.start + 1 < m || positions.end > self.series.len() || positions.is_empty() {
            return Err(SimError::Spec(format!(
                "oracle positions {positions:?} invalid for M = {m} and a series of {} periods",
                self.series.len()
            )));
        }
        Ok(())
    }

    /// Treatments of positions `start..=j` drawn elsewhere, the rest observed.
    fn recent<'b>(&'b self, j: usize, start: usize, path: &'b [Vec<Point>]) -> Vec<&'b [Point]> {
        let lags = self.dgp.spec().outcome.treatment_lags;
        (0..lags)
            .filter_map(|b| j.checked_sub(b))
            .map(|k| if k >= start { path[k - start].as_slice() } else { self.observed_w(k) })
            .collect()
    }

    fn one_truth_draw(
        &self,
        procs: &[PoissonProcess],
        t: usize,
        rng: &mut Stream,
    ) -> Result<Vec<Point>, SimError> {
        let m = procs.len();
        let start = t + 1 - m;
        let mut w_path: Vec<Vec<Point>> = Vec::with_capacity(m);
        let mut y_path: Vec<Vec<Point>> = Vec::with_capacity(m);
        for j in start..=t {
            let w = procs[t - j].sample(j as u32 + 1, rng)?;
            w_path.push(w.points().to_vec());
            let y = {
                let recent = self.recent(j, start, &w_path);
                let y_prev: &[Point] = match j {
                    0 => &[],
                    _ if j > start => &y_path[j - 1 - start],
                    _ => self.observed_y(j - 1),
                };
                self.dgp.sample_outcome(&self.fields[j], self.conf(j), &recent, y_prev, rng)?
            };
            y_path.push(y);
        }
        Ok(y_path.pop().expect("m >= 1"))
    }

    /// Expected counts in each region at each position under `seq`, holding
    /// the history before `t − M + 1` at its observed values.
    pub fn truth(
        &self,
        seq: &InterventionSequence,
        regions: &[Region],
        positions: Range<usize>,
        reps: usize,
        seed: u64,
    ) -> Result<TruthOracle, SimError> {
        let m = seq.len();
        self.check_positions(m, &positions)?;
        if reps == 0 {
            return Err(SimError::Spec("oracle needs at least one replicate".into()));
        }
        let procs = seq
            .slots()
            .iter()
            .map(|h| h.process(self.dgp.grid()))
            .collect::<Result<Vec<_>, _>>()?;
        let tree = SeedTree::new(seed).child(purpose::TRUTH);
        let per_t: Vec<(Vec<f64>, Vec<f64>)> = positions
            .clone()
            .into_par_iter()
            .map(|t| {
                let mut sum = vec![0.0; regions.len()];
                let mut sq = vec![0.0; regions.len()];
                for r in 0..reps {
                    let mut rng = tree.path(&[t as u64, r as u64]).stream();
                    let y = self.one_truth_draw(&procs, t, &mut rng)?;
                    for (k, region) in regions.iter().enumerate() {
                        let c = y.iter().filter(|p| region.contains(**p)).count() as f64;
                        sum[k] += c;
                        sq[k] += c * c;
                    }
                }
                let n = reps as f64;
                Ok((sum.iter().map(|s| s / n).collect(), sq.iter().map(|s| s / n).collect()))
            })
            .collect::<Result<_, SimError>>()?;
        let mut mean = vec![Vec::with_capacity(per_t.len()); regions.len()];
        let mut second = vec![Vec::with_capacity(per_t.len()); regions.len()];
        for (a, b) in per_t {
            for k in 0..regions.len() {
                mean[k].push(a[k]);
                second[k].push(b[k]);
            }
        }
        Ok(TruthOracle {
            m,
            reps,
            positions,
            mean,
            second,
        })
    }

    /// Draws treatments and outcomes for `t−M+1..=t` from the design itself
    /// and returns the path with its true log propensities.
    fn one_variance_draw(&self, m: usize, t: usize, rng: &mut Stream) -> Result<(Vec<Vec<Point>>, Vec<f64>, Vec<Point>), SimError> {
        let start = t + 1 - m;
        let mut w_path: Vec<Vec<Point>> = Vec::with_capacity(m);
        let mut y_path: Vec<Vec<Point>> = Vec::with_capacity(m);
        let mut log_p = Vec::with_capacity(m);
        for j in start..=t {
            let (w_prev, y_prev): (&[Point], &[Point]) = match j {
                0 => (&[], &[]),
                _ if j > start => (&w_path[j - 1 - start], &y_path[j - 1 - start]),
                _ => (self.observed_w(j - 1), self.observed_y(j - 1)),
            };
            let conf = self.conf(j);
            let field = &self.fields[j];
            let w = self.dgp.sample_treatment(field, conf, w_prev, y_prev, rng)?;
            let integral = match j {
                _ if j > start => self.dgp.treatment_integral(field, w_prev, y_prev),
                _ => self.observed_integral(j),
            };
            log_p.push(self.dgp.treatment_log_density_given(integral, conf, &w, w_prev, y_prev));
            w_path.push(w);
            let y = {
                let recent = self.recent(j, start, &w_path);
                let y_prev: &[Point] = match j {
                    0 => &[],
                    _ if j > start => &y_path[j - 1 - start],
                    _ => self.observed_y(j - 1),
                };
                self.dgp.sample_outcome(field, conf, &recent, y_prev, rng)?
            };
            y_path.push(y);
        }
        Ok((w_path, log_p, y_path.pop().expect("m >= 1")))
    }

    /// Per-position mean and second moment of the IPW period estimator with
    /// the true propensity, for every sequence, region and functional.
    /// All sequences must share one length; they reuse the same draws.
    pub fn variance(
        &self,
        seqs: &[InterventionSequence],
        regions: &[Region],
        functionals: &[Functional],
        positions: Range<usize>,
        reps: usize,
        seed: u64,
    ) -> Result<VarianceOracle, SimError> {
        let m = seqs.first().map(InterventionSequence::len).unwrap_or(0);
        if seqs.iter().any(|s| s.len() != m) {
            return Err(SimError::Spec("variance oracle sequences must share one length".into()));
        }
        self.check_positions(m, &positions)?;
        if reps == 0 {
            return Err(SimError::Spec("oracle needs at least one replicate".into()));
        }
        // fill the cache outside the parallel loop so no worker initializes it re-entrantly
        self.observed_integral(0);
        let (ns, nr, nf) = (seqs.len(), regions.len(), functionals.len());
        let idx = |s: usize, r: usize, f: usize| (s * nr + r) * nf + f;
        let tree = SeedTree::new(seed).child(purpose::VARIANCE);
        let per_t: Vec<(Vec<f64>, Vec<f64>)> = positions
            .clone()
            .into_par_iter()
            .map(|t| {
                let mut sum = vec![0.0; ns * nr * nf];
                let mut sq = vec![0.0; ns * nr * nf];
                let mut g = vec![0.0; nr * nf];
                for r in 0..reps {
                    let mut rng = tree.path(&[t as u64, r as u64]).stream();
                    let (w_path, log_p, y) = self.one_variance_draw(m, t, &mut rng)?;
                    for (ri, region) in regions.iter().enumerate() {
                        for (fi, f) in functionals.iter().enumerate() {
                            g[ri * nf + fi] = f.eval(&y, region);
                        }
                    }
                    for (si, seq) in seqs.iter().enumerate() {
                        let mut ell = 0.0;
                        for (k, w) in w_path.iter().enumerate() {
                            let num = match seq.at_lag(m - 1 - k).log_density_points(w) {
                                Ok(v) => v,
                                Err(PointProcessError::DensityZero { .. }) => f64::NEG_INFINITY,
                                Err(e) => return Err(e.into()),
                            };
                            ell += num - log_p[k];
                        }
                        let weight = ell.exp();
                        for c in 0..nr * nf {
                            let est = if g[c] == 0.0 { 0.0 } else { weight * g[c] };
                            let i = idx(si, c / nf, c % nf);
                            sum[i] += est;
                            sq[i] += est * est;
                        }
                    }
                }
                let n = reps as f64;
                Ok((sum.iter().map(|s| s / n).collect(), sq.iter().map(|s| s / n).collect()))
            })
            .collect::<Result<_, SimError>>()?;
        let mut mean = vec![Vec::with_capacity(per_t.len()); ns * nr * nf];
        let mut second = vec![Vec::with_capacity(per_t.len()); ns * nr * nf];
        for (a, b) in per_t {
            for i in 0..ns * nr * nf {
                mean[i].push(a[i]);
                second[i].push(b[i]);
            }
        }
        Ok(VarianceOracle {
            m,
            reps,
            positions,
            shape: (ns, nr, nf),
            mean,
            second,
        })
    }
}

/// Per-position truths `E[N_B(Y_t)]` under an intervention sequence.
#[derive(Debug, Clone, Serialize)]
pub struct TruthOracle {
    pub m: usize,
    pub reps: usize,
    pub positions: Range<usize>,
    /// `mean[region][k]` for position `positions.start + k`.
    pub mean: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl TruthOracle {
    fn slice(&self, range: &Range<usize>) -> Range<usize> {
        let lo = range.start.max(self.positions.start) - self.positions.start;
        let hi = range.end.min(self.positions.end).max(range.start.max(self.positions.start)) - self.positions.start;
        lo..hi
    }

    /// Temporal average over the positions of `range` covered by the oracle.
    pub fn average(&self, region: usize, range: Range<usize>) -> f64 {
        let s = self.slice(&range);
        crate::numeric::mean(&self.mean[region][s])
    }

    /// Monte Carlo standard error of [`TruthOracle::average`].
    pub fn standard_error(&self, region: usize, range: Range<usize>) -> f64 {
        let s = self.slice(&range);
        let n = s.len() as f64;
        let r = self.reps as f64;
        let var: f64 = s
            .map(|k| {
                let m = self.mean[region][k];
                (self.second[region][k] - m * m).max(0.0) * r / (r - 1.0).max(1.0)
            })
            .sum();
        (var / r).sqrt() / n
    }
}

/// Time-averaged moments of the period estimator: `v = mean_t Var_t`,
/// `v* = mean_t E_t[Ŷ²]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceMoments {
    pub mean: f64,
    pub v: f64,
    pub v_star: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceOracle {
    pub m: usize,
    pub reps: usize,
    pub positions: Range<usize>,
    /// (sequences, regions, functionals)
    pub shape: (usize, usize, usize),
    pub mean: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

impl VarianceOracle {
    fn index(&self, seq: usize, region: usize, functional: usize) -> usize {
        let (_, nr, nf) = self.shape;
        (seq * nr + region) * nf + functional
    }

    /// Per-position `(Var_t, E_t[Ŷ²])` with the plug-in variance, so the
    /// second moment always dominates.
    pub fn per_period(&self, seq: usize, region: usize, functional: usize) -> Vec<(f64, f64)> {
        let i = self.index(seq, region, functional);
        self.mean[i]
            .iter()
            .zip(&self.second[i])
            .map(|(m, s)| ((s - m * m).max(0.0), *s))
            .collect()
    }

    pub fn moments(&self, seq: usize, region: usize, functional: usize, range: Range<usize>) -> VarianceMoments {
        let i = self.index(seq, region, functional);
        let lo = range.start.max(self.positions.start) - self.positions.start;
        let hi = (range.end.min(self.positions.end) - self.positions.start).max(lo);
        let pp = self.per_period(seq, region, functional);
        let n = (hi - lo) as f64;
        VarianceMoments {
            mean: self.mean[i][lo..hi].iter().sum::<f64>() / n,
            v: pp[lo..hi].iter().map(|x| x.0).sum::<f64>() / n,
            v_star: pp[lo..hi].iter().map(|x| x.1).sum::<f64>() / n,
        }
    }
}

/// Truth oracle over every estimation position of the series.
pub fn mc_truth_oracle(
    series: &SimulatedSeries,
    seq: &InterventionSequence,
    regions: &[Region],
    reps: usize,
    seed: u64,
) -> Result<TruthOracle, SimError> {
    let dgp = Dgp::new(series.spec.clone())?;
    let ctx = OracleContext::new(&dgp, series);
    let start = series.spec.burn_in + seq.len() - 1;
    ctx.truth(seq, regions, start..series.len(), reps, seed)
}

/// Variance oracle for one sequence, region and functional over every
/// estimation position.
pub fn mc_variance_oracle(
    series: &SimulatedSeries,
    seq: &InterventionSequence,
    region: &Region,
    functional: Functional,
    reps: usize,
    seed: u64,
) -> Result<VarianceMoments, SimError> {
    let dgp = Dgp::new(series.spec.clone())?;
    let ctx = OracleContext::new(&dgp, series);
    let start = series.spec.burn_in + seq.len() - 1;
    let oracle = ctx.variance(
        std::slice::from_ref(seq),
        std::slice::from_ref(region),
        &[functional],
        start..series.len(),
        reps,
        seed,
    )?;
    Ok(oracle.moments(0, 0, 0, start..series.len()))
}

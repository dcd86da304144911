//! Intercept calibration against target mean counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dgp, DgpSpec, SimError};
use crate::rng::{purpose, SeedTree};
use crate::surfaces::integrate;

/// Target mean counts per period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    pub treatment: f64,
    pub outcome: f64,
    pub confounder: f64,
    /// Relative tolerance on the pilot means.
    pub tolerance: f64,
    pub pilot_periods: usize,
    pub pilot_replicates: usize,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        CalibrationTargets {
            treatment: 5.0,
            outcome: 21.0,
            confounder: 10.0,
            tolerance: 0.05,
            pilot_periods: 200,
            pilot_replicates: 20,
        }
    }
}

fn pilot_means(spec: &DgpSpec, targets: &CalibrationTargets, seed: u64) -> Result<(f64, f64), SimError> {
    let mut spec = spec.clone();
    spec.periods = targets.pilot_periods;
    let dgp = Dgp::new(spec)?;
    let tree = SeedTree::new(seed).child(purpose::CALIBRATION);
    let means: Vec<(f64, f64)> = (0..targets.pilot_replicates)
        .into_par_iter()
        .map(|r| Ok(dgp.generate(tree.child(r as u64).value())?.mean_counts()))
        .collect::<Result<_, SimError>>()?;
    let n = means.len() as f64;
    Ok((
        means.iter().map(|m| m.0).sum::<f64>() / n,
        means.iter().map(|m| m.1).sum::<f64>() / n,
    ))
}

/// Bisection on `f(x) = log(mean(x)/target)`, increasing in `x`, from a
/// starting guess. Pilot draws reuse the same seeds, so `f` is a fixed
/// function of `x`.
fn bisect(mut f: impl FnMut(f64) -> Result<f64, SimError>, guess: f64, tolerance: f64, name: &str) -> Result<f64, SimError> {
    let g = f(guess)?;
    if g.abs() <= tolerance {
        return Ok(guess);
    }
    // mean counts scale roughly like exp(intercept)
    let step = g.abs().max(0.05) * 1.5;
    let (mut lo, mut hi) = if g > 0.0 { (guess - step, guess) } else { (guess, guess + step) };
    let mut expand = 0;
    loop {
        let (flo, fhi) = (f(lo)?, f(hi)?);
        if flo <= 0.0 && fhi >= 0.0 {
            break;
        }
        expand += 1;
        if expand > 20 {
            return Err(SimError::Calibration(format!("{name}: target not bracketed near {guess}")));
        }
        if flo > 0.0 {
            lo -= step * expand as f64;
        }
        if fhi < 0.0 {
            hi += step * expand as f64;
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let v = f(mid)?;
        if v.abs() <= tolerance {
            return Ok(mid);
        }
        if v > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(SimError::Calibration(format!("{name}: bisection did not reach the tolerance")))
}

/// Calibrates `ρ0` in closed form from the road covariate, then alternates
/// bisection on `α0` and `γ0` against pilot series until both mean counts sit
/// within tolerance. Decoupled laws (all slopes zero) get the exact
/// `log(target / area)`.
pub fn calibrate_intercepts(template: &DgpSpec, targets: &CalibrationTargets, seed: u64) -> Result<DgpSpec, SimError> {
    for (name, v) in [
        ("treatment", targets.treatment),
        ("outcome", targets.outcome),
        ("confounder", targets.confounder),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(SimError::Calibration(format!("{name} target must be positive, got {v}")));
        }
    }
    if !(targets.tolerance > 0.0) || targets.pilot_periods < 2 || targets.pilot_replicates == 0 {
        return Err(SimError::Calibration("tolerance, pilot length and replicates must be positive".into()));
    }
    let mut spec = template.clone();
    let dgp = Dgp::new(spec.clone())?;
    let area = spec.window.area();
    let whole = crate::geom::Region::whole(spec.window);
    for j in 0..2 {
        let slope = spec.confounders.slopes[j];
        let mass = integrate(&|p| (slope * dgp.x1(p)).exp(), &whole, dgp.grid())?;
        spec.confounders.intercepts[j] = (targets.confounder / mass).ln();
    }
    let tr = &spec.treatment;
    let treatment_fixed = tr.covariates.iter().all(|c| *c == 0.0) && tr.lag_treatment == 0.0 && tr.lag_outcome == 0.0;
    if treatment_fixed {
        spec.treatment.intercept = (targets.treatment / area).ln();
    }
    let oc = &spec.outcome;
    let outcome_fixed =
        oc.covariates.iter().all(|c| *c == 0.0) && oc.lagged_x2 == 0.0 && oc.treatment == 0.0 && oc.lag_outcome == 0.0;
    if outcome_fixed {
        spec.outcome.intercept = (targets.outcome / area).ln();
    }
    if treatment_fixed && outcome_fixed {
        return Ok(spec);
    }
    let tol = (1.0 + targets.tolerance).ln() * 0.5;
    for _round in 0..10 {
        if !treatment_fixed {
            let base = spec.clone();
            spec.treatment.intercept = bisect(
                |x| {
                    let mut s = base.clone();
                    s.treatment.intercept = x;
                    Ok((pilot_means(&s, targets, seed)?.0 / targets.treatment).ln())
                },
                base.treatment.intercept,
                tol,
                "treatment.intercept",
            )?;
        }
        if !outcome_fixed {
            let base = spec.clone();
            spec.outcome.intercept = bisect(
                |x| {
                    let mut s = base.clone();
                    s.outcome.intercept = x;
                    Ok((pilot_means(&s, targets, seed)?.1 / targets.outcome).ln())
                },
                base.outcome.intercept,
                tol,
                "outcome.intercept",
            )?;
        }
        let (w, y) = pilot_means(&spec, targets, seed)?;
        log::info!("calibration pilot means: treatment {w:.3}, outcome {y:.3}");
        if (w / targets.treatment - 1.0).abs() <= targets.tolerance && (y / targets.outcome - 1.0).abs() <= targets.tolerance
        {
            return Ok(spec);
        }
    }
    Err(SimError::Calibration("alternating bisection did not settle within ten rounds".into()))
}

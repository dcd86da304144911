//! Repeated balance diagnostics over simulated datasets.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dgp, DgpSpec, SimError};
use crate::numeric::{mean, median};
use crate::propensity::{balance_check, fit, BalanceReport, PropensityModel};
use crate::rng::{purpose, SeedTree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceExperiment {
    pub replicates: usize,
    pub truncation_quantile: f64,
    /// Weight by the fitted correct model instead of the true law.
    pub fitted_weights: bool,
    /// Feature whose balance is summarized.
    pub feature: String,
    pub seed: u64,
}

impl Default for BalanceExperiment {
    fn default() -> Self {
        BalanceExperiment {
            replicates: 200,
            truncation_quantile: 1.0,
            fitted_weights: false,
            feature: "Y*[1]".into(),
            seed: 20_240_602,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceSummary {
    pub feature: String,
    pub replicates: usize,
    pub mean_weighted_coefficient: f64,
    /// Monte Carlo standard error of the mean weighted coefficient.
    pub weighted_coefficient_se: f64,
    pub median_weighted_p: f64,
    pub median_unweighted_p: f64,
    pub reports: Vec<BalanceReport>,
}

pub fn balance_experiment(spec: &DgpSpec, experiment: &BalanceExperiment) -> Result<BalanceSummary, SimError> {
    if experiment.replicates < 2 {
        return Err(SimError::Spec("balance experiment needs at least two replicates".into()));
    }
    let dgp = Dgp::new(spec.clone())?;
    let range = spec.burn_in..spec.total_periods();
    let tree = SeedTree::new(experiment.seed).child(purpose::DATASET);
    let reports: Vec<BalanceReport> = (0..experiment.replicates)
        .into_par_iter()
        .map(|r| {
            let series = dgp.generate(tree.child(r as u64).value())?;
            let design = dgp.treatment_design(&series, range.clone())?;
            let model = if experiment.fitted_weights {
                fit(&design, None)?
            } else {
                PropensityModel::fixed(dgp.treatment_features(), dgp.treatment_coefficients())?
            };
            Ok(balance_check(&model, &design, experiment.truncation_quantile)?)
        })
        .collect::<Result<_, SimError>>()?;
    let rows: Vec<_> = reports
        .iter()
        .map(|rep| {
            rep.row(&experiment.feature)
                .ok_or_else(|| SimError::Spec(format!("no feature named {}", experiment.feature)))
        })
        .collect::<Result<_, _>>()?;
    let coefs: Vec<f64> = rows.iter().map(|r| r.weighted_coefficient).collect();
    let m = mean(&coefs);
    let n = coefs.len() as f64;
    let var = coefs.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(BalanceSummary {
        feature: experiment.feature.clone(),
        replicates: experiment.replicates,
        mean_weighted_coefficient: m,
        weighted_coefficient_se: (var / n).sqrt(),
        median_weighted_p: median(&rows.iter().map(|r| r.weighted_p).collect::<Vec<_>>()),
        median_unweighted_p: median(&rows.iter().map(|r| r.unweighted_p).collect::<Vec<_>>()),
        reports,
    })
}

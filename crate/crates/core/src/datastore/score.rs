use super::{Dataset, Prediction, PredictionSet};
use crate::fieldsplit::{confusion, Confusion};
use crate::geometry::FieldLabel;
use crate::precoding::{structure_precoder, sum_se, PrecodeSolution};
use crate::{Error, Result};

/// Allowed violation of the simplex constraints on predicted `λ` and `p`.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecodeScore {
    /// Feasible predictions that were evaluated.
    pub scored: usize,
    /// Predictions rejected for violating the simplex constraints.
    pub infeasible: usize,
    /// Mean over scored records of `SE(pred) / SE(oracle)`.
    pub mean_ratio: f64,
    pub mean_se: f64,
    pub mean_oracle_se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScoreReport {
    /// Over all users of all classification records.
    pub classify: Option<Confusion>,
    pub precode: Option<PrecodeScore>,
}

fn feasible(v: &[f64], total: f64) -> bool {
    v.iter().all(|x| x.is_finite() && *x >= -FEASIBILITY_TOL)
        && (v.iter().sum::<f64>() - total).abs() <= FEASIBILITY_TOL
}

/// Scores predictions record by record against the dataset, which must list
/// the same record ids in the same order.
pub fn score(dataset: &Dataset, predictions: &PredictionSet) -> Result<ScoreReport> {
    if predictions.k_users != dataset.k_users {
        return Err(Error::DimensionMismatch {
            expected: dataset.k_users,
            got: predictions.k_users,
        });
    }
    if predictions.n_antennas != dataset.cfg.n_antennas {
        return Err(Error::DimensionMismatch {
            expected: dataset.cfg.n_antennas,
            got: predictions.n_antennas,
        });
    }
    if predictions.records.len() != dataset.records.len() {
        return Err(Error::LengthMismatch(predictions.records.len(), dataset.records.len()));
    }

    let (mut pred_labels, mut true_labels): (Vec<FieldLabel>, Vec<FieldLabel>) = (vec![], vec![]);
    let mut any_classify = false;
    let (mut scored, mut infeasible) = (0usize, 0usize);
    let (mut ratio_sum, mut se_sum, mut oracle_sum) = (0.0, 0.0, 0.0);

    for (p, r) in predictions.records.iter().zip(&dataset.records) {
        if p.record_id != r.record_id {
            return Err(Error::IdMismatch(p.record_id));
        }
        match &p.prediction {
            Prediction::Classify(labels) => {
                any_classify = true;
                pred_labels.extend_from_slice(labels);
                true_labels.extend_from_slice(&r.labels);
            }
            Prediction::Precode { duals, powers } => {
                let oracle = r.oracle.as_ref().ok_or(Error::MissingOracle)?;
                let prob = r.problem(dataset.snr_db)?;
                if !feasible(duals, prob.total_power) || !feasible(powers, prob.total_power) {
                    infeasible += 1;
                    continue;
                }
                let duals: Vec<f64> = duals.iter().map(|x| x.max(0.0)).collect();
                let powers: Vec<f64> = powers.iter().map(|x| x.max(0.0)).collect();
                let sol = PrecodeSolution {
                    directions: structure_precoder(&prob, &duals)?,
                    powers,
                    duals,
                };
                let se = sum_se(&prob, &sol)?;
                ratio_sum += if oracle.sum_se > 0.0 { se / oracle.sum_se } else { 1.0 };
                se_sum += se;
                oracle_sum += oracle.sum_se;
                scored += 1;
            }
        }
    }

    let classify = if any_classify {
        Some(confusion(&pred_labels, &true_labels)?)
    } else {
        None
    };
    let precode = if scored + infeasible > 0 {
        let mean = |s: f64| if scored > 0 { s / scored as f64 } else { f64::NAN };
        Some(PrecodeScore {
            scored,
            infeasible,
            mean_ratio: mean(ratio_sum),
            mean_se: mean(se_sum),
            mean_oracle_se: mean(oracle_sum),
        })
    } else {
        None
    };
    Ok(ScoreReport { classify, precode })
}

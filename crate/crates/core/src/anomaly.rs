//! Likelihood-ratio screening of a suspect group of measurements.
//!
//! The suspect entries are recovered from the remaining predictors and the
//! mixture likelihood of the recovered observation is compared with that of
//! the observation as measured:
//!
//! `α = Σ_k f_k(X^r) ρ_k / Σ_k f_k(X^s) ρ_k`.
//!
//! The marginal densities of the two observations are taken as equal, so
//! they do not appear. Everything is computed as `log α`.

use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::DaModel;
use crate::recovery::{recover_subset, RecoveryResult};
use crate::schema::{sorted_indices, TopologyLabel};
use crate::stats::{log_sum_exp, quantile};

/// Default false-alarm rate for threshold calibration.
pub const DEFAULT_FALSE_ALARM: f64 = 0.05;

/// `log Σ_k f_k(x) ρ_k`.
pub fn mixture_log_likelihood(model: &DaModel, x: &[f64]) -> Result<f64> {
    Ok(log_sum_exp(&model.log_joint(x)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LikelihoodRatio {
    pub log_alpha: f64,
    pub alpha: f64,
    pub suspect_idx: Vec<usize>,
    pub recovered_values: Vec<f64>,
    #[serde(skip)]
    pub recovery: RecoveryResult,
}

fn check_suspects(model: &DaModel, suspect_idx: &[usize]) -> Result<Vec<usize>> {
    let n = model.dimension();
    let idx = sorted_indices(suspect_idx, n)?;
    if idx.is_empty() {
        return Err(Error::NoSignalsMissing);
    }
    if idx.len() == n {
        return Err(Error::AllSignalsMissing);
    }
    Ok(idx)
}

/// Recovers the suspect entries and forms the likelihood ratio.
pub fn likelihood_ratio(model: &DaModel, x: &[f64], suspect_idx: &[usize]) -> Result<LikelihoodRatio> {
    let idx = check_suspects(model, suspect_idx)?;
    let recovery = recover_subset(model, x, &idx, None)?;
    let log_alpha = mixture_log_likelihood(model, &recovery.recovered_observation)?
        - mixture_log_likelihood(model, x)?;
    Ok(LikelihoodRatio {
        log_alpha,
        alpha: log_alpha.exp(),
        suspect_idx: idx,
        recovered_values: recovery.recovered_values().to_vec(),
        recovery,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnomalyVerdict {
    pub alpha: f64,
    pub log_alpha: f64,
    pub threshold: f64,
    pub is_anomalous: bool,
    pub suspect_idx: Vec<usize>,
    pub recovered_values: Vec<f64>,
    pub final_label: TopologyLabel,
    pub final_class: usize,
}

/// Flags the suspect group when `α > threshold`; the topology is then
/// classified from the recovered observation, otherwise from `x` as given.
pub fn detect(model: &DaModel, x: &[f64], suspect_idx: &[usize], threshold: f64) -> Result<AnomalyVerdict> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter {
            name: "threshold",
            message: format!("{threshold} is not positive"),
        });
    }
    let ratio = likelihood_ratio(model, x, suspect_idx)?;
    let is_anomalous = ratio.alpha > threshold;
    let decision = if is_anomalous {
        model.classify(&ratio.recovery.recovered_observation)?
    } else {
        model.classify(x)?
    };
    Ok(AnomalyVerdict {
        alpha: ratio.alpha,
        log_alpha: ratio.log_alpha,
        threshold,
        is_anomalous,
        suspect_idx: ratio.suspect_idx,
        recovered_values: ratio.recovered_values,
        final_label: decision.label,
        final_class: decision.class_index,
    })
}

/// α values of every complete observation in `data` for one suspect group.
pub fn alpha_values(model: &DaModel, data: &Dataset, suspect_idx: &[usize]) -> Result<Vec<f64>> {
    data.samples
        .iter()
        .map(|s| {
            let x = s.observation.to_complete().ok_or_else(|| {
                Error::InvalidDataset("validation observations must be complete".into())
            })?;
            Ok(likelihood_ratio(model, &x, suspect_idx)?.alpha)
        })
        .collect()
}

/// The `(1 − target_false_alarm)` quantile of α over clean validation data.
pub fn calibrate_threshold(
    model: &DaModel,
    clean_validation: &Dataset,
    suspect_idx: &[usize],
    target_false_alarm: f64,
) -> Result<f64> {
    if !(0.0..1.0).contains(&target_false_alarm) {
        return Err(Error::InvalidParameter {
            name: "target_false_alarm",
            message: format!("{target_false_alarm} is outside [0, 1)"),
        });
    }
    if clean_validation.is_empty() {
        return Err(Error::EmptyValidation);
    }
    let alphas = alpha_values(model, clean_validation, suspect_idx)?;
    calibrate_from_alphas(&alphas, target_false_alarm)
}

/// Quantile rule behind [`calibrate_threshold`], on precomputed α values.
pub fn calibrate_from_alphas(alphas: &[f64], target_false_alarm: f64) -> Result<f64> {
    let q = quantile(alphas, 1.0 - target_false_alarm).ok_or(Error::EmptyValidation)?;
    // a threshold must stay positive even when every α underflows
    Ok(q.max(f64::MIN_POSITIVE))
}

//! One-vs-rest ROC curves.

use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::DaModel;
use crate::schema::TopologyLabel;
use crate::stats::log_sum_exp;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    pub class_label: TopologyLabel,
    /// `(false positive rate, true positive rate)`, from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// Empirical ROC of `scores` against `positive`, one point per distinct
/// score in descending order. Tied scores move along a diagonal.
pub fn roc_points(scores: &[f64], positive: &[bool]) -> Result<Vec<(f64, f64)>> {
    if scores.len() != positive.len() {
        return Err(Error::InvalidParameter {
            name: "scores",
            message: format!("{} scores for {} labels", scores.len(), positive.len()),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidParameter {
            name: "scores",
            message: "NaN score".into(),
        });
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateClass(format!("{n_pos} positives and {n_neg} negatives")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    Ok(points)
}

/// Trapezoidal area under `points`.
pub fn auc(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum()
}

/// `log posterior[k]` for every class, keeping resolution when a posterior
/// rounds to 1: the dominant class gets `−ln(1 + Σ_{j≠k} e^{δ_j − δ_k})`.
pub fn log_posteriors(scores: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(scores);
    (0..scores.len())
        .map(|k| {
            let rest: f64 = scores
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, &d)| (d - scores[k]).exp())
                .sum();
            if rest <= 1.0 {
                -rest.ln_1p()
            } else {
                scores[k] - lse
            }
        })
        .collect()
}

/// One-vs-rest curves for every class. Thresholds sweep the posterior of
/// the class; its logarithm is used as the score, which orders observations
/// identically but does not saturate at 1.
pub fn roc_all(model: &DaModel, test: &Dataset) -> Result<Vec<RocCurve>> {
    let k = model.num_classes();
    let mut scores = vec![Vec::with_capacity(test.len()); k];
    let mut actual = Vec::with_capacity(test.len());
    for s in &test.samples {
        let x = s
            .observation
            .to_complete()
            .ok_or_else(|| Error::InvalidDataset("test observations must be complete".into()))?;
        let lp = log_posteriors(&model.discriminant_scores(&x)?);
        for (c, v) in lp.into_iter().enumerate() {
            scores[c].push(v);
        }
        actual.push(
            model
                .class_index(&s.label)
                .ok_or_else(|| Error::InvalidDataset(format!("test label {} is unknown to the model", s.label)))?,
        );
    }
    (0..k)
        .map(|c| {
            let positive: Vec<bool> = actual.iter().map(|&a| a == c).collect();
            let label = &model.classes()[c].label;
            let points = roc_points(&scores[c], &positive).map_err(|e| match e {
                Error::DegenerateClass(m) => Error::DegenerateClass(format!("{label}: {m}")),
                other => other,
            })?;
            Ok(RocCurve {
                class_label: label.clone(),
                auc: auc(&points),
                points,
            })
        })
        .collect()
}

/// Curve for a single class.
pub fn roc(model: &DaModel, test: &Dataset, k: usize) -> Result<RocCurve> {
    model.class(k)?;
    Ok(roc_all(model, test)?.swap_remove(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let pts = roc_points(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(pts, vec![(0.0, 0.0), (0.0, 0.5), (0.0, 1.0), (0.5, 1.0), (1.0, 1.0)]);
        assert_eq!(auc(&pts), 1.0);
    }

    #[test]
    fn ties_count_half() {
        let pts = roc_points(&[0.5, 0.5], &[true, false]).unwrap();
        assert_eq!(pts, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(auc(&pts), 0.5);
    }

    #[test]
    fn degenerate_labels() {
        assert!(matches!(roc_points(&[0.1, 0.2], &[true, true]), Err(Error::DegenerateClass(_))));
    }

    #[test]
    fn log_posterior_resolves_saturated_class() {
        let lp = log_posteriors(&[0.0, -50.0, -60.0]);
        assert!(lp[0] < 0.0);
        assert!((lp[0] + (-50.0f64).exp() + (-60.0f64).exp()).abs() < 1e-30);
        let total: f64 = lp.iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-15);
        let mid = log_posteriors(&[0.0, 0.0]);
        assert!((mid[0] - 0.5f64.ln()).abs() < 1e-15);
    }
}

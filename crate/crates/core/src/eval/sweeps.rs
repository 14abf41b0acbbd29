//! Missing-unit, anomaly, unit-dropping and load-variant studies.

use serde::Serialize;

use super::confusion::{confusion, split_rates, ConfusionMatrix, Pipeline, SplitRates};
use crate::anomaly::{alpha_values, calibrate_from_alphas, likelihood_ratio};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::DaModel;
use crate::recovery::recover_subset;
use crate::simgen::{generate_dataset, FeederModel, LoadVariant, PreparedNetwork, SamplingParams};
use crate::stats::correlation;

/// Upper edges of the α histogram; the last bucket is open.
pub const ALPHA_EDGES: [f64; 5] = [1.0, 10.0, 100.0, 1e3, 1e4];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaHistogram {
    pub upper_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl AlphaHistogram {
    /// Buckets `(0, 1], (1, 10], ..., (1e4, ∞)` filled from `ln α` values.
    pub fn from_log_alphas(log_alphas: &[f64]) -> Self {
        let log_edges: Vec<f64> = ALPHA_EDGES.iter().map(|e| e.ln()).collect();
        let mut counts = vec![0u64; ALPHA_EDGES.len() + 1];
        for &la in log_alphas {
            let b = log_edges.iter().position(|&e| la <= e).unwrap_or(ALPHA_EDGES.len());
            counts[b] += 1;
        }
        Self {
            upper_edges: ALPHA_EDGES.to_vec(),
            counts,
        }
    }

    pub fn fractions(&self) -> Vec<f64> {
        let total: u64 = self.counts.iter().sum();
        self.counts.iter().map(|&c| c as f64 / total as f64).collect()
    }
}

/// Predictor indices of each metered unit, in schema order.
pub fn unit_groups(model: &DaModel) -> Result<Vec<(String, Vec<usize>)>> {
    let schema = model.schema();
    schema
        .units()
        .into_iter()
        .map(|u| {
            let idx = schema.unit_indices(&u)?;
            Ok((u, idx))
        })
        .collect()
}

fn resolve_units(model: &DaModel, units: &[String]) -> Result<Vec<(String, Vec<usize>)>> {
    units
        .iter()
        .map(|u| Ok((u.clone(), model.schema().unit_indices(u)?)))
        .collect()
}

fn complete_rows(data: &Dataset) -> Result<Vec<Vec<f64>>> {
    data.samples
        .iter()
        .map(|s| {
            s.observation
                .to_complete()
                .ok_or_else(|| Error::InvalidDataset("observations must be complete".into()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalCorrelation {
    pub signal: String,
    /// Against the measured (noisy) values.
    pub measured: Option<f64>,
    /// Against the noise-free values, when the test set carries them.
    pub clean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissingUnitRow {
    pub unit: String,
    pub mean_substitution: SplitRates,
    pub recovery: SplitRates,
    pub retrained: SplitRates,
    pub correlations: Vec<SignalCorrelation>,
}

/// For each unit: classify with its signals replaced by training means,
/// recovered by the QP, or removed from a freshly trained model.
pub fn missing_unit_sweep(
    model: &DaModel,
    train: &Dataset,
    test: &Dataset,
    units: &[String],
) -> Result<Vec<MissingUnitRow>> {
    let rows = complete_rows(test)?;
    let mut out = Vec::new();
    for (unit, idx) in resolve_units(model, units)? {
        let mean_cm = confusion(model, test, &Pipeline::MeanSubstitution(idx.clone()))?;

        let mut rec_cm = ConfusionMatrix::new(model.labels());
        let mut recovered = vec![Vec::with_capacity(rows.len()); idx.len()];
        for (s, x) in test.samples.iter().zip(&rows) {
            let r = recover_subset(model, x, &idx, None)?;
            let actual = model
                .class_index(&s.label)
                .ok_or_else(|| Error::InvalidDataset(format!("test label {} is unknown to the model", s.label)))?;
            rec_cm.record(r.best_class, actual);
            for (j, v) in r.recovered_values().iter().enumerate() {
                recovered[j].push(*v);
            }
        }

        let reduced = DaModel::fit_with_labels(&train.without(&idx)?, &model.labels(), model.lambda())?;
        let retrained_cm = confusion(&reduced, &test.without(&idx)?, &Pipeline::Plain)?;

        let has_clean = test.samples.iter().all(|s| s.clean.is_some());
        let correlations = idx
            .iter()
            .enumerate()
            .map(|(j, &i)| {
                let measured: Vec<f64> = rows.iter().map(|x| x[i]).collect();
                let clean = has_clean.then(|| {
                    let c: Vec<f64> = test
                        .samples
                        .iter()
                        .map(|s| s.clean.as_ref().expect("checked")[i])
                        .collect();
                    correlation(&recovered[j], &c)
                });
                SignalCorrelation {
                    signal: model.schema().names()[i].clone(),
                    measured: correlation(&recovered[j], &measured),
                    clean: clean.flatten(),
                }
            })
            .collect();

        out.push(MissingUnitRow {
            unit,
            mean_substitution: split_rates(&mean_cm),
            recovery: split_rates(&rec_cm),
            retrained: split_rates(&retrained_cm),
            correlations,
        });
    }
    Ok(out)
}

/// Threshold choice for the anomaly study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ThresholdRule {
    Fixed(f64),
    /// Per-unit quantile of α on a separate clean calibration set.
    Calibrated { target_false_alarm: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleOutcome {
    pub scale: f64,
    pub detection_rate: f64,
    pub histogram: AlphaHistogram,
    /// Error split of the labels produced without screening.
    pub unscreened: SplitRates,
    /// Error split of the labels produced by the screening pipeline.
    pub screened: SplitRates,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnomalyRow {
    pub unit: String,
    pub threshold: f64,
    pub false_alarm_rate: f64,
    pub clean_histogram: AlphaHistogram,
    pub scales: Vec<ScaleOutcome>,
}

/// Multiplies each unit's measured values by every scale and runs the
/// screening pipeline; the unmanipulated test set gives the false-alarm rate.
pub fn anomaly_sweep(
    model: &DaModel,
    calibration: Option<&Dataset>,
    test: &Dataset,
    units: &[String],
    scales: &[f64],
    rule: ThresholdRule,
) -> Result<Vec<AnomalyRow>> {
    let rows = complete_rows(test)?;
    let actual: Vec<usize> = test
        .samples
        .iter()
        .map(|s| {
            model
                .class_index(&s.label)
                .ok_or_else(|| Error::InvalidDataset(format!("test label {} is unknown to the model", s.label)))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (unit, idx) in resolve_units(model, units)? {
        let threshold = match rule {
            ThresholdRule::Fixed(t) => t,
            ThresholdRule::Calibrated { target_false_alarm } => {
                let cal = calibration.ok_or(Error::EmptyValidation)?;
                if cal.is_empty() {
                    return Err(Error::EmptyValidation);
                }
                if !(0.0..1.0).contains(&target_false_alarm) {
                    return Err(Error::InvalidParameter {
                        name: "target_false_alarm",
                        message: format!("{target_false_alarm} is outside [0, 1)"),
                    });
                }
                calibrate_from_alphas(&alpha_values(model, cal, &idx)?, target_false_alarm)?
            }
        };
        if !(threshold > 0.0) {
            return Err(Error::InvalidParameter {
                name: "threshold",
                message: format!("{threshold} is not positive"),
            });
        }
        let log_t = threshold.ln();

        let run = |data: &[Vec<f64>]| -> Result<(Vec<f64>, ConfusionMatrix, ConfusionMatrix)> {
            let mut log_alphas = Vec::with_capacity(data.len());
            let mut plain = ConfusionMatrix::new(model.labels());
            let mut screened = ConfusionMatrix::new(model.labels());
            for (x, &a) in data.iter().zip(&actual) {
                let r = likelihood_ratio(model, x, &idx)?;
                let p = model.classify(x)?.class_index;
                plain.record(p, a);
                let flagged = r.log_alpha > log_t;
                screened.record(if flagged { r.recovery.best_class } else { p }, a);
                log_alphas.push(r.log_alpha);
            }
            Ok((log_alphas, plain, screened))
        };
        let flagged_fraction = |la: &[f64]| la.iter().filter(|&&v| v > log_t).count() as f64 / la.len() as f64;

        let (clean_la, _, _) = run(&rows)?;
        let mut outcomes = Vec::new();
        for &scale in scales {
            let manipulated: Vec<Vec<f64>> = rows
                .iter()
                .map(|x| {
                    let mut y = x.clone();
                    for &i in &idx {
                        y[i] *= scale;
                    }
                    y
                })
                .collect();
            let (la, plain, screened) = run(&manipulated)?;
            outcomes.push(ScaleOutcome {
                scale,
                detection_rate: flagged_fraction(&la),
                histogram: AlphaHistogram::from_log_alphas(&la),
                unscreened: split_rates(&plain),
                screened: split_rates(&screened),
            });
        }
        out.push(AnomalyRow {
            unit,
            threshold,
            false_alarm_rate: flagged_fraction(&clean_la),
            clean_histogram: AlphaHistogram::from_log_alphas(&clean_la),
            scales: outcomes,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropRow {
    /// Units removed before training; empty for the full-meter baseline.
    pub dropped: Vec<String>,
    pub rates: SplitRates,
}

/// Every unordered pair of `units`, in order.
pub fn all_pairs(units: &[String]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for i in 0..units.len() {
        for j in i + 1..units.len() {
            out.push((units[i].clone(), units[j].clone()));
        }
    }
    out
}

/// Retrains without each pair of units and ranks the results by average
/// switching-configuration misidentification, best first. The full-meter
/// baseline is included. Ties keep input order.
pub fn pair_drop_sweep(train: &Dataset, test: &Dataset, pairs: &[(String, String)], lambda: f64) -> Result<Vec<DropRow>> {
    let labels = train.labels();
    let mut rows = Vec::new();
    let full = DaModel::fit_with_labels(train, &labels, lambda)?;
    rows.push(DropRow {
        dropped: Vec::new(),
        rates: split_rates(&confusion(&full, test, &Pipeline::Plain)?),
    });
    for (a, b) in pairs {
        if a == b {
            return Err(Error::InvalidParameter {
                name: "pairs",
                message: format!("unit {a} paired with itself"),
            });
        }
        let mut idx = train.schema.unit_indices(a)?;
        idx.extend(train.schema.unit_indices(b)?);
        let model = DaModel::fit_with_labels(&train.without(&idx)?, &labels, lambda)?;
        rows.push(DropRow {
            dropped: vec![a.clone(), b.clone()],
            rates: split_rates(&confusion(&model, &test.without(&idx)?, &Pipeline::Plain)?),
        });
    }
    rows.sort_by(|x, y| x.rates.average_sc_misid.total_cmp(&y.rates.average_sc_misid));
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantRow {
    pub variant: LoadVariant,
    pub rates: SplitRates,
}

/// Regenerates, retrains and tests the plain pipeline under each preset.
pub fn load_variant_sweep(
    feeder: &FeederModel,
    variants: &[LoadVariant],
    n_per_topology: usize,
    seed: u64,
    split_fraction: f64,
    params: &SamplingParams,
    lambda: f64,
) -> Result<Vec<VariantRow>> {
    variants
        .iter()
        .map(|&variant| {
            let net = PreparedNetwork::new(&variant.apply(feeder))?;
            let data = generate_dataset(&net, n_per_topology, seed, split_fraction, params)?;
            let model = DaModel::fit_with_labels(&data.train, net.topologies(), lambda)?;
            Ok(VariantRow {
                variant,
                rates: split_rates(&confusion(&model, &data.test, &Pipeline::Plain)?),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_buckets_by_decade() {
        let la: Vec<f64> = [0.5, 1.0, 5.0, 10.0, 11.0, 5e4].iter().map(|v: &f64| v.ln()).collect();
        let h = AlphaHistogram::from_log_alphas(&la);
        assert_eq!(h.counts, vec![2, 2, 1, 0, 0, 1]);
        assert!((h.fractions().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pairs_enumerated_once() {
        let u: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        let p = all_pairs(&u);
        assert_eq!(p.len(), 3);
        assert_eq!(p[2], ("B".to_string(), "C".to_string()));
    }
}

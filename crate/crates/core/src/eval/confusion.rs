//! Confusion matrices and configuration/device error split.

use serde::Serialize;

use crate::anomaly::detect;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::DaModel;
use crate::recovery::recover_subset;
use crate::schema::{sorted_indices, TopologyLabel};

/// Counts indexed `[predicted][actual]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<TopologyLabel>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<TopologyLabel>) -> Self {
        let k = labels.len();
        Self {
            labels,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn record(&mut self, predicted: usize, actual: usize) {
        self.counts[predicted][actual] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn column_sums(&self) -> Vec<u64> {
        (0..self.labels.len())
            .map(|a| self.counts.iter().map(|row| row[a]).sum())
            .collect()
    }

    pub fn correct(&self) -> u64 {
        (0..self.labels.len()).map(|k| self.counts[k][k]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total() as f64
    }
}

/// How a test observation reaches a label.
#[derive(Debug, Clone, PartialEq)]
pub enum Pipeline {
    Plain,
    /// Replace the listed predictors by their training means.
    MeanSubstitution(Vec<usize>),
    /// Treat the listed predictors as missing and recover them.
    Recover(Vec<usize>),
    /// Screen the listed predictors and fall back to recovery when flagged.
    Detect { suspect: Vec<usize>, threshold: f64 },
}

impl Pipeline {
    fn validate(&self, n: usize) -> Result<()> {
        match self {
            Pipeline::Plain => Ok(()),
            Pipeline::MeanSubstitution(idx) | Pipeline::Recover(idx) | Pipeline::Detect { suspect: idx, .. } => {
                sorted_indices(idx, n).map(|_| ())
            }
        }
    }
}

/// Predicted class index of one complete observation.
pub fn predict(model: &DaModel, x: &[f64], pipeline: &Pipeline) -> Result<usize> {
    match pipeline {
        Pipeline::Plain => Ok(model.classify(x)?.class_index),
        Pipeline::MeanSubstitution(idx) => {
            let mut z = x.to_vec();
            // the standardization shift is the pooled training mean
            for &i in idx {
                z[i] = model.standardization().shift[i];
            }
            Ok(model.classify(&z)?.class_index)
        }
        // the recovering class also wins plain classification of its own
        // substituted observation, since each class maximizes its own score
        Pipeline::Recover(idx) => Ok(recover_subset(model, x, idx, None)?.best_class),
        Pipeline::Detect { suspect, threshold } => Ok(detect(model, x, suspect, *threshold)?.final_class),
    }
}

fn actual_index(model: &DaModel, label: &TopologyLabel) -> Result<usize> {
    model
        .class_index(label)
        .ok_or_else(|| Error::InvalidDataset(format!("test label {label} is unknown to the model")))
}

/// Pushes every test observation through `pipeline` and tallies predictions.
pub fn confusion(model: &DaModel, test: &Dataset, pipeline: &Pipeline) -> Result<ConfusionMatrix> {
    if test.is_empty() {
        return Err(Error::InvalidDataset("empty test set".into()));
    }
    if test.schema != *model.schema() {
        return Err(Error::InvalidDataset("test schema differs from the model schema".into()));
    }
    pipeline.validate(model.dimension())?;
    let mut cm = ConfusionMatrix::new(model.labels());
    for s in &test.samples {
        let x = s
            .observation
            .to_complete()
            .ok_or_else(|| Error::InvalidDataset("test observations must be complete".into()))?;
        let actual = actual_index(model, &s.label)?;
        cm.record(predict(model, &x, pipeline)?, actual);
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigRates {
    pub switch_config: String,
    pub count: u64,
    /// Predicted switching configuration differs from the actual one.
    pub sc_misid: f64,
    /// Configuration right, protective-device status wrong.
    pub pds_misid: f64,
    pub correct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitRates {
    pub per_config: Vec<ConfigRates>,
    /// Unweighted means over configurations.
    pub average_sc_misid: f64,
    pub average_pds_misid: f64,
    /// Fractions over all test observations.
    pub pooled_sc_misid: f64,
    pub pooled_pds_misid: f64,
}

impl SplitRates {
    pub fn accuracy(&self) -> f64 {
        1.0 - self.pooled_sc_misid - self.pooled_pds_misid
    }

    pub fn average_sc_accuracy(&self) -> f64 {
        1.0 - self.average_sc_misid
    }
}

/// Splits errors by actual switching configuration. Configurations without
/// test observations are omitted.
pub fn split_rates(cm: &ConfusionMatrix) -> SplitRates {
    let mut configs: Vec<&str> = Vec::new();
    for l in &cm.labels {
        if !configs.contains(&l.switch_config.as_str()) {
            configs.push(&l.switch_config);
        }
    }
    let mut per_config = Vec::new();
    let (mut sc_all, mut pds_all, mut n_all) = (0u64, 0u64, 0u64);
    for cfg in configs {
        let (mut n, mut sc, mut pds) = (0u64, 0u64, 0u64);
        for (a, actual) in cm.labels.iter().enumerate() {
            if actual.switch_config != cfg {
                continue;
            }
            for (p, predicted) in cm.labels.iter().enumerate() {
                let c = cm.counts[p][a];
                n += c;
                if predicted.switch_config != actual.switch_config {
                    sc += c;
                } else if predicted.pd_status != actual.pd_status {
                    pds += c;
                }
            }
        }
        if n == 0 {
            continue;
        }
        sc_all += sc;
        pds_all += pds;
        n_all += n;
        let nf = n as f64;
        per_config.push(ConfigRates {
            switch_config: cfg.to_string(),
            count: n,
            sc_misid: sc as f64 / nf,
            pds_misid: pds as f64 / nf,
            correct: (n - sc - pds) as f64 / nf,
        });
    }
    let m = per_config.len() as f64;
    SplitRates {
        average_sc_misid: per_config.iter().map(|c| c.sc_misid).sum::<f64>() / m,
        average_pds_misid: per_config.iter().map(|c| c.pds_misid).sum::<f64>() / m,
        pooled_sc_misid: sc_all as f64 / n_all as f64,
        pooled_pds_misid: pds_all as f64 / n_all as f64,
        per_config,
    }
}

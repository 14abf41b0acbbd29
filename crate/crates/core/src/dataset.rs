//! Labeled observation sets and their delimited-text file format.
//!
//! A dataset file has a header row of predictor names followed by
//! `label_config` and `label_pd`, then one observation per row. Missing
//! entries are empty fields. Values are written with the shortest decimal
//! representation that round-trips, so files are byte-stable.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Observation, PredictorSchema, TopologyLabel};

pub const LABEL_CONFIG_COLUMN: &str = "label_config";
pub const LABEL_PD_COLUMN: &str = "label_pd";

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub label: TopologyLabel,
    pub observation: Observation,
    /// Noise-free values, when the generator kept them.
    pub clean: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: PredictorSchema,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(schema: PredictorSchema) -> Self {
        Self {
            schema,
            samples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, sample: Sample) -> Result<()> {
        self.schema.check_len(sample.observation.len())?;
        if let Some(clean) = &sample.clean {
            self.schema.check_len(clean.len())?;
        }
        self.samples.push(sample);
        Ok(())
    }

    /// Distinct labels in order of first appearance.
    pub fn labels(&self) -> Vec<TopologyLabel> {
        let mut labels: Vec<TopologyLabel> = Vec::new();
        for s in &self.samples {
            if !labels.contains(&s.label) {
                labels.push(s.label.clone());
            }
        }
        labels
    }

    /// Keeps only the predictors in `keep`, in that order.
    pub fn project(&self, keep: &[usize]) -> Result<Dataset> {
        let schema = self.schema.subset(keep)?;
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let values = keep.iter().map(|&i| s.observation.values()[i]).collect();
                Ok(Sample {
                    label: s.label.clone(),
                    observation: Observation::new(values)?,
                    clean: s
                        .clean
                        .as_ref()
                        .map(|c| keep.iter().map(|&i| c[i]).collect()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { schema, samples })
    }

    /// Projection that drops the listed predictors.
    pub fn without(&self, drop: &[usize]) -> Result<Dataset> {
        let keep: Vec<usize> = (0..self.schema.dimension())
            .filter(|i| !drop.contains(i))
            .collect();
        self.project(&keep)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_rows(&self.schema, self.samples.iter().map(|s| (&s.label, s.observation.values().to_vec())), writer)
    }

    /// Writes the noise-free values in the same layout. Fails if any sample
    /// lacks them.
    pub fn write_clean_csv<W: Write>(&self, writer: W) -> Result<()> {
        let rows = self
            .samples
            .iter()
            .map(|s| {
                let clean = s
                    .clean
                    .as_ref()
                    .ok_or_else(|| Error::InvalidDataset("sample has no clean values".into()))?;
                Ok((&s.label, clean.iter().copied().map(Some).collect::<Vec<_>>()))
            })
            .collect::<Result<Vec<_>>>()?;
        write_rows(&self.schema, rows.into_iter(), writer)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
        let (schema, rows) = read_rows(reader)?;
        let mut data = Dataset::new(schema);
        for (label, values) in rows {
            data.push(Sample {
                label,
                observation: Observation::new(values)?,
                clean: None,
            })?;
        }
        Ok(data)
    }

    /// Attaches noise-free values read from a companion file written by
    /// [`Dataset::write_clean_csv`].
    pub fn attach_clean_csv<R: Read>(&mut self, reader: R) -> Result<()> {
        let (schema, rows) = read_rows(reader)?;
        if schema != self.schema {
            return Err(Error::InvalidDataset("clean file schema differs".into()));
        }
        if rows.len() != self.samples.len() {
            return Err(Error::InvalidDataset(format!(
                "clean file has {} rows, dataset has {}",
                rows.len(),
                self.samples.len()
            )));
        }
        for (sample, (label, values)) in self.samples.iter_mut().zip(rows) {
            if label != sample.label {
                return Err(Error::InvalidDataset("clean file labels differ".into()));
            }
            let clean: Option<Vec<f64>> = values.into_iter().collect();
            sample.clean = Some(clean.ok_or_else(|| {
                Error::InvalidDataset("clean file has missing entries".into())
            })?);
        }
        Ok(())
    }
}

fn write_rows<'a, W: Write>(
    schema: &PredictorSchema,
    rows: impl Iterator<Item = (&'a TopologyLabel, Vec<Option<f64>>)>,
    writer: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = schema.names().iter().map(String::as_str).collect();
    header.push(LABEL_CONFIG_COLUMN);
    header.push(LABEL_PD_COLUMN);
    w.write_record(&header)?;
    for (label, values) in rows {
        let mut record: Vec<String> = values
            .iter()
            .map(|v| v.map(|x| x.to_string()).unwrap_or_default())
            .collect();
        record.push(label.switch_config.clone());
        record.push(label.pd_bits());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

type Row = (TopologyLabel, Vec<Option<f64>>);

fn read_rows<R: Read>(reader: R) -> Result<(PredictorSchema, Vec<Row>)> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let n_cols = header.len();
    if n_cols < 3
        || &header[n_cols - 2] != LABEL_CONFIG_COLUMN
        || &header[n_cols - 1] != LABEL_PD_COLUMN
    {
        return Err(Error::InvalidDataset(format!(
            "header must end with {LABEL_CONFIG_COLUMN},{LABEL_PD_COLUMN}"
        )));
    }
    let names = header.iter().take(n_cols - 2).map(str::to_string).collect();
    let schema = PredictorSchema::new(names)?;
    let mut rows = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record?;
        let values = record
            .iter()
            .take(n_cols - 2)
            .enumerate()
            .map(|(col, field)| {
                if field.is_empty() {
                    Ok(None)
                } else {
                    field.parse::<f64>().map(Some).map_err(|_| {
                        Error::InvalidDataset(format!(
                            "row {}: column {} is not a number: {field:?}",
                            line + 1,
                            schema.names()[col]
                        ))
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let label = TopologyLabel::new(
            &record[n_cols - 2],
            TopologyLabel::parse_pd_bits(&record[n_cols - 1])?,
        );
        rows.push((label, values));
    }
    Ok((schema, rows))
}

/// Sidecar describing how a dataset was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub format_version: u32,
    pub generator_version: String,
    pub seed: u64,
    pub feeder_name: String,
    pub feeder_hash: String,
    pub n_per_topology: usize,
    pub split_fraction: f64,
    pub noise_std: f64,
    pub load_std: f64,
    pub topologies: Vec<String>,
    pub train_rows: usize,
    pub test_rows: usize,
}

//! Predictor schemas, topology labels and observations.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered, uniquely named predictors. A name has the form `<unit>.<quantity>`,
/// e.g. `DER2.V-`; everything before the last `.` identifies the metered unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct PredictorSchema {
    names: Vec<String>,
}

impl PredictorSchema {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::InvalidSchema("schema has no predictors".into()));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::InvalidSchema("empty predictor name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidSchema(format!("duplicate predictor {name}")));
            }
        }
        Ok(Self { names })
    }

    pub fn dimension(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Metered units in order of first appearance.
    pub fn units(&self) -> Vec<String> {
        let mut units: Vec<String> = Vec::new();
        for name in &self.names {
            let unit = unit_of(name);
            if !units.iter().any(|u| u == unit) {
                units.push(unit.to_string());
            }
        }
        units
    }

    /// Indices of every predictor belonging to `unit`.
    pub fn unit_indices(&self, unit: &str) -> Result<Vec<usize>> {
        let idx: Vec<usize> = self
            .names
            .iter()
            .enumerate()
            .filter(|(_, n)| unit_of(n) == unit)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            return Err(Error::InvalidSchema(format!("unknown unit {unit}")));
        }
        Ok(idx)
    }

    /// Schema restricted to `keep` (in the given order).
    pub fn subset(&self, keep: &[usize]) -> Result<Self> {
        let names = keep
            .iter()
            .map(|&i| {
                self.names.get(i).cloned().ok_or(Error::InvalidIndex {
                    index: i,
                    dimension: self.dimension(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(names)
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dimension() {
            return Err(Error::SchemaMismatch {
                expected: self.dimension(),
                found: len,
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<String>> for PredictorSchema {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<PredictorSchema> for Vec<String> {
    fn from(schema: PredictorSchema) -> Self {
        schema.names
    }
}

/// Unit part of a predictor name.
pub fn unit_of(name: &str) -> &str {
    name.rsplit_once('.').map_or(name, |(unit, _)| unit)
}

/// Composite class identity: switching configuration and protective-device
/// states (`true` = open).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TopologyLabel {
    pub switch_config: String,
    pub pd_status: Vec<bool>,
}

impl TopologyLabel {
    pub fn new(switch_config: impl Into<String>, pd_status: Vec<bool>) -> Self {
        Self {
            switch_config: switch_config.into(),
            pd_status,
        }
    }

    /// PD status as a bit string, `0` closed and `1` open.
    pub fn pd_bits(&self) -> String {
        self.pd_status
            .iter()
            .map(|&open| if open { '1' } else { '0' })
            .collect()
    }

    pub fn parse_pd_bits(bits: &str) -> Result<Vec<bool>> {
        bits.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidDataset(format!(
                    "invalid protective-device bit {other:?} in {bits:?}"
                ))),
            })
            .collect()
    }
}

impl fmt::Display for TopologyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pd_status.is_empty() {
            write!(f, "{}", self.switch_config)
        } else {
            write!(f, "{}-{}", self.switch_config, self.pd_bits())
        }
    }
}

/// One measurement vector; `None` marks a missing entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    values: Vec<Option<f64>>,
}

impl Observation {
    pub fn new(values: Vec<Option<f64>>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| matches!(v, Some(x) if !x.is_finite())) {
            return Err(Error::InvalidObservation(format!(
                "entry {i} is not finite"
            )));
        }
        Ok(Self { values })
    }

    pub fn complete(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().copied().map(Some).collect())
    }

    /// Builds an observation from values and an availability mask.
    pub fn with_mask(values: &[f64], available: &[bool]) -> Result<Self> {
        if values.len() != available.len() {
            return Err(Error::InvalidObservation(
                "values and mask differ in length".into(),
            ));
        }
        Self::new(
            values
                .iter()
                .zip(available)
                .map(|(&v, &a)| a.then_some(v))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.values.get(i).copied().flatten()
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    /// All values, if none is missing.
    pub fn to_complete(&self) -> Option<Vec<f64>> {
        self.values.iter().copied().collect()
    }

    pub fn missing_indices(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_none())
            .map(|(i, _)| i)
            .collect()
    }

    /// Copy with the given entries marked missing.
    pub fn masked(&self, idx: &[usize]) -> Result<Self> {
        let mut values = self.values.clone();
        for &i in idx {
            let dimension = values.len();
            *values
                .get_mut(i)
                .ok_or(Error::InvalidIndex { index: i, dimension })? = None;
        }
        Ok(Self { values })
    }
}

/// Validates an index set against dimension `n` and returns it sorted.
pub fn sorted_indices(idx: &[usize], n: usize) -> Result<Vec<usize>> {
    let mut sorted = idx.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(Error::DuplicateIndex(w[0]));
        }
    }
    if let Some(&bad) = sorted.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidIndex {
            index: bad,
            dimension: n,
        });
    }
    Ok(sorted)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> PredictorSchema {
        PredictorSchema::new(
            ["SUB.P", "SUB.V+", "DER1.P", "DER1.V-"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = PredictorSchema::new(vec!["a".into(), "a".into()]).unwrap_err();
        assert!(matches!(err, Error::InvalidSchema(_)));
        assert!(PredictorSchema::new(vec![]).is_err());
    }

    #[test]
    fn units_group_by_prefix() {
        let s = schema();
        assert_eq!(s.units(), vec!["SUB".to_string(), "DER1".to_string()]);
        assert_eq!(s.unit_indices("DER1").unwrap(), vec![2, 3]);
        assert!(s.unit_indices("DER9").is_err());
    }

    #[test]
    fn label_display_and_bits() {
        let l = TopologyLabel::new("C2", vec![false, true]);
        assert_eq!(l.to_string(), "C2-01");
        assert_eq!(TopologyLabel::parse_pd_bits("01").unwrap(), vec![false, true]);
        assert!(TopologyLabel::parse_pd_bits("0x").is_err());
        assert_eq!(TopologyLabel::new("C1", vec![]).to_string(), "C1");
    }

    #[test]
    fn observation_rejects_non_finite() {
        assert!(Observation::complete(&[1.0, f64::NAN]).is_err());
        let o = Observation::with_mask(&[1.0, f64::NAN], &[true, false]).unwrap();
        assert_eq!(o.missing_indices(), vec![1]);
        assert!(o.to_complete().is_none());
    }

    #[test]
    fn index_validation() {
        assert_eq!(sorted_indices(&[3, 1], 4).unwrap(), vec![1, 3]);
        assert!(matches!(sorted_indices(&[1, 1], 4), Err(Error::DuplicateIndex(1))));
        assert!(matches!(
            sorted_indices(&[4], 4),
            Err(Error::InvalidIndex { index: 4, .. })
        ));
    }
}

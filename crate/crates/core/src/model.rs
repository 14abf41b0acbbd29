//! Quadratic discriminant analysis over standardized predictors.
//!
//! Each class keeps its own mean and covariance. Scores, posteriors and
//! mixture likelihoods are all evaluated in log space; nothing is ever
//! exponentiated before normalization.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::schema::{PredictorSchema, TopologyLabel};
use crate::stats::{argmax, log_sum_exp};

/// Default diagonal shrinkage applied at fit time.
pub const DEFAULT_SHRINKAGE: f64 = 1e-3;

const JITTER_FACTOR: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-10;
const INVERSE_TOL: f64 = 1e-8;
const PRIOR_SUM_TOL: f64 = 1e-12;
const MODEL_FORMAT_VERSION: u32 = 1;

/// Per-predictor z-score parameters: `z = (x - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn identity(n: usize) -> Self {
        Self {
            shift: vec![0.0; n],
            scale: vec![1.0; n],
        }
    }

    pub fn apply(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(x.len(), x.iter().enumerate().map(|(i, &v)| self.forward(i, v)))
    }

    pub fn forward(&self, i: usize, value: f64) -> f64 {
        (value - self.shift[i]) / self.scale[i]
    }

    pub fn inverse(&self, i: usize, z: f64) -> f64 {
        z * self.scale[i] + self.shift[i]
    }

    /// `Σ log scale_i`, the log-Jacobian of the map from z back to raw units.
    pub fn log_scale_sum(&self) -> f64 {
        self.scale.iter().map(|s| s.ln()).sum()
    }
}

/// Observed training range of one predictor, in raw units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalRange {
    pub min: f64,
    pub max: f64,
}

/// Sufficient statistics of one class, in standardized coordinates.
#[derive(Debug, Clone)]
pub struct ClassStats {
    pub label: TopologyLabel,
    pub prior: f64,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub precision: DMatrix<f64>,
    pub log_det_cov: f64,
    chol_lower: DMatrix<f64>,
}

impl ClassStats {
    /// Validates the covariance and derives precision and log-determinant
    /// from its Cholesky factor. The covariance is used exactly as given.
    pub fn new(
        label: TopologyLabel,
        prior: f64,
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
    ) -> Result<Self> {
        let n = mean.len();
        if covariance.nrows() != n || covariance.ncols() != n {
            return Err(Error::SchemaMismatch {
                expected: n,
                found: covariance.nrows(),
            });
        }
        if !(prior > 0.0 && prior <= 1.0) {
            return Err(Error::InvalidModel(format!(
                "prior of class {label} is {prior}, outside (0, 1]"
            )));
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "class {label} has non-finite parameters"
            )));
        }
        for i in 0..n {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidModel(format!(
                        "covariance of class {label} is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SingularCovariance(label.to_string()))?;
        let chol_lower = chol.l();
        let log_det_cov = 2.0 * chol_lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let inv = chol.inverse();
        let precision = (&inv + inv.transpose()) * 0.5;

        let product = &precision * &covariance;
        let identity = DMatrix::<f64>::identity(n, n);
        if (product - identity).iter().any(|e| e.abs() > INVERSE_TOL) || !log_det_cov.is_finite() {
            return Err(Error::SingularCovariance(label.to_string()));
        }
        Ok(Self {
            label,
            prior,
            mean,
            covariance,
            precision,
            log_det_cov,
            chol_lower,
        })
    }

    /// `(z - M) Σ⁻¹ (z - M)ᵀ` via forward substitution on the Cholesky factor.
    fn mahalanobis_sq(&self, z: &DVector<f64>) -> f64 {
        let n = self.mean.len();
        let l = &self.chol_lower;
        let mut y = vec![0.0; n];
        let mut total = 0.0;
        for i in 0..n {
            let mut acc = z[i] - self.mean[i];
            for (j, yj) in y.iter().enumerate().take(i) {
                acc -= l[(i, j)] * yj;
            }
            y[i] = acc / l[(i, i)];
            total += y[i] * y[i];
        }
        total
    }
}

/// Class decision with its posterior vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub class_index: usize,
    pub label: TopologyLabel,
    pub posterior: Vec<f64>,
}

/// Trained discriminant-analysis classifier. Immutable once built.
#[derive(Debug, Clone)]
pub struct DaModel {
    schema: PredictorSchema,
    classes: Vec<ClassStats>,
    standardization: Standardization,
    lambda: f64,
    signal_ranges: Vec<SignalRange>,
}

impl DaModel {
    /// Assembles a model from already-estimated parts, checking every
    /// invariant a fitted model satisfies. A single class is accepted here so
    /// hand-built models can be analysed; `fit` and `from_file` require two.
    pub fn from_parts(
        schema: PredictorSchema,
        classes: Vec<ClassStats>,
        standardization: Standardization,
        lambda: f64,
        signal_ranges: Vec<SignalRange>,
    ) -> Result<Self> {
        let n = schema.dimension();
        if classes.is_empty() {
            return Err(Error::TooFewClasses(0));
        }
        if standardization.shift.len() != n || standardization.scale.len() != n {
            return Err(Error::InvalidModel("standardization length differs from schema".into()));
        }
        if let Some(i) = standardization.scale.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidModel(format!("scale of predictor {i} is not positive")));
        }
        if standardization.shift.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidModel("non-finite standardization shift".into()));
        }
        if signal_ranges.len() != n {
            return Err(Error::InvalidModel("signal range length differs from schema".into()));
        }
        if let Some(i) = signal_ranges.iter().position(|r| !(r.min <= r.max)) {
            return Err(Error::InvalidModel(format!("signal range {i} has min > max")));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidModel(format!("shrinkage {lambda} outside [0, 1]")));
        }
        for (i, c) in classes.iter().enumerate() {
            if c.mean.len() != n {
                return Err(Error::SchemaMismatch {
                    expected: n,
                    found: c.mean.len(),
                });
            }
            if classes[..i].iter().any(|o| o.label == c.label) {
                return Err(Error::InvalidModel(format!("duplicate class {}", c.label)));
            }
        }
        let prior_sum: f64 = classes.iter().map(|c| c.prior).sum();
        if (prior_sum - 1.0).abs() > PRIOR_SUM_TOL {
            return Err(Error::InvalidModel(format!("priors sum to {prior_sum}")));
        }
        Ok(Self {
            schema,
            classes,
            standardization,
            lambda,
            signal_ranges,
        })
    }

    /// Fits one Gaussian per label found in `data` (order of first appearance).
    pub fn fit(data: &Dataset, lambda: f64) -> Result<Self> {
        Self::fit_with_labels(data, &data.labels(), lambda)
    }

    /// Fits one Gaussian per entry of `labels`; every label must occur in `data`
    /// and every sample must carry one of them.
    pub fn fit_with_labels(data: &Dataset, labels: &[TopologyLabel], lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) || lambda.is_nan() {
            return Err(Error::InvalidParameter {
                name: "lambda",
                message: format!("{lambda} is outside [0, 1]"),
            });
        }
        let schema = data.schema.clone();
        let n = schema.dimension();
        let rows: Vec<Vec<f64>> = data
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.observation.to_complete().ok_or_else(|| {
                    Error::InvalidDataset(format!("training row {} has missing entries", i + 1))
                })
            })
            .collect::<Result<_>>()?;
        let mut class_of = Vec::with_capacity(rows.len());
        for s in &data.samples {
            let k = labels.iter().position(|l| *l == s.label).ok_or_else(|| {
                Error::InvalidDataset(format!("label {} is not in the class enumeration", s.label))
            })?;
            class_of.push(k);
        }
        if labels.len() < 2 {
            return Err(Error::TooFewClasses(labels.len()));
        }

        let total = rows.len() as f64;
        let mut shift = vec![0.0; n];
        let mut ranges = vec![
            SignalRange {
                min: f64::INFINITY,
                max: f64::NEG_INFINITY
            };
            n
        ];
        for row in &rows {
            for (i, &v) in row.iter().enumerate() {
                shift[i] += v;
                ranges[i].min = ranges[i].min.min(v);
                ranges[i].max = ranges[i].max.max(v);
            }
        }
        shift.iter_mut().for_each(|s| *s /= total);
        let mut scale = vec![0.0; n];
        for row in &rows {
            for (i, &v) in row.iter().enumerate() {
                scale[i] += (v - shift[i]) * (v - shift[i]);
            }
        }
        for (i, s) in scale.iter_mut().enumerate() {
            *s = (*s / total).sqrt();
            if !(*s > 0.0) {
                return Err(Error::ConstantPredictor(schema.names()[i].clone()));
            }
        }
        let standardization = Standardization { shift, scale };

        for (k, label) in labels.iter().enumerate() {
            if !class_of.contains(&k) {
                return Err(Error::EmptyClass(label.to_string()));
            }
        }
        let mut classes = Vec::with_capacity(labels.len());
        for (k, label) in labels.iter().enumerate() {
            let members: Vec<DVector<f64>> = rows
                .iter()
                .zip(&class_of)
                .filter(|(_, &c)| c == k)
                .map(|(r, _)| standardization.apply(r))
                .collect();
            let count = members.len();
            if lambda == 0.0 && count < n + 1 {
                return Err(Error::InsufficientSamples {
                    label: label.to_string(),
                    count,
                    needed: n + 1,
                });
            }
            let (mean, cov) = sample_moments(&members);
            let cov = regularize(shrink(&cov, lambda))
                .ok_or_else(|| Error::SingularCovariance(label.to_string()))?;
            let prior = count as f64 / total;
            classes.push(ClassStats::new(label.clone(), prior, mean, cov)?);
        }
        Self::from_parts(schema, classes, standardization, lambda, ranges)
    }

    pub fn schema(&self) -> &PredictorSchema {
        &self.schema
    }

    pub fn classes(&self) -> &[ClassStats] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dimension(&self) -> usize {
        self.schema.dimension()
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn signal_ranges(&self) -> &[SignalRange] {
        &self.signal_ranges
    }

    pub fn labels(&self) -> Vec<TopologyLabel> {
        self.classes.iter().map(|c| c.label.clone()).collect()
    }

    pub fn class_index(&self, label: &TopologyLabel) -> Option<usize> {
        self.classes.iter().position(|c| c.label == *label)
    }

    pub fn class(&self, k: usize) -> Result<&ClassStats> {
        self.classes.get(k).ok_or(Error::ClassIndex {
            index: k,
            classes: self.classes.len(),
        })
    }

    /// Standardizes a complete raw observation.
    pub fn standardize(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.schema.check_len(x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidObservation("non-finite value".into()));
        }
        Ok(self.standardization.apply(x))
    }

    /// `log f_k(x)` of the raw observation, including the standardization Jacobian.
    pub fn log_density(&self, k: usize, x: &[f64]) -> Result<f64> {
        let class = self.class(k)?;
        let z = self.standardize(x)?;
        Ok(self.log_density_z(class, &z))
    }

    fn log_density_z(&self, class: &ClassStats, z: &DVector<f64>) -> f64 {
        let n = z.len() as f64;
        -0.5 * class.mahalanobis_sq(z)
            - 0.5 * class.log_det_cov
            - 0.5 * n * (2.0 * PI).ln()
            - self.standardization.log_scale_sum()
    }

    fn score_z(class: &ClassStats, z: &DVector<f64>) -> f64 {
        -0.5 * class.mahalanobis_sq(z) - 0.5 * class.log_det_cov + class.prior.ln()
    }

    /// Discriminant score `δ_k(x)`, evaluated on standardized predictors.
    pub fn discriminant_score(&self, k: usize, x: &[f64]) -> Result<f64> {
        let class = self.class(k)?;
        let z = self.standardize(x)?;
        Ok(Self::score_z(class, &z))
    }

    pub fn discriminant_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.standardize(x)?;
        Ok(self.classes.iter().map(|c| Self::score_z(c, &z)).collect())
    }

    /// `log ρ_k + log f_k(x)` for every class.
    pub fn log_joint(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.standardize(x)?;
        Ok(self
            .classes
            .iter()
            .map(|c| c.prior.ln() + self.log_density_z(c, &z))
            .collect())
    }

    /// Class posterior probabilities.
    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        let scores = self.discriminant_scores(x)?;
        Ok(normalize_log(&scores))
    }

    /// Assigns the class with the largest discriminant score (lowest index on ties).
    pub fn classify(&self, x: &[f64]) -> Result<Classification> {
        let scores = self.discriminant_scores(x)?;
        let k = argmax(&scores).ok_or_else(|| {
            Error::InvalidObservation("discriminant scores are not comparable".into())
        })?;
        Ok(Classification {
            class_index: k,
            label: self.classes[k].label.clone(),
            posterior: normalize_log(&scores),
        })
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            schema: self.schema.clone(),
            lambda: self.lambda,
            standardization: self.standardization.clone(),
            signal_ranges: self.signal_ranges.clone(),
            classes: self
                .classes
                .iter()
                .map(|c| ClassRecord {
                    label: c.label.clone(),
                    prior: c.prior,
                    mean: c.mean.iter().copied().collect(),
                    covariance: c
                        .covariance
                        .row_iter()
                        .map(|r| r.iter().copied().collect())
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidModel(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        if file.classes.len() < 2 {
            return Err(Error::TooFewClasses(file.classes.len()));
        }
        let n = file.schema.dimension();
        let classes = file
            .classes
            .into_iter()
            .map(|c| {
                if c.mean.len() != n || c.covariance.len() != n || c.covariance.iter().any(|r| r.len() != n) {
                    return Err(Error::InvalidModel(format!(
                        "class {} parameters do not match dimension {n}",
                        c.label
                    )));
                }
                let mean = DVector::from_vec(c.mean);
                let cov = DMatrix::from_fn(n, n, |i, j| c.covariance[i][j]);
                ClassStats::new(c.label, c.prior, mean, cov)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(
            file.schema,
            classes,
            file.standardization,
            file.lambda,
            file.signal_ranges,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(text)?)
    }
}

/// Serialized form of a [`DaModel`]. Means and covariances are stored in
/// standardized coordinates; precision and log-determinant are recomputed
/// on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub schema: PredictorSchema,
    pub lambda: f64,
    pub standardization: Standardization,
    pub signal_ranges: Vec<SignalRange>,
    pub classes: Vec<ClassRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub label: TopologyLabel,
    pub prior: f64,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

/// Probabilities from unnormalized log weights.
pub fn normalize_log(log_weights: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(log_weights);
    let raw: Vec<f64> = log_weights.iter().map(|w| (w - lse).exp()).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / sum).collect()
}

/// Mean and maximum-likelihood covariance (denominator N).
fn sample_moments(rows: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = rows[0].len();
    let count = rows.len() as f64;
    let mut mean = DVector::zeros(n);
    for r in rows {
        mean += r;
    }
    mean /= count;
    let mut cov = DMatrix::zeros(n, n);
    for r in rows {
        let d = r - &mean;
        for i in 0..n {
            for j in 0..=i {
                cov[(i, j)] += d[i] * d[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..=i {
            let v = cov[(i, j)] / count;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    (mean, cov)
}

/// `(1 - λ) Σ + λ diag(Σ)`; the diagonal is left untouched.
fn shrink(cov: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let mut out = cov.clone();
    let keep = 1.0 - lambda;
    for i in 0..cov.nrows() {
        for j in 0..cov.ncols() {
            if i != j {
                out[(i, j)] *= keep;
            }
        }
    }
    out
}

/// Adds a trace-proportional jitter when the matrix is not numerically
/// positive definite. `None` if even that fails.
fn regularize(cov: DMatrix<f64>) -> Option<DMatrix<f64>> {
    if cov.clone().cholesky().is_some() {
        return Some(cov);
    }
    let n = cov.nrows();
    let jitter = JITTER_FACTOR * cov.trace() / n as f64;
    if !(jitter > 0.0) {
        return None;
    }
    let mut jittered = cov;
    for i in 0..n {
        jittered[(i, i)] += jitter;
    }
    jittered.clone().cholesky().map(|_| jittered)
}

//! Reconstruction of missing or suspect predictors.
//!
//! For every class the missing block `X^u` is chosen to maximize that class's
//! discriminant score with the available block `X^v` held fixed, inside the
//! training range of each missing signal. Dropping terms that do not depend
//! on `X^u` leaves a box QP with Hessian `Ψ^{uu}` (the missing block of the
//! class precision) and linear term
//!
//! `R = ½ ( [X^v − M^v](Ψ^{vu} + (Ψ^{uv})ᵀ) − M^u(Ψ^{uu} + (Ψ^{uu})ᵀ) )`.
//!
//! The class whose substituted observation scores highest wins. All QP work
//! happens in the model's standardized coordinates.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DaModel, SignalRange};
use crate::qp::{solve_box_qp, BoundState, BoxQp};
use crate::schema::{sorted_indices, Observation};
use crate::stats::argmax;

/// Class precision split into missing (`u`) and available (`v`) blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedPrecision {
    pub missing_idx: Vec<usize>,
    pub available_idx: Vec<usize>,
    pub psi_uu: DMatrix<f64>,
    pub psi_uv: DMatrix<f64>,
    pub psi_vu: DMatrix<f64>,
    pub psi_vv: DMatrix<f64>,
}

impl PartitionedPrecision {
    /// Splits `precision` by gathering rows and columns; nothing is refactored.
    pub fn from_matrix(precision: &DMatrix<f64>, missing_idx: &[usize]) -> Result<Self> {
        let n = precision.nrows();
        let missing = sorted_indices(missing_idx, n)?;
        if missing.is_empty() {
            return Err(Error::NoSignalsMissing);
        }
        if missing.len() == n {
            return Err(Error::AllSignalsMissing);
        }
        let available: Vec<usize> = (0..n).filter(|i| missing.binary_search(i).is_err()).collect();
        let block = |rows: &[usize], cols: &[usize]| {
            DMatrix::from_fn(rows.len(), cols.len(), |r, c| precision[(rows[r], cols[c])])
        };
        Ok(Self {
            psi_uu: block(&missing, &missing),
            psi_uv: block(&missing, &available),
            psi_vu: block(&available, &missing),
            psi_vv: block(&available, &available),
            missing_idx: missing,
            available_idx: available,
        })
    }

    /// Scatters the blocks back into the original predictor order.
    pub fn reassemble(&self) -> DMatrix<f64> {
        let n = self.missing_idx.len() + self.available_idx.len();
        let mut out = DMatrix::zeros(n, n);
        let (u, v) = (&self.missing_idx, &self.available_idx);
        for (r, &i) in u.iter().enumerate() {
            for (c, &j) in u.iter().enumerate() {
                out[(i, j)] = self.psi_uu[(r, c)];
            }
            for (c, &j) in v.iter().enumerate() {
                out[(i, j)] = self.psi_uv[(r, c)];
            }
        }
        for (r, &i) in v.iter().enumerate() {
            for (c, &j) in u.iter().enumerate() {
                out[(i, j)] = self.psi_vu[(r, c)];
            }
            for (c, &j) in v.iter().enumerate() {
                out[(i, j)] = self.psi_vv[(r, c)];
            }
        }
        out
    }
}

/// Partition of class `k`'s precision for the given missing predictors.
pub fn partition_precision(
    model: &DaModel,
    k: usize,
    missing_idx: &[usize],
) -> Result<PartitionedPrecision> {
    PartitionedPrecision::from_matrix(&model.class(k)?.precision, missing_idx)
}

/// The linear coefficient vector `R`, length `l`.
pub fn linear_coefficients(
    p: &PartitionedPrecision,
    x_avail: &DVector<f64>,
    mean: &DVector<f64>,
) -> Result<DVector<f64>> {
    let q = p.available_idx.len();
    let n = q + p.missing_idx.len();
    if x_avail.len() != q {
        return Err(Error::SchemaMismatch {
            expected: q,
            found: x_avail.len(),
        });
    }
    if mean.len() != n {
        return Err(Error::SchemaMismatch {
            expected: n,
            found: mean.len(),
        });
    }
    if x_avail.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidObservation("available values must be finite".into()));
    }
    let dv = DVector::from_fn(q, |r, _| x_avail[r] - mean[p.available_idx[r]]);
    let mu = DVector::from_fn(p.missing_idx.len(), |r, _| mean[p.missing_idx[r]]);
    // row-vector products written as transposed matrix-vector products
    let cross = &p.psi_vu + p.psi_uv.transpose();
    let quad = &p.psi_uu + p.psi_uu.transpose();
    Ok((cross.transpose() * dv - quad.transpose() * mu) * 0.5)
}

/// Builds the box QP for one class. `lower`/`upper` are in the same
/// coordinates as `x_avail` and `mean`, restricted to the missing predictors.
pub fn recovery_coefficients(
    p: &PartitionedPrecision,
    x_avail: &DVector<f64>,
    mean: &DVector<f64>,
    lower: DVector<f64>,
    upper: DVector<f64>,
) -> Result<BoxQp> {
    let linear = linear_coefficients(p, x_avail, mean)?;
    BoxQp::new(p.psi_uu.clone(), linear, lower, upper)
}

/// Outcome of the QP for one class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassRecovery {
    pub class_index: usize,
    /// Recovered values of the missing predictors, raw units.
    pub values: Vec<f64>,
    /// QP objective at the solution (standardized coordinates).
    pub objective: f64,
    pub active: Vec<BoundState>,
    /// Discriminant score of the observation with `values` substituted.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryResult {
    pub missing_idx: Vec<usize>,
    pub per_class: Vec<ClassRecovery>,
    pub best_class: usize,
    pub recovered_observation: Vec<f64>,
}

impl RecoveryResult {
    pub fn best(&self) -> &ClassRecovery {
        &self.per_class[self.best_class]
    }

    pub fn recovered_values(&self) -> &[f64] {
        &self.best().values
    }
}

/// Recovers every missing entry of `x`. Bounds default to the model's
/// training ranges; `override_bounds` (raw units, one per missing predictor in
/// ascending index order) replaces them.
pub fn recover(
    model: &DaModel,
    x: &Observation,
    override_bounds: Option<&[SignalRange]>,
) -> Result<RecoveryResult> {
    let n = model.dimension();
    model.schema().check_len(x.len())?;
    let missing = x.missing_indices();
    if missing.is_empty() {
        return Err(Error::NoSignalsMissing);
    }
    if missing.len() == n {
        return Err(Error::AllSignalsMissing);
    }
    let ranges: Vec<SignalRange> = match override_bounds {
        Some(b) => {
            if b.len() != missing.len() {
                return Err(Error::InvalidParameter {
                    name: "bounds",
                    message: format!("{} bounds for {} missing signals", b.len(), missing.len()),
                });
            }
            b.to_vec()
        }
        None => missing.iter().map(|&i| model.signal_ranges()[i]).collect(),
    };
    for (r, range) in ranges.iter().enumerate() {
        if range.min.is_nan() || range.max.is_nan() || range.min > range.max {
            return Err(Error::InvalidBounds {
                index: missing[r],
                lower: range.min,
                upper: range.max,
            });
        }
    }

    let st = model.standardization();
    let lower = DVector::from_fn(missing.len(), |r, _| st.forward(missing[r], ranges[r].min));
    let upper = DVector::from_fn(missing.len(), |r, _| st.forward(missing[r], ranges[r].max));
    let available: Vec<usize> = (0..n).filter(|i| missing.binary_search(i).is_err()).collect();
    let x_avail = DVector::from_fn(available.len(), |r, _| {
        let i = available[r];
        st.forward(i, x.get(i).expect("available entry"))
    });
    let mut base: Vec<f64> = x.values().iter().map(|v| v.unwrap_or(0.0)).collect();

    let mut per_class = Vec::with_capacity(model.num_classes());
    for (k, class) in model.classes().iter().enumerate() {
        let annotate = |e: Error| Error::ClassSolve {
            class: k,
            source: Box::new(e),
        };
        let p = PartitionedPrecision::from_matrix(&class.precision, &missing).map_err(annotate)?;
        let qp = recovery_coefficients(&p, &x_avail, &class.mean, lower.clone(), upper.clone())
            .map_err(annotate)?;
        let sol = solve_box_qp(&qp).map_err(annotate)?;
        let values: Vec<f64> = missing
            .iter()
            .enumerate()
            .map(|(r, &i)| st.inverse(i, sol.x[r]).clamp(ranges[r].min, ranges[r].max))
            .collect();
        for (r, &i) in missing.iter().enumerate() {
            base[i] = values[r];
        }
        let score = model.discriminant_score(k, &base)?;
        per_class.push(ClassRecovery {
            class_index: k,
            values,
            objective: sol.objective,
            active: sol.active,
            score,
        });
    }
    let scores: Vec<f64> = per_class.iter().map(|c| c.score).collect();
    let best_class = argmax(&scores).ok_or_else(|| {
        Error::InvalidObservation("recovered scores are not comparable".into())
    })?;
    for (r, &i) in missing.iter().enumerate() {
        base[i] = per_class[best_class].values[r];
    }
    Ok(RecoveryResult {
        missing_idx: missing,
        per_class,
        best_class,
        recovered_observation: base,
    })
}

/// Treats `idx` of a complete observation as missing and recovers them.
pub fn recover_subset(
    model: &DaModel,
    x: &[f64],
    idx: &[usize],
    override_bounds: Option<&[SignalRange]>,
) -> Result<RecoveryResult> {
    let obs = Observation::complete(x)?.masked(idx)?;
    recover(model, &obs, override_bounds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn precision4() -> DMatrix<f64> {
        DMatrix::from_row_slice(
            4,
            4,
            &[
                4.0, 1.0, 0.5, 0.2, //
                1.0, 3.0, 0.3, 0.1, //
                0.5, 0.3, 2.0, 0.4, //
                0.2, 0.1, 0.4, 1.5,
            ],
        )
    }

    #[test]
    fn two_by_two_partition() {
        let psi = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 3.0]);
        let p = PartitionedPrecision::from_matrix(&psi, &[0]).unwrap();
        assert_eq!(p.psi_uu[(0, 0)], 2.0);
        assert_eq!(p.psi_vv[(0, 0)], 3.0);
        assert_eq!(p.psi_uv[(0, 0)], 0.5);
    }

    #[test]
    fn partition_matches_permutation_conjugation() {
        let psi = precision4();
        let p = PartitionedPrecision::from_matrix(&psi, &[3, 1]).unwrap();
        // rephrased order [1, 3, 0, 2]
        let order = [1usize, 3, 0, 2];
        let mut perm = DMatrix::zeros(4, 4);
        for (r, &c) in order.iter().enumerate() {
            perm[(r, c)] = 1.0;
        }
        let conj = &perm * &psi * perm.transpose();
        assert_eq!(p.psi_uu, conj.view((0, 0), (2, 2)).into_owned());
        assert_eq!(p.psi_uv, conj.view((0, 2), (2, 2)).into_owned());
        assert_eq!(p.psi_vu, conj.view((2, 0), (2, 2)).into_owned());
        assert_eq!(p.psi_vv, conj.view((2, 2), (2, 2)).into_owned());
        assert_eq!(p.reassemble(), psi);
    }

    #[test]
    fn partition_edge_cases() {
        let psi = precision4();
        assert!(matches!(
            PartitionedPrecision::from_matrix(&psi, &[]),
            Err(Error::NoSignalsMissing)
        ));
        assert!(matches!(
            PartitionedPrecision::from_matrix(&psi, &[0, 1, 2, 3]),
            Err(Error::AllSignalsMissing)
        ));
        assert!(PartitionedPrecision::from_matrix(&psi, &[1, 1]).is_err());
        assert!(PartitionedPrecision::from_matrix(&psi, &[7]).is_err());
    }

    #[test]
    fn symmetric_precision_collapses_the_averages() {
        let psi = precision4();
        let p = PartitionedPrecision::from_matrix(&psi, &[0, 2]).unwrap();
        let mean = DVector::from_vec(vec![0.3, -0.2, 1.1, 0.4]);
        let xv = DVector::from_vec(vec![0.5, -0.7]);
        let r = linear_coefficients(&p, &xv, &mean).unwrap();
        let dv = DVector::from_vec(vec![0.5 + 0.2, -0.7 - 0.4]);
        let mu = DVector::from_vec(vec![0.3, 1.1]);
        let expected = p.psi_vu.transpose() * dv - p.psi_uu.transpose() * mu;
        assert!((r - expected).amax() < 1e-14);
    }

    #[test]
    fn zero_coefficients_at_the_mean() {
        let psi = precision4();
        let p = PartitionedPrecision::from_matrix(&psi, &[1]).unwrap();
        let mean = DVector::from_vec(vec![0.3, 0.0, 1.1, 0.4]);
        let xv = DVector::from_vec(vec![0.3, 1.1, 0.4]);
        let r = linear_coefficients(&p, &xv, &mean).unwrap();
        assert_eq!(r.amax(), 0.0);
    }
}

//! Strictly convex quadratic programs over a box:
//! minimize `0.5·xᵀHx + Rᵀx` subject to `lower ≤ x ≤ upper`.
//!
//! [`solve_box_qp`] is a primal active-set method started from the clipped
//! unconstrained minimizer. [`solve_box_qp_exhaustive`] enumerates every
//! free/lower/upper pattern and is kept as an independent reference for tests.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxQp {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl BoxQp {
    pub fn new(
        hessian: DMatrix<f64>,
        linear: DVector<f64>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Result<Self> {
        let l = linear.len();
        if hessian.nrows() != l || hessian.ncols() != l || lower.len() != l || upper.len() != l {
            return Err(Error::SchemaMismatch {
                expected: l,
                found: hessian.nrows(),
            });
        }
        if l == 0 {
            return Err(Error::NoSignalsMissing);
        }
        if hessian.iter().chain(linear.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "qp",
                message: "non-finite coefficient".into(),
            });
        }
        for i in 0..l {
            if lower[i].is_nan() || upper[i].is_nan() || lower[i] > upper[i] {
                return Err(Error::InvalidBounds {
                    index: i,
                    lower: lower[i],
                    upper: upper[i],
                });
            }
            if lower[i] == f64::INFINITY || upper[i] == f64::NEG_INFINITY {
                return Err(Error::InvalidBounds {
                    index: i,
                    lower: lower[i],
                    upper: upper[i],
                });
            }
            for j in 0..i {
                if (hessian[(i, j)] - hessian[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::NonPositiveDefinite);
                }
            }
        }
        if hessian.clone().cholesky().is_none() {
            return Err(Error::NonPositiveDefinite);
        }
        Ok(Self {
            hessian,
            linear,
            lower,
            upper,
        })
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.hessian * x + &self.linear
    }

    /// Tolerance on the gradient used by the KKT certificate.
    pub fn kkt_tolerance(&self) -> f64 {
        1e-8 * (1.0 + self.linear.amax())
    }
}

/// Where a coordinate of the solution sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundState {
    Free,
    Lower,
    Upper,
    /// `lower == upper`; the coordinate is eliminated.
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub active: Vec<BoundState>,
    pub iterations: usize,
}

/// Minimizer of the free coordinates with every other coordinate held at `x`.
fn solve_free(qp: &BoxQp, x: &DVector<f64>, free: &[usize]) -> Result<DVector<f64>> {
    let f = free.len();
    let h_ff = DMatrix::from_fn(f, f, |r, c| qp.hessian[(free[r], free[c])]);
    let mut rhs = DVector::from_fn(f, |r, _| -qp.linear[free[r]]);
    for i in 0..qp.dim() {
        if free.contains(&i) {
            continue;
        }
        for (r, &fr) in free.iter().enumerate() {
            rhs[r] -= qp.hessian[(fr, i)] * x[i];
        }
    }
    let chol = h_ff.cholesky().ok_or(Error::NonPositiveDefinite)?;
    Ok(chol.solve(&rhs))
}

fn classify_bound(qp: &BoxQp, i: usize, value: f64) -> BoundState {
    if qp.lower[i] == qp.upper[i] {
        BoundState::Fixed
    } else if value <= qp.lower[i] {
        BoundState::Lower
    } else if value >= qp.upper[i] {
        BoundState::Upper
    } else {
        BoundState::Free
    }
}

/// Solves the box QP to its unique global minimizer.
pub fn solve_box_qp(qp: &BoxQp) -> Result<QpSolution> {
    let l = qp.dim();
    let cap = 10 * l;

    let unconstrained = qp
        .hessian
        .clone()
        .cholesky()
        .ok_or(Error::NonPositiveDefinite)?
        .solve(&(-&qp.linear));
    let mut x = DVector::from_fn(l, |i, _| unconstrained[i].clamp(qp.lower[i], qp.upper[i]));
    let mut state: Vec<BoundState> = (0..l)
        .map(|i| {
            let s = classify_bound(qp, i, unconstrained[i]);
            if s == BoundState::Fixed {
                x[i] = qp.lower[i];
            }
            s
        })
        .collect();

    let scale = 1.0 + qp.linear.amax() + qp.hessian.amax() * x.amax();
    let release_tol = 1e-13 * scale;

    for iteration in 1..=cap {
        let free: Vec<usize> = (0..l).filter(|&i| state[i] == BoundState::Free).collect();
        let target = if free.is_empty() {
            DVector::zeros(0)
        } else {
            solve_free(qp, &x, &free)?
        };

        // Largest step toward the subproblem minimizer that stays in the box.
        let mut step = 1.0;
        let mut blocking: Vec<(usize, BoundState)> = Vec::new();
        for (r, &i) in free.iter().enumerate() {
            let delta = target[r] - x[i];
            let (limit, bound) = if target[r] < qp.lower[i] {
                ((qp.lower[i] - x[i]) / delta, BoundState::Lower)
            } else if target[r] > qp.upper[i] {
                ((qp.upper[i] - x[i]) / delta, BoundState::Upper)
            } else {
                continue;
            };
            let limit = limit.clamp(0.0, 1.0);
            if limit < step {
                step = limit;
                blocking.clear();
                blocking.push((i, bound));
            } else if limit == step {
                blocking.push((i, bound));
            }
        }

        if blocking.is_empty() {
            for (r, &i) in free.iter().enumerate() {
                x[i] = target[r];
            }
            let g = qp.gradient(&x);
            let mut worst: Option<(usize, f64)> = None;
            for i in 0..l {
                let violation = match state[i] {
                    BoundState::Lower => -g[i],
                    BoundState::Upper => g[i],
                    _ => continue,
                };
                if violation > release_tol && worst.map_or(true, |(_, w)| violation > w) {
                    worst = Some((i, violation));
                }
            }
            match worst {
                None => {
                    return Ok(QpSolution {
                        objective: qp.objective(&x),
                        x,
                        active: state,
                        iterations: iteration,
                    })
                }
                Some((i, _)) => state[i] = BoundState::Free,
            }
        } else {
            for (r, &i) in free.iter().enumerate() {
                x[i] = (x[i] + step * (target[r] - x[i])).clamp(qp.lower[i], qp.upper[i]);
            }
            for (i, bound) in blocking {
                x[i] = if bound == BoundState::Lower {
                    qp.lower[i]
                } else {
                    qp.upper[i]
                };
                state[i] = bound;
            }
        }
    }
    Err(Error::NoConvergence { iterations: cap })
}

/// A coordinate whose gradient sign contradicts optimality.
#[derive(Debug, Clone, PartialEq)]
pub struct KktViolation {
    pub index: usize,
    pub value: f64,
    pub gradient: f64,
    pub reason: &'static str,
}

/// Checks feasibility and the gradient sign pattern of a candidate solution:
/// zero gradient on interior coordinates, non-negative at a lower bound,
/// non-positive at an upper bound.
pub fn kkt_certificate(qp: &BoxQp, x: &DVector<f64>) -> std::result::Result<(), KktViolation> {
    let g = qp.gradient(x);
    let tol = qp.kkt_tolerance();
    for i in 0..qp.dim() {
        let (lo, hi, v, gi) = (qp.lower[i], qp.upper[i], x[i], g[i]);
        let violation = |reason| KktViolation {
            index: i,
            value: v,
            gradient: gi,
            reason,
        };
        if !(lo <= v && v <= hi) {
            return Err(violation("outside the box"));
        }
        if lo == hi {
            continue;
        }
        if v == lo {
            if gi < -tol {
                return Err(violation("negative gradient at lower bound"));
            }
        } else if v == hi {
            if gi > tol {
                return Err(violation("positive gradient at upper bound"));
            }
        } else if gi.abs() > tol {
            return Err(violation("non-zero gradient in the interior"));
        }
    }
    Ok(())
}

/// Reference solver: tries every free/lower/upper assignment, keeps the ones
/// that are feasible and satisfy the multiplier signs, returns the best.
/// Cost grows as 3^l; intended for l ≤ 8.
pub fn solve_box_qp_exhaustive(qp: &BoxQp) -> Result<QpSolution> {
    let l = qp.dim();
    let tol = 1e-9 * (1.0 + qp.linear.amax());
    let mut best: Option<QpSolution> = None;
    let patterns = 3usize.pow(l as u32);
    for code in 0..patterns {
        let mut c = code;
        let mut state = Vec::with_capacity(l);
        let mut x = DVector::zeros(l);
        let mut skip = false;
        for i in 0..l {
            let s = match c % 3 {
                0 => BoundState::Free,
                1 => BoundState::Lower,
                _ => BoundState::Upper,
            };
            c /= 3;
            let s = if qp.lower[i] == qp.upper[i] {
                if s != BoundState::Free {
                    skip = true;
                }
                BoundState::Fixed
            } else {
                s
            };
            match s {
                BoundState::Lower | BoundState::Fixed => x[i] = qp.lower[i],
                BoundState::Upper => x[i] = qp.upper[i],
                BoundState::Free => {}
            }
            if !x[i].is_finite() {
                skip = true;
            }
            state.push(s);
        }
        if skip {
            continue;
        }
        let free: Vec<usize> = (0..l).filter(|&i| state[i] == BoundState::Free).collect();
        if !free.is_empty() {
            let y = solve_free(qp, &x, &free)?;
            let mut feasible = true;
            for (r, &i) in free.iter().enumerate() {
                if y[r] <= qp.lower[i] || y[r] >= qp.upper[i] {
                    feasible = false;
                }
                x[i] = y[r];
            }
            if !feasible {
                continue;
            }
        }
        let g = qp.gradient(&x);
        let signs_ok = (0..l).all(|i| match state[i] {
            BoundState::Lower => g[i] >= -tol,
            BoundState::Upper => g[i] <= tol,
            _ => true,
        });
        if !signs_ok {
            continue;
        }
        let objective = qp.objective(&x);
        if best.as_ref().map_or(true, |b| objective < b.objective) {
            best = Some(QpSolution {
                x,
                objective,
                active: state,
                iterations: code + 1,
            });
        }
    }
    best.ok_or(Error::NoConvergence {
        iterations: patterns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp1(h: f64, r: f64, lo: f64, hi: f64) -> BoxQp {
        BoxQp::new(
            DMatrix::from_element(1, 1, h),
            DVector::from_element(1, r),
            DVector::from_element(1, lo),
            DVector::from_element(1, hi),
        )
        .unwrap()
    }

    #[test]
    fn interior_stationary_point() {
        let s = solve_box_qp(&qp1(2.0, -2.0, 0.0, 5.0)).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-15);
        assert!((s.objective + 1.0).abs() < 1e-15);
        assert_eq!(s.active, vec![BoundState::Free]);
    }

    #[test]
    fn active_upper_bound() {
        let qp = qp1(2.0, -20.0, 0.0, 5.0);
        let s = solve_box_qp(&qp).unwrap();
        assert_eq!(s.x[0], 5.0);
        assert_eq!(s.objective, -75.0);
        assert_eq!(s.active, vec![BoundState::Upper]);
        assert!(kkt_certificate(&qp, &s.x).is_ok());
    }

    #[test]
    fn degenerate_bounds_fix_the_coordinate() {
        let qp = BoxQp::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            DVector::from_vec(vec![-1.0, -1.0]),
            DVector::from_vec(vec![0.3, -10.0]),
            DVector::from_vec(vec![0.3, 10.0]),
        )
        .unwrap();
        let s = solve_box_qp(&qp).unwrap();
        assert_eq!(s.x[0], 0.3);
        assert_eq!(s.active[0], BoundState::Fixed);
        // 1·x1 + 0.5·0.3 - 1 = 0
        assert!((s.x[1] - 0.85).abs() < 1e-14);
        assert!(kkt_certificate(&qp, &s.x).is_ok());
    }

    #[test]
    fn invalid_inputs_rejected() {
        let bad = BoxQp::new(
            DMatrix::from_element(1, 1, -1.0),
            DVector::zeros(1),
            DVector::zeros(1),
            DVector::from_element(1, 1.0),
        );
        assert!(matches!(bad, Err(Error::NonPositiveDefinite)));
        let inverted = BoxQp::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::zeros(1),
            DVector::from_element(1, 2.0),
            DVector::from_element(1, 1.0),
        );
        assert!(matches!(inverted, Err(Error::InvalidBounds { .. })));
    }

    #[test]
    fn infinite_bounds_give_the_unconstrained_minimizer() {
        let qp = BoxQp::new(
            DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]),
            DVector::from_vec(vec![1.0, 2.0]),
            DVector::from_element(2, f64::NEG_INFINITY),
            DVector::from_element(2, f64::INFINITY),
        )
        .unwrap();
        let s = solve_box_qp(&qp).unwrap();
        // H x = -R  ->  x = (-1/11, -7/11)
        assert!((s.x[0] + 1.0 / 11.0).abs() < 1e-14);
        assert!((s.x[1] + 7.0 / 11.0).abs() < 1e-14);
        let e = solve_box_qp_exhaustive(&qp).unwrap();
        assert_eq!(e.active, s.active);
    }

    #[test]
    fn kkt_certificate_flags_wrong_sign() {
        let qp = qp1(2.0, -20.0, 0.0, 5.0);
        let v = kkt_certificate(&qp, &DVector::from_element(1, 0.0)).unwrap_err();
        assert_eq!(v.reason, "negative gradient at lower bound");
        assert!(kkt_certificate(&qp, &DVector::from_element(1, 6.0)).is_err());
    }
}

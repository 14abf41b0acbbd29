//! Box QP solver against exhaustive enumeration and a brute-force grid.

mod common;

use common::*;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topoid_core::qp::{kkt_certificate, solve_box_qp, solve_box_qp_exhaustive, BoxQp};

pub const INSTANCES: usize = 500;

/// Random SPD Hessian, linear term and finite box around the origin. Some
/// boxes are made tight on purpose so that bounds are active.
pub fn random_qp(rng: &mut ChaCha8Rng) -> BoxQp {
    let l = rng.gen_range(1..=6);
    let h = random_spd(rng, l, 0.2);
    let r = DVector::from_fn(l, |_, _| 3.0 * gauss(rng));
    let mut lo = DVector::zeros(l);
    let mut hi = DVector::zeros(l);
    for i in 0..l {
        let c = gauss(rng);
        let w = rng.gen_range(0.05..4.0);
        lo[i] = c - w;
        hi[i] = c + w;
        if rng.gen_bool(0.05) {
            hi[i] = lo[i];
        }
    }
    BoxQp::new(h, r, lo, hi).unwrap()
}

/// Derivative-free reference: exhaustive search over a coarse grid of the
/// box, then compass polling along the coordinate axes with the mesh halved
/// whenever no neighbour improves. Axis-aligned polling is convergent for
/// bound-constrained smooth problems, so this cannot stall beside a valley.
fn grid_search(qp: &BoxQp) -> f64 {
    let l = qp.dim();
    let pts = if l <= 4 { 9usize } else { 5 };
    let mut best = f64::INFINITY;
    let mut x = qp.lower.clone();
    for code in 0..pts.pow(l as u32) {
        let mut c = code;
        let mut y = DVector::zeros(l);
        for i in 0..l {
            let t = (c % pts) as f64 / (pts - 1) as f64;
            c /= pts;
            y[i] = qp.lower[i] + t * (qp.upper[i] - qp.lower[i]);
        }
        let f = qp.objective(&y);
        if f < best {
            best = f;
            x = y;
        }
    }
    let mut step: Vec<f64> = (0..l).map(|i| (qp.upper[i] - qp.lower[i]) / (pts - 1) as f64).collect();
    while step.iter().any(|s| *s > 1e-10) {
        let mut improved = false;
        for i in 0..l {
            for dir in [-1.0, 1.0] {
                let mut y = x.clone();
                y[i] = (x[i] + dir * step[i]).clamp(qp.lower[i], qp.upper[i]);
                let f = qp.objective(&y);
                if f < best {
                    best = f;
                    x = y;
                    improved = true;
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    best
}

#[test]
fn active_set_matches_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..INSTANCES {
        let qp = random_qp(&mut rng);
        let fast = solve_box_qp(&qp).unwrap();
        let slow = solve_box_qp_exhaustive(&qp).unwrap();
        assert_eq!(fast.active, slow.active, "case {case}");
        let err = (&fast.x - &slow.x).amax();
        assert!(err <= 1e-8, "case {case}: {err}");
        kkt_certificate(&qp, &fast.x).unwrap_or_else(|v| panic!("case {case}: {v:?}"));
        kkt_certificate(&qp, &slow.x).unwrap_or_else(|v| panic!("case {case}: {v:?}"));
    }
}

#[test]
fn active_set_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    for case in 0..INSTANCES {
        let qp = random_qp(&mut rng);
        let fast = solve_box_qp(&qp).unwrap();
        let grid = grid_search(&qp);
        // Grid points are feasible, so none may beat the solver.
        assert!(fast.objective <= grid + 1e-12, "case {case}");
        assert!(grid - fast.objective <= 1e-4, "case {case}: {} vs {grid}", fast.objective);
    }
}

#[test]
fn bound_permutation_is_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(2026);
    for _ in 0..100 {
        let qp = random_qp(&mut rng);
        let l = qp.dim();
        let perm: Vec<usize> = (0..l).rev().collect();
        let p = |v: &DVector<f64>| DVector::from_fn(l, |i, _| v[perm[i]]);
        let permuted = BoxQp::new(
            nalgebra::DMatrix::from_fn(l, l, |i, j| qp.hessian[(perm[i], perm[j])]),
            p(&qp.linear),
            p(&qp.lower),
            p(&qp.upper),
        )
        .unwrap();
        let a = solve_box_qp(&qp).unwrap();
        let b = solve_box_qp(&permuted).unwrap();
        for i in 0..l {
            assert!((a.x[perm[i]] - b.x[i]).abs() <= 1e-10);
            assert_eq!(a.active[perm[i]], b.active[i]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn output_is_feasible_and_certified(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let qp = random_qp(&mut rng);
        let sol = solve_box_qp(&qp).unwrap();
        for i in 0..qp.dim() {
            prop_assert!(qp.lower[i] <= sol.x[i] && sol.x[i] <= qp.upper[i]);
        }
        prop_assert!(kkt_certificate(&qp, &sol.x).is_ok());
        prop_assert!(sol.iterations <= 10 * qp.dim());
        prop_assert_eq!(solve_box_qp(&qp).unwrap(), sol);
    }
}

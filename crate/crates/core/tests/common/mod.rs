#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use topoid_core::model::{ClassStats, DaModel, SignalRange, Standardization};
use topoid_core::schema::{PredictorSchema, TopologyLabel};

pub fn gauss<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `A·Aᵀ + c·I` with Gaussian `A`; condition number stays moderate.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, ridge: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| gauss(rng));
    let m = &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * ridge;
    (&m + m.transpose()) * 0.5
}

pub fn schema(n: usize) -> PredictorSchema {
    PredictorSchema::new((0..n).map(|i| format!("U{}.P", i)).collect()).unwrap()
}

pub fn labels(k: usize) -> Vec<TopologyLabel> {
    (0..k).map(|i| TopologyLabel::new(format!("C{}", i + 1), vec![])).collect()
}

/// Random priors, means, covariances and a non-trivial standardization.
pub fn random_model<R: Rng>(rng: &mut R, n: usize, k: usize, spread: f64) -> DaModel {
    let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut priors: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let head: f64 = priors[1..].iter().sum();
    priors[0] = 1.0 - head;
    let classes = labels(k)
        .into_iter()
        .zip(priors)
        .map(|(label, prior)| {
            let mean = DVector::from_fn(n, |_, _| spread * gauss(rng));
            ClassStats::new(label, prior, mean, random_spd(rng, n, 0.3)).unwrap()
        })
        .collect();
    let st = Standardization {
        shift: (0..n).map(|_| 5.0 * gauss(rng)).collect(),
        scale: (0..n).map(|_| rng.gen_range(0.05..20.0)).collect(),
    };
    let ranges = (0..n)
        .map(|i| SignalRange {
            min: st.shift[i] - 4.0 * st.scale[i],
            max: st.shift[i] + 4.0 * st.scale[i],
        })
        .collect();
    DaModel::from_parts(schema(n), classes, st, 0.0, ranges).unwrap()
}

/// Raw-unit mean and covariance of class `k` (inverse of the z-score map).
pub fn raw_moments(model: &DaModel, k: usize) -> (DVector<f64>, DMatrix<f64>) {
    let st = model.standardization();
    let c = &model.classes()[k];
    let n = model.dimension();
    let d = DMatrix::from_diagonal(&DVector::from_vec(st.scale.clone()));
    let mean = DVector::from_fn(n, |i, _| st.inverse(i, c.mean[i]));
    (mean, &d * &c.covariance * &d)
}

pub fn random_point<R: Rng>(rng: &mut R, model: &DaModel, spread: f64) -> Vec<f64> {
    let st = model.standardization();
    (0..model.dimension())
        .map(|i| st.inverse(i, spread * gauss(rng)))
        .collect()
}

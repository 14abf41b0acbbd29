//! Monte Carlo scenarios and labelled dataset generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::flow::PreparedNetwork;
use crate::dataset::{Dataset, DatasetMetadata, Sample};
use crate::error::{Error, Result};
use crate::schema::{Observation, TopologyLabel};

pub const GENERATOR_VERSION: &str = concat!("topoid-simgen ", env!("CARGO_PKG_VERSION"));
pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MIN_PER_TOPOLOGY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub load_mean: f64,
    pub load_std: f64,
    /// Load scales below this are redrawn.
    pub load_floor: f64,
    /// Relative standard deviation of multiplicative measurement noise.
    pub noise_std: f64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            load_mean: 1.0,
            load_std: 0.3,
            load_floor: 0.05,
            noise_std: 0.01,
        }
    }
}

impl SamplingParams {
    fn validate(&self) -> Result<()> {
        let bad = |name, message: &str| {
            Err(Error::InvalidParameter {
                name,
                message: message.into(),
            })
        };
        if !(self.load_std.is_finite() && self.load_std >= 0.0) {
            return bad("load_std", "must be finite and non-negative");
        }
        if !(self.load_floor > 0.0 && self.load_floor.is_finite()) {
            return bad("load_floor", "must be positive");
        }
        if !(self.load_mean.is_finite() && (self.load_std > 0.0 || self.load_mean >= self.load_floor)) {
            return bad("load_mean", "no admissible load scale");
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return bad("noise_std", "must be finite and non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub topology: TopologyLabel,
    pub load_scale: Vec<f64>,
    pub der_p: Vec<f64>,
    pub observation: Vec<f64>,
    pub clean_observation: Vec<f64>,
}

/// Independent stream for one `(topology, sample)` cell.
pub fn scenario_rng(seed: u64, topology_index: usize, sample_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((topology_index as u64) << 32) | sample_index as u64);
    rng
}

/// Draws from `Normal(mean, std)` conditioned on `≥ floor`, by rejection.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, std: f64, floor: f64) -> f64 {
    if std == 0.0 {
        return mean;
    }
    let normal = Normal::new(mean, std).expect("finite positive std");
    loop {
        let v = normal.sample(rng);
        if v >= floor {
            return v;
        }
    }
}

/// Draws load scales, DER outputs and noise in that order, then solves.
pub fn sample_scenario<R: Rng + ?Sized>(
    net: &PreparedNetwork,
    topology: &TopologyLabel,
    params: &SamplingParams,
    rng: &mut R,
) -> Result<Scenario> {
    params.validate()?;
    let load_scale: Vec<f64> = (0..net.num_loads())
        .map(|_| truncated_normal(rng, params.load_mean, params.load_std, params.load_floor))
        .collect();
    let der_p: Vec<f64> = (0..net.num_ders())
        .map(|j| {
            let hi = 2.0 * net.der_p_mean(j);
            if hi > 0.0 {
                Uniform::new(0.0, hi).sample(rng)
            } else {
                0.0
            }
        })
        .collect();
    let sol = net.solve(topology, &load_scale, &der_p)?;
    let clean = net.measure(&sol);
    let observation = if params.noise_std > 0.0 {
        let noise = Normal::new(0.0, params.noise_std).expect("finite positive std");
        clean.iter().map(|v| v * (1.0 + noise.sample(rng))).collect()
    } else {
        clean.clone()
    };
    Ok(Scenario {
        topology: topology.clone(),
        load_scale,
        der_p,
        observation,
        clean_observation: clean,
    })
}

#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub train: Dataset,
    /// Carries the noise-free values of every sample.
    pub test: Dataset,
    pub metadata: DatasetMetadata,
}

/// `n_per_topology` scenarios per topology split per class at
/// `split_fraction`: the first `round(n · split_fraction)` samples of each
/// topology train, the rest test. Rows are topology-major.
pub fn generate_dataset(
    net: &PreparedNetwork,
    n_per_topology: usize,
    seed: u64,
    split_fraction: f64,
    params: &SamplingParams,
) -> Result<GeneratedData> {
    if n_per_topology < MIN_PER_TOPOLOGY {
        return Err(Error::InvalidParameter {
            name: "n_per_topology",
            message: format!("{n_per_topology} is below {MIN_PER_TOPOLOGY}"),
        });
    }
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::InvalidParameter {
            name: "split_fraction",
            message: format!("{split_fraction} is outside (0, 1)"),
        });
    }
    params.validate()?;
    let n_train = ((n_per_topology as f64 * split_fraction).round() as usize).clamp(1, n_per_topology - 1);

    let schema = net.schema().clone();
    let mut train = Dataset::new(schema.clone());
    let mut test = Dataset::new(schema);
    for (t, label) in net.topologies().iter().enumerate() {
        for i in 0..n_per_topology {
            let mut rng = scenario_rng(seed, t, i);
            let sc = sample_scenario(net, label, params, &mut rng)?;
            let in_train = i < n_train;
            let sample = Sample {
                label: label.clone(),
                observation: Observation::complete(&sc.observation)?,
                clean: (!in_train).then_some(sc.clean_observation),
            };
            if in_train {
                train.push(sample)?;
            } else {
                test.push(sample)?;
            }
        }
    }
    let feeder = net.feeder();
    let metadata = DatasetMetadata {
        format_version: DATASET_FORMAT_VERSION,
        generator_version: GENERATOR_VERSION.into(),
        seed,
        feeder_name: feeder.name.clone(),
        feeder_hash: feeder.hash(),
        n_per_topology,
        split_fraction,
        noise_std: params.noise_std,
        load_std: params.load_std,
        topologies: net.topologies().iter().map(|t| t.to_string()).collect(),
        train_rows: train.len(),
        test_rows: test.len(),
    };
    Ok(GeneratedData {
        train,
        test,
        metadata,
    })
}

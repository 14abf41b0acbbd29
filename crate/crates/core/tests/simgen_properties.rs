//! Physical and statistical properties of the scenario generator.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use topoid_core::schema::TopologyLabel;
use topoid_core::simgen::{
    generate_dataset, sample_scenario, scenario_rng, sequence_components, truncated_normal, FeederModel, Phase,
    PhaseLoad, PhaseSet, PreparedNetwork, SamplingParams,
};

const NOISE_STD: f64 = 0.01;

/// The reference feeder with every load spread evenly over three phases.
fn balanced_feeder() -> FeederModel {
    let mut f = FeederModel::reference();
    for load in &mut f.loads {
        let p: f64 = load.phases.iter().map(|l| l.p).sum::<f64>() / 3.0;
        let q: f64 = load.phases.iter().map(|l| l.q).sum::<f64>() / 3.0;
        load.phases = Phase::ALL.into_iter().map(|phase| PhaseLoad { phase, p, q }).collect();
    }
    for der in &mut f.ders {
        der.phases = PhaseSet::THREE;
    }
    f
}

fn mean_inputs(net: &PreparedNetwork) -> (Vec<f64>, Vec<f64>) {
    let der = (0..net.num_ders()).map(|j| net.der_p_mean(j)).collect();
    (vec![1.0; net.num_loads()], der)
}

#[test]
fn balanced_feeder_has_no_negative_sequence() {
    let net = PreparedNetwork::new(&balanced_feeder()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for t in net.topologies() {
        for _ in 0..20 {
            let sc = sample_scenario(&net, t, &SamplingParams { noise_std: 0.0, ..Default::default() }, &mut rng).unwrap();
            let sol = net.solve(t, &sc.load_scale, &sc.der_p).unwrap();
            for v in &sol.voltages {
                if v.iter().all(|m| *m > 0.0) {
                    assert!(sequence_components(*v).1 <= 1e-12, "{t}: {v:?}");
                }
            }
            for (name, value) in net.schema().names().iter().zip(&sc.observation) {
                if name.ends_with(".V-") {
                    assert!(value.abs() <= 1e-12, "{t} {name} = {value}");
                }
            }
        }
    }
}

#[test]
fn opening_a_device_never_raises_substation_power() {
    let net = PreparedNetwork::new(&FeederModel::reference()).unwrap();
    let params = SamplingParams::default();
    let labels = net.topologies();
    for i in 0..200 {
        let mut rng = scenario_rng(77, 0, i);
        let sc = sample_scenario(&net, &labels[0], &params, &mut rng).unwrap();
        for a in labels {
            for b in labels {
                let opens_more = a.switch_config == b.switch_config
                    && a != b
                    && a.pd_status.iter().zip(&b.pd_status).all(|(x, y)| !*x || *y);
                if !opens_more {
                    continue;
                }
                let pa = net.solve(a, &sc.load_scale, &sc.der_p).unwrap().substation_p;
                let pb = net.solve(b, &sc.load_scale, &sc.der_p).unwrap().substation_p;
                assert!(pb <= pa + 1e-12, "{a} → {b}: {pa} → {pb}");
            }
        }
    }
}

#[test]
fn der_absorbs_reactive_power_at_its_power_factor() {
    let feeder = FeederModel::reference();
    let net = PreparedNetwork::new(&feeder).unwrap();
    let (loads, der) = mean_inputs(&net);
    let sol = net.solve(&net.topologies()[0], &loads, &der).unwrap();
    for (j, d) in feeder.ders.iter().enumerate() {
        let want = -sol.der_p[j] * d.power_factor.acos().tan();
        assert!((sol.der_q[j] - want).abs() <= 1e-12);
    }
}

/// Noise-free observations at unit load scale and mean DER output must
/// differ between every pair of classes by more than five noise standard
/// deviations in at least one predictor.
#[test]
fn reference_classes_are_separable() {
    let net = PreparedNetwork::new(&FeederModel::reference()).unwrap();
    let (loads, der) = mean_inputs(&net);
    let means: Vec<(TopologyLabel, Vec<f64>)> = net
        .topologies()
        .iter()
        .map(|t| (t.clone(), net.measure(&net.solve(t, &loads, &der).unwrap())))
        .collect();
    assert_eq!(means.len(), 12);
    for (i, (ta, a)) in means.iter().enumerate() {
        for (tb, b) in &means[i + 1..] {
            let gap = a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs() / (NOISE_STD * x.abs().max(y.abs())))
                .fold(0.0, f64::max);
            assert!(gap > 5.0, "{ta} vs {tb}: {gap} σ");
        }
    }
}

#[test]
fn truncated_normal_moments() {
    let (mu, sigma, floor) = (1.0, 0.6, 0.05);
    let n = Normal::new(0.0, 1.0).unwrap();
    let a = (floor - mu) / sigma;
    let tail = 1.0 - n.cdf(a);
    let lam = n.pdf(a) / tail;
    let want_mean = mu + sigma * lam;
    let want_var = sigma * sigma * (1.0 + a * lam - lam * lam);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let count = 200_000;
    let xs: Vec<f64> = (0..count).map(|_| truncated_normal(&mut rng, mu, sigma, floor)).collect();
    assert!(xs.iter().all(|x| *x >= floor));
    let mean = xs.iter().sum::<f64>() / count as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / count as f64;
    let se = (want_var / count as f64).sqrt();
    assert!((mean - want_mean).abs() < 5.0 * se, "{mean} vs {want_mean}");
    assert!((var / want_var - 1.0).abs() < 0.02, "{var} vs {want_var}");
}

#[test]
fn datasets_are_reproducible_and_order_free() {
    let net = PreparedNetwork::new(&FeederModel::reference()).unwrap();
    let params = SamplingParams::default();
    let a = generate_dataset(&net, 20, 99, 0.9, &params).unwrap();
    let b = generate_dataset(&net, 20, 99, 0.9, &params).unwrap();
    let csv = |d: &topoid_core::dataset::Dataset| {
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        buf
    };
    assert_eq!(csv(&a.train), csv(&b.train));
    assert_eq!(csv(&a.test), csv(&b.test));
    // Any scenario can be regenerated alone from its stream.
    let t = 7;
    let i = 19;
    let sc = sample_scenario(&net, &net.topologies()[t], &params, &mut scenario_rng(99, t, i)).unwrap();
    let row = &a.test.samples[t * 2 + 1];
    assert_eq!(row.observation.to_complete().unwrap(), sc.observation);
    assert_eq!(row.clean.as_ref().unwrap(), &sc.clean_observation);
    let other = generate_dataset(&net, 20, 100, 0.9, &params).unwrap();
    assert_ne!(csv(&a.train), csv(&other.train));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn voltages_stay_physical(seed in any::<u64>(), t in 0usize..12) {
        let net = PreparedNetwork::new(&FeederModel::reference()).unwrap();
        let label = &net.topologies()[t];
        let sc = sample_scenario(&net, label, &SamplingParams::default(), &mut scenario_rng(seed, t, 0)).unwrap();
        let sol = net.solve(label, &sc.load_scale, &sc.der_p).unwrap();
        for v in sol.voltages.iter().flatten() {
            prop_assert!(*v == 0.0 || (0.8..1.1).contains(v));
        }
        prop_assert!(sol.losses_p >= 0.0 && sol.losses_q >= 0.0);
        let served: f64 = sol.load_p.iter().sum();
        let generated: f64 = sol.der_p.iter().sum();
        prop_assert!((sol.substation_p - (served + sol.losses_p - generated)).abs() <= 1e-9);
    }
}

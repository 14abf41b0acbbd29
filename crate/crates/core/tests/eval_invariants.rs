use proptest::prelude::*;
use topoid_core::dataset::Dataset;
use topoid_core::eval::{self, auc, roc_points, ConfusionMatrix, Pipeline};
use topoid_core::model::{DaModel, DEFAULT_SHRINKAGE};
use topoid_core::schema::TopologyLabel;
use topoid_core::simgen::{generate_dataset, FeederModel, PreparedNetwork, SamplingParams};

fn small_run() -> (DaModel, Dataset, Dataset) {
    let net = PreparedNetwork::new(&FeederModel::reference()).unwrap();
    let data = generate_dataset(&net, 60, 5, 0.5, &SamplingParams::default()).unwrap();
    let model = DaModel::fit(&data.train, DEFAULT_SHRINKAGE).unwrap();
    (model, data.train, data.test)
}

#[test]
fn every_pipeline_conserves_observations() {
    let (model, _, test) = small_run();
    let der2 = model.schema().unit_indices("DER2").unwrap();
    let pipelines = [
        Pipeline::Plain,
        Pipeline::MeanSubstitution(der2.clone()),
        Pipeline::Recover(der2.clone()),
        Pipeline::Detect {
            suspect: der2,
            threshold: 10.0,
        },
    ];
    let per_class = test.len() as u64 / model.num_classes() as u64;
    for p in &pipelines {
        let cm = eval::confusion(&model, &test, p).unwrap();
        assert_eq!(cm.total(), test.len() as u64);
        assert!(cm.column_sums().iter().all(|c| *c == per_class), "{p:?}");
        let rates = eval::split_rates(&cm);
        for c in &rates.per_config {
            assert!((c.sc_misid + c.pds_misid + c.correct - 1.0).abs() <= 1e-12);
        }
        assert!((rates.accuracy() - cm.accuracy()).abs() <= 1e-12);
        assert!((cm.accuracy() - (1.0 - rates.pooled_sc_misid - rates.pooled_pds_misid)).abs() <= 1e-12);
    }
}

#[test]
fn roc_curves_are_anchored_and_monotone() {
    let (model, _, test) = small_run();
    for curve in eval::roc_all(&model, &test).unwrap() {
        assert_eq!(curve.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(curve.points.last(), Some(&(1.0, 1.0)));
        for w in curve.points.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
        assert!((0.0..=1.0).contains(&curve.auc));
    }
}

#[test]
fn dropping_nothing_ranks_first() {
    let (model, train, test) = small_run();
    let units = model.schema().units();
    let rows = eval::pair_drop_sweep(&train, &test, &eval::all_pairs(&units), DEFAULT_SHRINKAGE).unwrap();
    assert_eq!(rows.len(), 1 + units.len() * (units.len() - 1) / 2);
    let baseline = rows.iter().find(|r| r.dropped.is_empty()).unwrap();
    let best = rows[0].rates.average_sc_misid;
    assert!(baseline.rates.average_sc_misid <= best + 0.005);
    for w in rows.windows(2) {
        assert!(w[0].rates.average_sc_misid <= w[1].rates.average_sc_misid);
    }
}

/// Pairwise-ordering oracle: AUC is the probability that a random positive
/// outscores a random negative, ties counting one half.
fn mann_whitney(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &p) in positive.iter().enumerate() {
        if !p {
            continue;
        }
        for (j, &q) in positive.iter().enumerate() {
            if q {
                continue;
            }
            pairs += 1.0;
            wins += if scores[i] > scores[j] {
                1.0
            } else if scores[i] == scores[j] {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / pairs
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn auc_equals_rank_statistic(data in prop::collection::vec((0u8..20, any::<bool>()), 2..80)) {
        let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64).collect();
        let positive: Vec<bool> = data.iter().map(|(_, p)| *p).collect();
        prop_assume!(positive.iter().any(|p| *p) && positive.iter().any(|p| !*p));
        let a = auc(&roc_points(&scores, &positive).unwrap());
        prop_assert!((a - mann_whitney(&scores, &positive)).abs() <= 1e-12);
    }

    #[test]
    fn split_rates_partition_errors(cells in prop::collection::vec(0u64..20, 36)) {
        let labels: Vec<TopologyLabel> = ["C1", "C2", "C3"]
            .iter()
            .flat_map(|c| [TopologyLabel::new(*c, vec![false]), TopologyLabel::new(*c, vec![true])])
            .collect();
        let mut cm = ConfusionMatrix::new(labels);
        for (i, n) in cells.iter().enumerate() {
            for _ in 0..*n {
                cm.record(i / 6, i % 6);
            }
        }
        prop_assume!(cm.column_sums().iter().all(|c| *c > 0));
        let r = eval::split_rates(&cm);
        for c in &r.per_config {
            prop_assert!((c.sc_misid + c.pds_misid + c.correct - 1.0).abs() <= 1e-12);
        }
        prop_assert!((r.accuracy() - cm.accuracy()).abs() <= 1e-12);
    }
}

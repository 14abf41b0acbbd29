//! Evaluation protocol: confusion matrices, configuration/device error
//! split, ROC curves and the sensitivity sweeps.

pub mod confusion;
pub mod report;
pub mod roc;
pub mod sweeps;

pub use confusion::{confusion, predict, split_rates, ConfigRates, ConfusionMatrix, Pipeline, SplitRates};
pub use roc::{auc, roc, roc_all, roc_points, RocCurve};
pub use sweeps::{
    all_pairs, anomaly_sweep, load_variant_sweep, missing_unit_sweep, pair_drop_sweep, unit_groups,
    AlphaHistogram, AnomalyRow, DropRow, MissingUnitRow, ThresholdRule, VariantRow,
};

//! Delimited-text renderings of evaluation results.
//!
//! Floats use the shortest round-trip representation so reports are
//! byte-stable across runs.

use std::fmt::Write;

use super::confusion::{ConfusionMatrix, SplitRates};
use super::roc::RocCurve;
use super::sweeps::{AnomalyRow, DropRow, MissingUnitRow, VariantRow};

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Header `predicted\actual,<labels>`, one row per predicted label.
pub fn confusion_csv(cm: &ConfusionMatrix) -> String {
    let mut s = String::from("predicted\\actual");
    for l in &cm.labels {
        write!(s, ",{l}").unwrap();
    }
    s.push('\n');
    for (p, row) in cm.counts.iter().enumerate() {
        write!(s, "{}", cm.labels[p]).unwrap();
        for c in row {
            write!(s, ",{c}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn split_rates_csv(r: &SplitRates) -> String {
    let mut s = String::from("switch_config,count,sc_misid,pds_misid,correct\n");
    for c in &r.per_config {
        writeln!(s, "{},{},{},{},{}", c.switch_config, c.count, c.sc_misid, c.pds_misid, c.correct).unwrap();
    }
    writeln!(s, "average,,{},{},", r.average_sc_misid, r.average_pds_misid).unwrap();
    writeln!(s, "pooled,,{},{},{}", r.pooled_sc_misid, r.pooled_pds_misid, r.accuracy()).unwrap();
    s
}

pub fn roc_summary_csv(curves: &[RocCurve]) -> String {
    let mut s = String::from("class,auc,points\n");
    for c in curves {
        writeln!(s, "{},{},{}", c.class_label, c.auc, c.points.len()).unwrap();
    }
    s
}

/// Long format: one row per curve point.
pub fn roc_points_csv(curves: &[RocCurve]) -> String {
    let mut s = String::from("class,fpr,tpr\n");
    for c in curves {
        for (f, t) in &c.points {
            writeln!(s, "{},{f},{t}", c.class_label).unwrap();
        }
    }
    s
}

pub fn missing_units_csv(rows: &[MissingUnitRow]) -> String {
    let mut s = String::from("unit,strategy,sc_misid,pds_misid,accuracy\n");
    for r in rows {
        for (name, rates) in [
            ("mean-substitution", &r.mean_substitution),
            ("recovery", &r.recovery),
            ("retrained", &r.retrained),
        ] {
            writeln!(
                s,
                "{},{name},{},{},{}",
                r.unit,
                rates.average_sc_misid,
                rates.average_pds_misid,
                rates.accuracy()
            )
            .unwrap();
        }
    }
    s
}

pub fn correlations_csv(rows: &[MissingUnitRow]) -> String {
    let mut s = String::from("signal,corr_measured,corr_clean\n");
    for r in rows {
        for c in &r.correlations {
            writeln!(s, "{},{},{}", c.signal, opt(c.measured), opt(c.clean)).unwrap();
        }
    }
    s
}

/// One row per unit and scale; scale `1` is the unmanipulated set.
pub fn anomaly_csv(rows: &[AnomalyRow]) -> String {
    let mut s = String::from("unit,scale,threshold,flagged_rate,sc_misid_unscreened,sc_misid_screened");
    for e in super::sweeps::ALPHA_EDGES {
        write!(s, ",alpha_le_{e}").unwrap();
    }
    s.push_str(",alpha_gt_last\n");
    for r in rows {
        write!(s, "{},1,{},{},,", r.unit, r.threshold, r.false_alarm_rate).unwrap();
        for c in &r.clean_histogram.counts {
            write!(s, ",{c}").unwrap();
        }
        s.push('\n');
        for o in &r.scales {
            write!(
                s,
                "{},{},{},{},{},{}",
                r.unit, o.scale, r.threshold, o.detection_rate, o.unscreened.average_sc_misid, o.screened.average_sc_misid
            )
            .unwrap();
            for c in &o.histogram.counts {
                write!(s, ",{c}").unwrap();
            }
            s.push('\n');
        }
    }
    s
}

pub fn drops_csv(rows: &[DropRow]) -> String {
    let mut s = String::from("rank,dropped,sc_misid,pds_misid");
    let configs: Vec<&str> = rows
        .first()
        .map(|r| r.rates.per_config.iter().map(|c| c.switch_config.as_str()).collect())
        .unwrap_or_default();
    for c in &configs {
        write!(s, ",sc_misid_{c}").unwrap();
    }
    s.push('\n');
    for (i, r) in rows.iter().enumerate() {
        let dropped = if r.dropped.is_empty() { "none".to_string() } else { r.dropped.join("+") };
        write!(s, "{},{dropped},{},{}", i + 1, r.rates.average_sc_misid, r.rates.average_pds_misid).unwrap();
        for c in &r.rates.per_config {
            write!(s, ",{}", c.sc_misid).unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn variants_csv(rows: &[VariantRow]) -> String {
    let mut s = String::from("variant,sc_misid,pds_misid,accuracy\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{}",
            r.variant.name(),
            r.rates.average_sc_misid,
            r.rates.average_pds_misid,
            r.rates.accuracy()
        )
        .unwrap();
    }
    s
}

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;
use topoid_core::anomaly::{calibrate_threshold, detect as detect_one, AnomalyVerdict};
use topoid_core::dataset::Dataset;
use topoid_core::eval::{self, report, Pipeline, ThresholdRule};
use topoid_core::model::{DaModel, SignalRange};
use topoid_core::recovery::{recover as recover_one, RecoveryResult};
use topoid_core::schema::sorted_indices;
use topoid_core::simgen::{generate_dataset, LoadVariant, PreparedNetwork, SamplingParams};
use topoid_core::stats::correlation;

use crate::io::{
    attach_clean, dataset_csv, num, read_dataset, read_feeder, read_model, sidecar, to_json, write_atomic, CliError,
    CliResult, RunMetadata,
};
use crate::{ClassifyArgs, DetectArgs, EvaluateArgs, Format, GenerateArgs, RecoverArgs, Selection, Sweep, TrainArgs};

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn resolve(selection: &Selection, model: &DaModel) -> CliResult<Vec<usize>> {
    let mut idx = selection.indices.clone();
    for u in &selection.units {
        idx.extend(model.schema().unit_indices(u)?);
    }
    Ok(sorted_indices(&idx, model.dimension())?)
}

fn check_schema(model: &DaModel, data: &Dataset, path: &Path) -> CliResult<()> {
    if data.schema != *model.schema() {
        return Err(CliError::validation(format!(
            "{}: predictor columns differ from the model schema",
            path.display()
        )));
    }
    Ok(())
}

fn complete_row(data: &Dataset, row: usize, hint: &str) -> CliResult<Vec<f64>> {
    data.samples[row]
        .observation
        .to_complete()
        .ok_or_else(|| CliError::validation(format!("row {} has missing entries; {hint}", row + 1)))
}

pub fn generate(a: &GenerateArgs) -> CliResult<()> {
    let variant: LoadVariant = a.variant.parse()?;
    let feeder = variant.apply(&read_feeder(a.feeder.as_deref())?);
    let net = PreparedNetwork::new(&feeder)?;
    let params = SamplingParams {
        noise_std: a.noise_std,
        load_std: a.load_std,
        ..SamplingParams::default()
    };
    let data = generate_dataset(&net, a.n_per_topology, a.seed, a.split, &params)?;
    create_dir(&a.out_dir)?;

    let train = a.out_dir.join("train.csv");
    let test = a.out_dir.join("test.csv");
    let clean = a.out_dir.join("test_clean.csv");
    write_atomic(&train, &dataset_csv(&data.train)?)?;
    write_atomic(&test, &dataset_csv(&data.test)?)?;
    let mut buf = Vec::new();
    data.test.write_clean_csv(&mut buf)?;
    write_atomic(&clean, &buf)?;
    write_atomic(&a.out_dir.join("metadata.json"), to_json(&data.metadata)?.as_bytes())?;
    println!(
        "{} topologies, {} train rows, {} test rows",
        data.metadata.topologies.len(),
        data.train.len(),
        data.test.len()
    );
    Ok(())
}

pub fn train(a: &TrainArgs) -> CliResult<()> {
    let data = read_dataset(&a.train)?;
    let model = DaModel::fit(&data, a.lambda)?;
    write_atomic(&a.out, model.to_json()?.as_bytes())?;
    let mut meta = RunMetadata::new("train", json!({ "lambda": a.lambda }));
    meta.input(&a.train)?;
    meta.output(&a.out);
    meta.write(&sidecar(&a.out))?;
    println!("{} classes, {} predictors, {} rows", model.num_classes(), model.dimension(), data.len());
    Ok(())
}

#[derive(Serialize)]
struct Prediction {
    row: usize,
    label: String,
    posterior: Vec<f64>,
}

pub fn classify(a: &ClassifyArgs) -> CliResult<()> {
    let model = read_model(&a.model)?;
    let data = read_dataset(&a.data)?;
    check_schema(&model, &data, &a.data)?;
    let labels = model.labels();
    let mut preds = Vec::with_capacity(data.len());
    let (mut correct, mut known) = (0usize, 0usize);
    for (row, s) in data.samples.iter().enumerate() {
        let x = complete_row(&data, row, "use `topoid recover` for incomplete rows")?;
        let c = model.classify(&x)?;
        if model.class_index(&s.label).is_some() {
            known += 1;
            correct += usize::from(c.label == s.label);
        }
        preds.push(Prediction {
            row: row + 1,
            label: c.label.to_string(),
            posterior: c.posterior,
        });
    }
    let body = match a.format {
        Format::Json => to_json(&preds)?,
        Format::Csv => {
            let mut s = String::from("row,predicted");
            for l in &labels {
                write!(s, ",p_{l}").unwrap();
            }
            s.push('\n');
            for p in &preds {
                write!(s, "{},{}", p.row, p.label).unwrap();
                for v in &p.posterior {
                    write!(s, ",{}", num(*v)).unwrap();
                }
                s.push('\n');
            }
            s
        }
    };
    write_atomic(&a.out, body.as_bytes())?;
    let mut meta = RunMetadata::new("classify", json!({}));
    meta.input(&a.model)?;
    meta.input(&a.data)?;
    meta.output(&a.out);
    meta.write(&sidecar(&a.out))?;
    if known > 0 {
        println!("accuracy {} ({correct} of {known} labelled rows)", correct as f64 / known as f64);
    }
    Ok(())
}

fn parse_bounds(specs: &[String], count: usize) -> CliResult<Option<Vec<SignalRange>>> {
    if specs.is_empty() {
        return Ok(None);
    }
    if specs.len() != count {
        return Err(CliError::validation(format!(
            "{} --bounds given for {count} selected predictors",
            specs.len()
        )));
    }
    specs
        .iter()
        .map(|s| {
            let (lo, hi) = s
                .split_once(':')
                .ok_or_else(|| CliError::validation(format!("bounds {s:?} are not min:max")))?;
            let parse = |v: &str| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::validation(format!("bounds {s:?}: {v:?} is not a number")))
            };
            Ok(SignalRange {
                min: parse(lo)?,
                max: parse(hi)?,
            })
        })
        .collect::<CliResult<Vec<_>>>()
        .map(Some)
}

#[derive(Serialize)]
struct RecoveryRecord {
    row: usize,
    label: String,
    result: RecoveryResult,
}

pub fn recover(a: &RecoverArgs) -> CliResult<()> {
    let model = read_model(&a.model)?;
    let mut data = read_dataset(&a.data)?;
    check_schema(&model, &data, &a.data)?;
    if let Some(c) = &a.clean {
        attach_clean(&mut data, c)?;
    }
    let selected = if a.missing.units.is_empty() && a.missing.indices.is_empty() {
        None
    } else {
        Some(resolve(&a.missing, &model)?)
    };
    let bounds = match &selected {
        Some(idx) => parse_bounds(&a.bounds, idx.len())?,
        None if !a.bounds.is_empty() => {
            return Err(CliError::validation("--bounds requires --unit or --indices"));
        }
        None => None,
    };

    let mut records = Vec::with_capacity(data.len());
    for (row, s) in data.samples.iter().enumerate() {
        let obs = match &selected {
            Some(idx) => s.observation.masked(idx)?,
            None => s.observation.clone(),
        };
        let result = recover_one(&model, &obs, bounds.as_deref()).map_err(|e| {
            let mut err = CliError::from(e);
            err.message = format!("row {}: {}", row + 1, err.message);
            err
        })?;
        records.push(RecoveryRecord {
            row: row + 1,
            label: model.classes()[result.best_class].label.to_string(),
            result,
        });
    }

    let body = match a.format {
        Format::Json => to_json(&records)?,
        Format::Csv => {
            let mut s = String::from("row,predicted,best_class");
            for n in model.schema().names() {
                write!(s, ",{n}").unwrap();
            }
            s.push('\n');
            for r in &records {
                write!(s, "{},{},{}", r.row, r.label, r.result.best_class).unwrap();
                for v in &r.result.recovered_observation {
                    write!(s, ",{}", num(*v)).unwrap();
                }
                s.push('\n');
            }
            s
        }
    };
    write_atomic(&a.out, body.as_bytes())?;
    let mut meta = RunMetadata::new(
        "recover",
        json!({ "selected": selected, "bounds": a.bounds }),
    );
    meta.input(&a.model)?;
    meta.input(&a.data)?;
    if let Some(c) = &a.clean {
        meta.input(c)?;
    }
    meta.output(&a.out);
    meta.write(&sidecar(&a.out))?;

    if let (Some(idx), true) = (&selected, a.clean.is_some()) {
        for &i in idx {
            let rec: Vec<f64> = records.iter().map(|r| r.result.recovered_observation[i]).collect();
            let act: Vec<f64> = data.samples.iter().map(|s| s.clean.as_ref().expect("attached")[i]).collect();
            let c = correlation(&rec, &act).map_or_else(|| "undefined".to_string(), |v| v.to_string());
            println!("correlation {} {c}", model.schema().names()[i]);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct VerdictRecord {
    row: usize,
    #[serde(flatten)]
    verdict: AnomalyVerdict,
}

pub fn detect(a: &DetectArgs) -> CliResult<()> {
    let model = read_model(&a.model)?;
    let data = read_dataset(&a.data)?;
    check_schema(&model, &data, &a.data)?;
    let idx = resolve(&a.suspect, &model)?;
    if idx.is_empty() {
        return Err(CliError::validation("select suspect predictors with --unit or --indices"));
    }
    if !a.manipulate.is_finite() {
        return Err(CliError::validation("--manipulate must be finite"));
    }
    let threshold = match (a.threshold, a.calibrate, &a.calibration) {
        (Some(t), None, _) => t,
        (None, Some(target), Some(path)) => {
            let cal = read_dataset(path)?;
            check_schema(&model, &cal, path)?;
            calibrate_threshold(&model, &cal, &idx, target)?
        }
        _ => return Err(CliError::validation("give --threshold or --calibrate with --calibration")),
    };

    let mut records = Vec::with_capacity(data.len());
    for row in 0..data.len() {
        let mut x = complete_row(&data, row, "screening needs complete rows")?;
        for &i in &idx {
            x[i] *= a.manipulate;
        }
        records.push(VerdictRecord {
            row: row + 1,
            verdict: detect_one(&model, &x, &idx, threshold)?,
        });
    }
    let flagged = records.iter().filter(|r| r.verdict.is_anomalous).count();
    let body = match a.format {
        Format::Json => to_json(&records)?,
        Format::Csv => {
            let mut s = String::from("row,alpha,log_alpha,threshold,is_anomalous,final_label");
            for &i in &idx {
                write!(s, ",recovered_{}", model.schema().names()[i]).unwrap();
            }
            s.push('\n');
            for r in &records {
                let v = &r.verdict;
                write!(
                    s,
                    "{},{},{},{},{},{}",
                    r.row,
                    num(v.alpha),
                    num(v.log_alpha),
                    num(v.threshold),
                    v.is_anomalous,
                    v.final_label
                )
                .unwrap();
                for x in &v.recovered_values {
                    write!(s, ",{}", num(*x)).unwrap();
                }
                s.push('\n');
            }
            s
        }
    };
    write_atomic(&a.out, body.as_bytes())?;
    let mut meta = RunMetadata::new(
        "detect",
        json!({ "suspect": idx, "threshold": threshold, "calibrate": a.calibrate, "manipulate": a.manipulate }),
    );
    meta.input(&a.model)?;
    meta.input(&a.data)?;
    if let Some(p) = &a.calibration {
        meta.input(p)?;
    }
    meta.output(&a.out);
    meta.write(&sidecar(&a.out))?;
    println!("threshold {threshold}; flagged {flagged} of {}", records.len());
    Ok(())
}

struct Reports<'a> {
    dir: &'a Path,
    format: Format,
    meta: RunMetadata,
}

impl Reports<'_> {
    fn emit<T: Serialize>(&mut self, name: &str, value: &T, csv: impl FnOnce(&T) -> String) -> CliResult<()> {
        let (file, body) = match self.format {
            Format::Csv => (format!("{name}.csv"), csv(value)),
            Format::Json => (format!("{name}.json"), to_json(value)?),
        };
        let path = self.dir.join(file);
        write_atomic(&path, body.as_bytes())?;
        self.meta.output(&path);
        Ok(())
    }
}

pub fn evaluate(a: &EvaluateArgs) -> CliResult<()> {
    let model = read_model(&a.model)?;
    let mut test = read_dataset(&a.test)?;
    check_schema(&model, &test, &a.test)?;
    if let Some(c) = &a.clean {
        attach_clean(&mut test, c)?;
    }
    let train = match &a.train {
        Some(p) => {
            let d = read_dataset(p)?;
            check_schema(&model, &d, p)?;
            Some(d)
        }
        None => None,
    };
    let need_train = |what: &str| -> CliResult<&Dataset> {
        train
            .as_ref()
            .ok_or_else(|| CliError::validation(format!("the {what} sweep needs --train")))
    };
    let sweeps = if a.sweeps.is_empty() {
        vec![Sweep::Roc, Sweep::Confusion]
    } else {
        a.sweeps.clone()
    };
    create_dir(&a.out_dir)?;

    let mut meta = RunMetadata::new(
        "evaluate",
        json!({
            "sweeps": sweeps.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>(),
            "target_false_alarm": a.target_false_alarm,
            "threshold": a.threshold,
            "scales": a.scales,
            "n_per_topology": a.n_per_topology,
            "seed": a.seed,
            "lambda": model.lambda(),
        }),
    );
    for p in [Some(&a.model), Some(&a.test), a.clean.as_ref(), a.train.as_ref(), a.calibration.as_ref(), a.feeder.as_ref()]
        .into_iter()
        .flatten()
    {
        meta.input(p)?;
    }
    let mut out = Reports {
        dir: &a.out_dir,
        format: a.format,
        meta,
    };
    let mut summary = serde_json::Map::new();
    let units = model.schema().units();

    for sweep in sweeps {
        match sweep {
            Sweep::Confusion => {
                let cm = eval::confusion(&model, &test, &Pipeline::Plain)?;
                let rates = eval::split_rates(&cm);
                out.emit("confusion", &cm, report::confusion_csv)?;
                out.emit("split_rates", &rates, report::split_rates_csv)?;
                summary.insert(
                    "confusion".into(),
                    json!({
                        "accuracy": cm.accuracy(),
                        "average_sc_misid": rates.average_sc_misid,
                        "average_pds_misid": rates.average_pds_misid,
                    }),
                );
                println!(
                    "accuracy {}; average sc misid {}; average pds misid {}",
                    cm.accuracy(),
                    rates.average_sc_misid,
                    rates.average_pds_misid
                );
            }
            Sweep::Roc => {
                let curves = eval::roc_all(&model, &test)?;
                out.emit("roc_auc", &curves, |c| report::roc_summary_csv(c))?;
                out.emit("roc_points", &curves, |c| report::roc_points_csv(c))?;
                let min = curves.iter().map(|c| c.auc).fold(f64::INFINITY, f64::min);
                summary.insert("min_auc".into(), json!(min));
                println!("minimum AUC {min}");
            }
            Sweep::MissingUnits => {
                let rows = eval::missing_unit_sweep(&model, need_train("missing-units")?, &test, &units)?;
                out.emit("missing_units", &rows, |r| report::missing_units_csv(r))?;
                if a.format == Format::Csv {
                    out.emit("correlations", &rows, |r| report::correlations_csv(r))?;
                }
                summary.insert(
                    "missing_units".into(),
                    json!(rows
                        .iter()
                        .map(|r| json!({
                            "unit": r.unit,
                            "mean_substitution_sc_accuracy": r.mean_substitution.average_sc_accuracy(),
                            "recovery_sc_accuracy": r.recovery.average_sc_accuracy(),
                            "retrained_sc_accuracy": r.retrained.average_sc_accuracy(),
                        }))
                        .collect::<Vec<_>>()),
                );
            }
            Sweep::Anomaly => {
                let calibration = match &a.calibration {
                    Some(p) => {
                        let d = read_dataset(p)?;
                        check_schema(&model, &d, p)?;
                        Some(d)
                    }
                    None => None,
                };
                let rule = match (a.threshold, &calibration) {
                    (Some(t), _) => ThresholdRule::Fixed(t),
                    (None, Some(_)) => ThresholdRule::Calibrated {
                        target_false_alarm: a.target_false_alarm,
                    },
                    (None, None) => {
                        return Err(CliError::validation("the anomaly sweep needs --threshold or --calibration"))
                    }
                };
                let rows = eval::anomaly_sweep(&model, calibration.as_ref(), &test, &units, &a.scales, rule)?;
                out.emit("anomaly", &rows, |r| report::anomaly_csv(r))?;
                summary.insert(
                    "anomaly".into(),
                    json!({
                        "alpha_upper_edges": eval::sweeps::ALPHA_EDGES,
                        "units": rows
                            .iter()
                            .map(|r| json!({
                                "unit": r.unit,
                                "threshold": r.threshold,
                                "false_alarm_rate": r.false_alarm_rate,
                                "detection_rates": r.scales.iter().map(|s| (s.scale, s.detection_rate)).collect::<Vec<_>>(),
                            }))
                            .collect::<Vec<_>>(),
                    }),
                );
            }
            Sweep::Pairs => {
                let pairs = eval::all_pairs(&units);
                let rows = eval::pair_drop_sweep(need_train("pairs")?, &test, &pairs, model.lambda())?;
                out.emit("pairs", &rows, |r| report::drops_csv(r))?;
                summary.insert(
                    "pairs_best".into(),
                    json!(rows.first().map(|r| r.dropped.clone())),
                );
            }
            Sweep::LoadVariants => {
                let feeder = read_feeder(a.feeder.as_deref())?;
                out.meta.feeder_hash = Some(feeder.hash());
                let rows = eval::load_variant_sweep(
                    &feeder,
                    &LoadVariant::ALL,
                    a.n_per_topology,
                    a.seed,
                    0.9,
                    &SamplingParams::default(),
                    model.lambda(),
                )?;
                out.emit("load_variants", &rows, |r| report::variants_csv(r))?;
            }
        }
    }
    let summary_path = a.out_dir.join("summary.json");
    write_atomic(&summary_path, to_json(&summary)?.as_bytes())?;
    out.meta.output(&summary_path);
    out.meta.write(&a.out_dir.join("run.json"))?;
    Ok(())
}

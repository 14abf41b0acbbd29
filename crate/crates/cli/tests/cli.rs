use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use topoid_core::dataset::Dataset;
use topoid_core::model::DaModel;
use topoid_core::simgen::FeederModel;

fn topoid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_topoid")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Small generated dataset plus a model trained on it.
struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let o = topoid(&["generate", "--out-dir", s(&data), "--n-per-topology", "40", "--seed", "3"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let o = topoid(&["train", "--train", s(&data.join("train.csv")), "--out", s(&dir.path().join("model.json"))]);
        assert!(o.status.success(), "{}", stderr(&o));
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn classify_output_matches_reloaded_model() {
    let ws = Workspace::new();
    let out = ws.path("pred.csv");
    let o = topoid(&[
        "classify",
        "--model",
        s(&ws.path("model.json")),
        "--data",
        s(&ws.path("data/test.csv")),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("accuracy "));

    let model = DaModel::from_json(&fs::read_to_string(ws.path("model.json")).unwrap()).unwrap();
    let test = Dataset::read_csv(fs::File::open(ws.path("data/test.csv")).unwrap()).unwrap();
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("row,predicted,p_C1-00"));
    let mut count = 0;
    for (line, sample) in lines.zip(&test.samples) {
        let fields: Vec<&str> = line.split(',').collect();
        let c = model.classify(&sample.observation.to_complete().unwrap()).unwrap();
        assert_eq!(fields[1], c.label.to_string());
        let post: Vec<f64> = fields[2..].iter().map(|f| f.parse().unwrap()).collect();
        assert_eq!(post, c.posterior);
        count += 1;
    }
    assert_eq!(count, test.len());

    let meta = fs::read_to_string(ws.path("pred.csv.meta.json")).unwrap();
    assert!(meta.contains("\"model.json\"") && !meta.contains(s(ws.dir.path())));
}

#[test]
fn malformed_feeder_names_the_branch() {
    let dir = tempfile::tempdir().unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&FeederModel::reference().to_json().unwrap()).unwrap();
    let branch = value["branches"]
        .as_array_mut()
        .unwrap()
        .iter_mut()
        .find(|b| b["id"] == "L23")
        .unwrap();
    branch["r"] = serde_json::json!(-0.02);
    let feeder = dir.path().join("bad.json");
    fs::write(&feeder, serde_json::to_string(&value).unwrap()).unwrap();
    let o = topoid(&["generate", "--feeder", s(&feeder), "--out-dir", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("L23"), "{}", stderr(&o));
    assert!(!dir.path().join("out/train.csv").exists());
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = topoid(&[
        "train",
        "--train",
        s(&dir.path().join("absent.csv")),
        "--out",
        s(&dir.path().join("m.json")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("absent.csv"));
}

#[test]
fn incomplete_rows_are_routed_to_recover() {
    let ws = Workspace::new();
    let text = fs::read_to_string(ws.path("data/test.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let header: Vec<&str> = lines[0].split(',').collect();
    let col = header.iter().position(|h| *h == "DER2.P").unwrap();
    for line in lines.iter_mut().skip(1) {
        let mut f: Vec<&str> = line.split(',').collect();
        f[col] = "";
        *line = f.join(",");
    }
    let holed = ws.path("holed.csv");
    fs::write(&holed, lines.join("\n") + "\n").unwrap();

    let model = ws.path("model.json");
    let o = topoid(&["classify", "--model", s(&model), "--data", s(&holed), "--out", s(&ws.path("p.csv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("recover"));

    let out = ws.path("rec.json");
    let o = topoid(&["recover", "--model", s(&model), "--data", s(&holed), "--out", s(&out), "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let records: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(records.as_array().unwrap().len(), lines.len() - 1);
    assert_eq!(records[0]["result"]["missing_idx"], serde_json::json!([col]));
}

#[test]
fn recover_reports_correlation_with_clean_values() {
    let ws = Workspace::new();
    let o = topoid(&[
        "recover",
        "--model",
        s(&ws.path("model.json")),
        "--data",
        s(&ws.path("data/test.csv")),
        "--unit",
        "DER1",
        "--clean",
        s(&ws.path("data/test_clean.csv")),
        "--out",
        s(&ws.path("rec.csv")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("correlation DER1.")).count(), 3);
}

#[test]
fn detect_validates_threshold_and_calibrates() {
    let ws = Workspace::new();
    let (model, data, out) = (ws.path("model.json"), ws.path("data/test.csv"), ws.path("det.csv"));
    let base = ["detect", "--model", s(&model), "--data", s(&data), "--unit", "DER3", "--out", s(&out)];
    let run = |extra: &[&str]| {
        let mut args = base.to_vec();
        args.extend_from_slice(extra);
        topoid(&args)
    };
    assert_eq!(run(&["--threshold", "0"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
    let train = ws.path("data/train.csv");
    let o = run(&["--calibrate", "0.05", "--calibration", s(&train), "--manipulate", "1.1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("flagged"));
}

#[test]
fn singular_training_data_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    let mut text = String::from("A.P,B.P,label_config,label_pd\n");
    for i in 0..10 {
        text += &format!("1.0,{i},C1,\n1.0,{},C2,\n", i + 20);
    }
    fs::write(&train, text).unwrap();
    let o = topoid(&["train", "--train", s(&train), "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("A.P"));
}

#[test]
fn evaluate_writes_reports_in_both_formats() {
    let ws = Workspace::new();
    for format in ["csv", "json"] {
        let out = ws.path(&format!("eval-{format}"));
        let o = topoid(&[
            "evaluate",
            "--model",
            s(&ws.path("model.json")),
            "--test",
            s(&ws.path("data/test.csv")),
            "--format",
            format,
            "--out-dir",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        for name in ["confusion", "split_rates", "roc_auc", "roc_points"] {
            assert!(out.join(format!("{name}.{format}")).exists(), "{name}.{format}");
        }
        let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        assert!(summary["min_auc"].as_f64().unwrap() > 0.5);
    }
}

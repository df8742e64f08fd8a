use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn slcp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slcp"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_emits_header_and_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let a = slcp(&["gen", "--family", "sim1", "--n", "5", "--seed", "1"], dir.path());
    assert!(a.status.success(), "{}", stderr(&a));
    let text = String::from_utf8(a.stdout.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[0], "x_0,y");
    let b = slcp(&["gen", "--family", "sim1", "--n", "5", "--seed", "1"], dir.path());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn gen_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let zero = slcp(&["gen", "--family", "sim1", "--n", "0", "--seed", "1"], dir.path());
    assert!(!zero.status.success());
    let unknown = slcp(&["gen", "--family", "sim9", "--n", "5", "--seed", "1"], dir.path());
    assert!(!unknown.status.success());
    assert!(stderr(&unknown).contains("sim9"));
}

#[test]
fn gen_file_round_trips_through_loader() {
    let dir = tempfile::tempdir().unwrap();
    let out = slcp(
        &["gen", "--family", "sim2", "--n", "50", "--seed", "3", "--out", "d.csv"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let loaded = slcp::io::load_csv(dir.path().join("d.csv")).unwrap();
    let direct = slcp::evaluation::SyntheticSpec::new(slcp::evaluation::Family::Sim2, 50)
        .generate(3)
        .unwrap();
    assert_eq!(loaded, direct);
}

const CONFIG: &str = r#"{
  "dataset": {"synthetic": {"family": "sim2", "n": 300}},
  "split": {"train_fraction": 0.6, "test_fraction": 0.2, "seed": 4},
  "model": {"kind": "knn", "k": 20},
  "methods": [
    {"kind": "split", "alpha": 0.1},
    {"kind": "slcp", "alpha": 0.1, "bandwidth": "median"}
  ],
  "replications": 2,
  "output": "out"
}"#;

#[test]
fn run_writes_results_traces_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), CONFIG).unwrap();
    let out = slcp(&["run", "--config", "c.json", "--jobs", "2"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let results = fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    assert_eq!(results.lines().count(), 5);
    assert!(
        results.starts_with("method,seed,n_train,n_cal,n_test,alpha,coverage,avg_length,pearson,runtime_ms,flags\n")
    );
    for m in ["split", "slcp"] {
        for s in [4, 5] {
            let trace = fs::read_to_string(dir.path().join(format!("out/bands_{m}_{s}.csv"))).unwrap();
            assert!(trace.starts_with("x,lower,upper,y_true\n"));
            assert_eq!(trace.lines().count(), 61);
        }
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    let h = &manifest["replications"][0]["methods"][1]["bandwidth"];
    assert!(h.as_f64().unwrap() > 0.0, "{manifest}");
}

#[test]
fn invalid_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = CONFIG.replace(
        r#"{"kind": "split", "alpha": 0.1}"#,
        r#"{"kind": "asym", "alpha": 0.1, "alpha_lo": 0.01, "alpha_hi": 0.02}"#,
    );
    fs::write(dir.path().join("c.json"), bad).unwrap();
    let out = slcp(&["run", "--config", "c.json"], dir.path());
    assert!(!out.status.success());
    let msg = stderr(&out);
    assert!(msg.contains("alpha_lo") && msg.contains("line"), "{msg}");

    let missing = slcp(&["run", "--config", "nope.json"], dir.path());
    assert!(!missing.status.success());
}

#[test]
fn eval_scores_a_band_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("b.csv"), "x,lower,upper,y_true\n0,0,1,0.5\n1,0,1,2\n").unwrap();
    fs::write(dir.path().join("d.csv"), "x_0,y\n0,0.5\n1,2\n").unwrap();
    let out = slcp(&["eval", "--bands", "b.csv", "--data", "d.csv"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["coverage"], 0.5);
    assert_eq!(report["avg_length"], 1.0);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            slcp::experiment::ExperimentConfig::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 4);
}

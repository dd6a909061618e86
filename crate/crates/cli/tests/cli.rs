use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_selfcal"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn unknown_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n[toast]\nfrobnicate = 2\n");
    let out = dir.path().join("out");
    let o = run(&["run", "-c", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("frobnicate"), "{}", stderr(&o));
    assert_eq!(stderr(&o).lines().count(), 1);
}

#[test]
fn bad_override_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("minimal.toml");
    let out = dir.path().join("out");
    let o = run(&[
        "run",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
        "--set",
        "eval.nonsense=1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nonsense"));
}

#[test]
fn missing_seed_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[toast]\nk = 2\n");
    let o = run(&[
        "run",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"));
}

#[test]
fn minimal_run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let start = Instant::now();
    let o = run(&[
        "run",
        "-c",
        configs().join("minimal.toml").to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(start.elapsed() < Duration::from_secs(60));
    for f in ["metrics.json", "meta.json", "logs/toast.csv", "adversarial.jsonl"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let table = String::from_utf8(o.stdout).unwrap();
    let r = run(&["report", out.to_str().unwrap()]);
    assert!(r.status.success());
    let report = String::from_utf8(r.stdout).unwrap();
    assert!(report.contains("toast") && report.contains("vanilla"), "{report}");
    assert!(table.starts_with(&report));
}

#[test]
fn k_sweep_emits_one_row_per_k() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 2\n[data.synthetic]\nsamples_per_class = 200\ntest_samples_per_class = 100\n\
         [toast]\nepochs = 2\n[toast.train]\nepochs = 2\n[toast.train.featurizer]\nhash_dim = 4096\n\
         [pilot]\nrepeats = 1\n",
    );
    let out = dir.path().join("sweep");
    let o = run(&[
        "sweep",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
        "--kind",
        "k",
        "--jobs",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 4, "{csv}");
    for (row, k) in rows.iter().zip(2..) {
        assert!(row.starts_with(&format!("k,k={k},")), "{row}");
    }
}

#[test]
fn stepwise_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "seed = 3\n[data.synthetic]\nsamples_per_class = 200\ntest_samples_per_class = 100\n\
         [toast.train.featurizer]\nhash_dim = 4096\n",
    );
    let c = cfg.to_str().unwrap();
    let sub = |name: &str| dir.path().join(name).to_str().unwrap().to_string();

    let o = run(&["synth", "-c", c, "-o", &sub("data")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("data/train.jsonl").is_file());

    let o = run(&["train", "-c", c, "-o", &sub("vanilla")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let params = sub("vanilla/model.params");

    let o = run(&["attack", "-c", c, "-o", &sub("attack"), "--params", &params]);
    assert!(o.status.success(), "{}", stderr(&o));

    let o = run(&["toast", "-c", c, "-o", &sub("toast")]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("toast/artifacts/dstar.jsonl").is_file());

    let o = run(&[
        "eval",
        "-c",
        c,
        "-o",
        &sub("eval"),
        "--params",
        &sub("toast/model.params"),
        "--method",
        "toast",
        "--adversarial",
        &sub("attack/adversarial.jsonl"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let eval: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("eval/eval.json")).unwrap()).unwrap();
    assert!(eval["auroc"].is_number());
    assert!(eval["adversarial"]["auroc"].is_number());
}

#[test]
fn report_on_missing_dir_fails_cleanly() {
    let o = run(&["report", "/nonexistent/selfcal-run"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: "));
}

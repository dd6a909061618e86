use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use selfcal::apps::{adversarial_eval, selective_report, SweepKind};
use selfcal::augment::attack_dataset;
use selfcal::calibrators::{Calibrator, Method};
use selfcal::corpus::{generate_synthetic, parse_dataset_with};
use selfcal::model::{accuracy, train_main, TrainConfig};
use selfcal::pipeline::{
    holdout_split, load_data, run_pipeline, run_sweep, summary_table, with_jobs, write_meta, Metrics, PipelineConfig,
};
use selfcal::toast::run_toast;
use selfcal::{Error, Params, Result};

/// Self-calibrating text classifiers: training, evaluation and sweeps.
#[derive(Parser)]
#[command(name = "selfcal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory (overrides `out`).
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 = all cores (overrides `jobs`).
    #[arg(long)]
    jobs: Option<usize>,
    /// Override any config key, e.g. `--set toast.k=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Full run: train every method, evaluate, write metrics and curves.
    Run(Common),
    /// Pilot sweep over the calibration set; resumable.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// size, imbalance, features or k.
        #[arg(long)]
        kind: SweepKind,
    },
    /// Write the synthetic dataset and its lexicons.
    Synth(Common),
    /// Train a main-task-only model.
    Train {
        #[command(flatten)]
        common: Common,
        /// Label-smoothing epsilon (0 = vanilla).
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
    },
    /// Run the self-calibration pipeline and save model plus artifacts.
    Toast(Common),
    /// Score a saved model on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        params: PathBuf,
        /// vanilla, temperature, label_smoothing or toast.
        #[arg(long)]
        method: Method,
        /// Adversarial samples (JSONL) to mix with the test split.
        #[arg(long)]
        adversarial: Option<PathBuf>,
    },
    /// Greedy substitution attack on the test split.
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        params: PathBuf,
    },
    /// Print the summary table of a run directory.
    Report { dir: PathBuf },
}

impl Common {
    fn load(&self) -> Result<(PipelineConfig, PathBuf)> {
        let mut overrides = Vec::new();
        for s in &self.sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("--set expects KEY=VALUE, got `{s}`")))?;
            overrides.push((k.trim().to_string(), v.trim().to_string()));
        }
        if let Some(seed) = self.seed {
            overrides.push(("seed".into(), seed.to_string()));
        }
        if let Some(jobs) = self.jobs {
            overrides.push(("jobs".into(), jobs.to_string()));
        }
        let cfg = PipelineConfig::load(&self.config, &overrides)?;
        let out = self
            .out
            .clone()
            .or_else(|| cfg.out.clone())
            .ok_or_else(|| Error::InvalidConfig("no output directory: pass --out or set `out`".into()))?;
        Ok((cfg, out))
    }
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::Format(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, body).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn json(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(c) => {
            let (cfg, out) = c.load()?;
            let summary = with_jobs(cfg.jobs, || run_pipeline(&cfg, &out))??;
            print!("{}", summary.table);
            println!("run directory: {}", summary.dir.display());
        }
        Command::Sweep { common, kind } => {
            let (cfg, out) = common.load()?;
            let report = with_jobs(cfg.jobs, || run_sweep(&cfg, kind, &out))??;
            for r in &report.rows {
                let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
                println!(
                    "{:<40} auroc={} delta_conf={} {}",
                    r.point,
                    f(r.auroc),
                    f(r.delta_conf),
                    r.skipped
                );
            }
            println!("sweep.csv: {}", out.join("sweep.csv").display());
        }
        Command::Synth(c) => {
            let (cfg, out) = c.load()?;
            let synth = generate_synthetic(&cfg.data.synthetic)?;
            synth.save(&out)?;
            let data = load_data(&cfg)?;
            data.lexicon.save(out.join("lexicon.tsv"))?;
            data.attack_lexicon.save(out.join("attack_lexicon.tsv"))?;
            write_meta(&out, "synth", &cfg, Vec::new())?;
            println!(
                "train={} test={} -> {}",
                synth.train.len(),
                synth.test.len(),
                out.display()
            );
        }
        Command::Train { common, epsilon } => {
            let (cfg, out) = common.load()?;
            with_jobs(cfg.jobs, || -> Result<()> {
                let data = load_data(&cfg)?;
                let tc = TrainConfig {
                    label_smoothing_epsilon: epsilon,
                    ..cfg.train_config()
                };
                let trained = train_main::<f64>(&data.train, &tc)?;
                trained.params.save(out.join("model.params"))?;
                let acc = accuracy(&trained.params, &data.test);
                write(
                    &out.join("train.json"),
                    json(&serde_json::json!({ "test_accuracy": acc })),
                )?;
                write_meta(&out, "train", &cfg, Vec::new())?;
                println!("test accuracy {:.2}%", 100.0 * acc);
                Ok(())
            })??;
        }
        Command::Toast(c) => {
            let (cfg, out) = c.load()?;
            with_jobs(cfg.jobs, || -> Result<()> {
                let data = load_data(&cfg)?;
                let run = run_toast::<f64>(&data.train, &cfg.toast, &data.lexicon)?;
                run.params.save(out.join("model.params"))?;
                run.artifacts.write_dir(out.join("artifacts"))?;
                write_meta(&out, "toast", &cfg, Vec::new())?;
                println!(
                    "annotated {} ({} wrong), D*={} D*_A={}, test accuracy {:.2}%",
                    run.artifacts.meta.annotated,
                    run.artifacts.meta.annotated_negatives,
                    run.artifacts.dstar.len(),
                    run.artifacts.daug.len(),
                    100.0 * accuracy(&run.params, &data.test)
                );
                Ok(())
            })??;
        }
        Command::Eval {
            common,
            params,
            method,
            adversarial,
        } => {
            let (cfg, out) = common.load()?;
            with_jobs(cfg.jobs, || -> Result<()> {
                let data = load_data(&cfg)?;
                let p = Params::load(&params)?;
                let cal = if method == Method::Temperature {
                    let (_, holdout) = holdout_split(&cfg, &data.train)?;
                    Calibrator::fit_temperature_on(p, &holdout)?
                } else {
                    Calibrator::new(method, p)
                };
                let log = cal.build_log(&data.test, "id")?;
                write(&out.join("logs").join(format!("{}.csv", method.as_str())), log.to_csv())?;
                let sel = selective_report(&log, &cfg.eval.selective_targets)?;
                let adv = match &adversarial {
                    Some(path) => {
                        let text =
                            fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
                        let d = parse_dataset_with(&text, cfg.data.task_kind, Some(data.train.label_names()))?;
                        Some(adversarial_eval(&cal, &data.test, &d, cfg.eval.id_samples, cfg.seed)?)
                    }
                    None => None,
                };
                let (pos, neg) = log.split_by_correctness();
                let body = serde_json::json!({
                    "method": method,
                    "temperature": cal.temperature,
                    "accuracy": log.accuracy(),
                    "auroc": selfcal::metrics::auroc(&pos, &neg).ok(),
                    "delta_conf": selfcal::metrics::delta_conf(&pos, &neg).ok(),
                    "selective": sel,
                    "adversarial": adv,
                });
                write(&out.join("eval.json"), json(&body))?;
                write_meta(&out, "eval", &cfg, Vec::new())?;
                println!(
                    "{}: accuracy {:.2}%  auroc_risk {:.4}",
                    method.as_str(),
                    100.0 * log.accuracy(),
                    sel.auroc_risk
                );
                Ok(())
            })??;
        }
        Command::Attack { common, params } => {
            let (cfg, out) = common.load()?;
            with_jobs(cfg.jobs, || -> Result<()> {
                let data = load_data(&cfg)?;
                let p = Params::load(&params)?;
                let run = attack_dataset(
                    &p,
                    &data.test,
                    &data.attack_lexicon,
                    cfg.eval.attack_budget,
                    Some(cfg.eval.max_adversarial),
                )?;
                write(&out.join("adversarial.jsonl"), run.to_jsonl(&data.test))?;
                write_meta(&out, "attack", &cfg, Vec::new())?;
                println!(
                    "{} adversarial samples from {} attempts ({:.1}%)",
                    run.adversarial.len(),
                    run.attempted,
                    100.0 * run.success_rate()
                );
                Ok(())
            })??;
        }
        Command::Report { dir } => {
            let m = Metrics::load(dir.join("metrics.json"))?;
            print!("{}", summary_table(&m));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            match e {
                Error::InvalidConfig(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

//! Config-driven runs: data, training of every calibration method,
//! evaluation, and a run directory with metrics, curves and hashes.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::apps::{
    adversarial_eval, cascade_eval, selective_report, sweep_grid, sweep_notes, PilotConfig, PilotContext, SweepKind,
    SweepReport, SweepRow,
};
use crate::augment::{attack_dataset, SynonymLexicon};
use crate::calibrators::{Calibrator, ConfidenceLog, Method};
use crate::corpus::{fold_assignment, generate_synthetic, load_dataset, Dataset, SynthConfig, SynthData, TaskKind};
use crate::error::{Error, Result};
use crate::metrics::{auroc, delta_conf};
use crate::model::{train_main, ModelParameters, TrainConfig};
use crate::rng::derive_seed;
use crate::toast::{run_toast, ToastConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    #[default]
    Synthetic,
    Files,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    pub task_kind: TaskKind,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Pre-built adversarial samples; otherwise the vanilla model is attacked.
    pub adversarial: Option<PathBuf>,
    /// Augmentation lexicon (TSV).
    pub lexicon: Option<PathBuf>,
    /// Lexicon of the greedy attack (TSV).
    pub attack_lexicon: Option<PathBuf>,
    pub synthetic: SynthConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Application {
    Selective,
    Adversarial,
    Cascade,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub methods: Vec<Method>,
    pub applications: Vec<Application>,
    pub selective_targets: Vec<f64>,
    /// Share of the training set held out for temperature fitting.
    pub holdout_fraction: f64,
    pub label_smoothing_epsilon: f64,
    pub attack_budget: usize,
    pub max_adversarial: usize,
    pub id_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            applications: vec![Application::Selective, Application::Adversarial, Application::Cascade],
            selective_targets: vec![0.9, 0.95, 0.99],
            holdout_fraction: 0.1,
            label_smoothing_epsilon: 0.1,
            attack_budget: 5,
            max_adversarial: 1000,
            id_samples: crate::apps::DEFAULT_ID_SAMPLES,
        }
    }
}

/// Capacities of the cascade's small and large models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CascadeConfig {
    pub small_hidden: usize,
    pub small_epochs: usize,
    pub large_hidden: usize,
    pub large_epochs: usize,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            small_hidden: 16,
            small_epochs: 2,
            large_hidden: 128,
            large_epochs: 8,
        }
    }
}

/// Sweep grid; the pilot model settings come from `[toast]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PilotGrid {
    pub sizes: Vec<usize>,
    pub ratios: Vec<f64>,
    pub imbalance_size: usize,
    pub fixed_count: usize,
    pub fixed_others: Vec<usize>,
    pub ks: Vec<usize>,
    pub repeats: usize,
}

impl Default for PilotGrid {
    fn default() -> Self {
        let p = PilotConfig::default();
        Self {
            sizes: p.sizes,
            ratios: p.ratios,
            imbalance_size: p.imbalance_size,
            fixed_count: p.fixed_count,
            fixed_others: p.fixed_others,
            ks: p.ks,
            repeats: p.repeats,
        }
    }
}

/// A run configuration. `seed` is mandatory and the only seed accepted;
/// every component seed is derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub toast: ToastConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub cascade: CascadeConfig,
    #[serde(default)]
    pub pilot: PilotGrid,
}

const NESTED_SEEDS: [&str; 3] = ["data.synthetic.seed", "toast.seed", "toast.train.seed"];

const HOLDOUT_STREAM: u64 = 40;
const ID_SAMPLE_STREAM: u64 = 41;
const CASCADE_STREAM: u64 = 42;

fn lookup<'a>(v: &'a toml::Value, dotted: &str) -> Option<&'a toml::Value> {
    dotted.split('.').try_fold(v, |cur, k| cur.get(k))
}

/// Parses `raw` as a TOML value, falling back to a bare string.
fn parse_override(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets `key` (dotted) to `raw`, creating intermediate tables.
pub fn set_key(root: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::InvalidConfig(format!("malformed key `{key}`")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("key `{key}`: `{p}` is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_override(raw));
    Ok(())
}

impl PipelineConfig {
    /// Parses TOML text with `key=value` overrides applied on top.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string()))?;
        for (k, v) in overrides {
            set_key(&mut table, k, v)?;
        }
        let value = toml::Value::Table(table);
        for key in NESTED_SEEDS {
            if lookup(&value, key).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "unknown field `{key}`: seeds are set only by the top-level `seed`"
                )));
            }
        }
        let cfg: Self = value
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.message().to_string()))?;
        let cfg = cfg.seeded();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths in it (data files and `out`)
    /// resolve against its directory.
    pub fn load(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let d = &mut cfg.data;
        for p in [
            &mut d.train,
            &mut d.test,
            &mut d.adversarial,
            &mut d.lexicon,
            &mut d.attack_lexicon,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Propagates the master seed into every component.
    fn seeded(mut self) -> Self {
        self.data.synthetic.seed = self.seed;
        self.toast.seed = self.seed;
        self.toast.train.seed = self.seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.toast.validate()?;
        if self.data.source == DataSource::Synthetic {
            self.data.synthetic.validate()?;
        } else if self.data.train.is_none() || self.data.test.is_none() {
            return Err(Error::InvalidConfig(
                "data.source = \"files\" needs data.train and data.test".into(),
            ));
        }
        let e = &self.eval;
        if !(e.holdout_fraction > 0.0 && e.holdout_fraction <= 0.5) {
            return Err(Error::InvalidConfig(format!(
                "eval.holdout_fraction must lie in (0, 0.5], got {}",
                e.holdout_fraction
            )));
        }
        if !(0.0..1.0).contains(&e.label_smoothing_epsilon) {
            return Err(Error::InvalidConfig(
                "eval.label_smoothing_epsilon must lie in [0,1)".into(),
            ));
        }
        let c = &self.cascade;
        if c.small_hidden == 0 || c.large_hidden == 0 || c.small_epochs == 0 || c.large_epochs == 0 {
            return Err(Error::InvalidConfig("cascade capacities must be >= 1".into()));
        }
        self.pilot_config().validate()
    }

    pub fn pilot_config(&self) -> PilotConfig {
        let g = &self.pilot;
        PilotConfig {
            sizes: g.sizes.clone(),
            ratios: g.ratios.clone(),
            imbalance_size: g.imbalance_size,
            fixed_count: g.fixed_count,
            fixed_others: g.fixed_others.clone(),
            ks: g.ks.clone(),
            repeats: g.repeats,
            seed: self.seed,
            toast: self.toast.clone(),
        }
    }

    /// Main-task config of the baselines.
    pub fn train_config(&self) -> TrainConfig {
        self.toast.train.clone()
    }

    /// Seeds used by a run, for the record.
    pub fn seeds(&self) -> BTreeMap<String, u64> {
        let mut s = BTreeMap::new();
        s.insert("master".into(), self.seed);
        s.insert("synthetic".into(), self.data.synthetic.seed);
        s.insert("toast".into(), self.toast.seed);
        s.insert("train".into(), self.toast.train.seed);
        for r in 0..self.toast.k {
            s.insert(format!("annotator_{r}"), self.toast.annotator_config(r).seed);
        }
        s.insert("holdout".into(), derive_seed(self.seed, HOLDOUT_STREAM));
        s.insert("id_sample".into(), derive_seed(self.seed, ID_SAMPLE_STREAM));
        s.insert("cascade".into(), derive_seed(self.seed, CASCADE_STREAM));
        s
    }
}

/// Runs `f` on a pool of `jobs` threads (0 = all cores).
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("jobs: {e}")))?;
    Ok(pool.install(f))
}

/// Train/test data plus the lexicons for augmentation and attack.
pub struct LoadedData {
    pub train: Dataset,
    pub test: Dataset,
    pub synthetic: Option<SynthData>,
    pub lexicon: SynonymLexicon,
    pub attack_lexicon: SynonymLexicon,
}

pub fn load_data(cfg: &PipelineConfig) -> Result<LoadedData> {
    let d = &cfg.data;
    let lex_file = |p: &Option<PathBuf>| p.as_ref().map(SynonymLexicon::load).transpose();
    match d.source {
        DataSource::Synthetic => {
            let synth = generate_synthetic(&d.synthetic)?;
            let vocab = d.synthetic.vocab();
            Ok(LoadedData {
                train: synth.train.clone(),
                test: synth.test.clone(),
                lexicon: lex_file(&d.lexicon)?.unwrap_or_else(|| SynonymLexicon::synthetic(&vocab)),
                attack_lexicon: lex_file(&d.attack_lexicon)?
                    .unwrap_or_else(|| SynonymLexicon::synthetic_attack(&vocab)),
                synthetic: Some(synth),
            })
        }
        DataSource::Files => {
            let train_path = d
                .train
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("data.train missing".into()))?;
            let test_path = d
                .test
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("data.test missing".into()))?;
            let train = load_dataset(train_path, d.task_kind)?;
            let text = fs::read_to_string(test_path).map_err(|e| Error::io(test_path, e))?;
            let test = crate::corpus::parse_dataset_with(&text, d.task_kind, Some(train.label_names()))?;
            let lexicon = lex_file(&d.lexicon)?.unwrap_or_default();
            let attack_lexicon = lex_file(&d.attack_lexicon)?.unwrap_or_else(|| lexicon.clone());
            Ok(LoadedData {
                train,
                test,
                synthetic: None,
                lexicon,
                attack_lexicon,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: Method,
    pub accuracy: f64,
    /// `None` when the test log has a single correctness class.
    pub auroc: Option<f64>,
    pub delta_conf: Option<f64>,
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectiveMetrics {
    pub method: Method,
    pub auroc_risk: f64,
    pub coverage_at: Vec<crate::apps::CoverageAtTarget>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialMetrics {
    pub method: Method,
    pub auroc: f64,
    pub delta_conf: f64,
    pub best_macro_f1: f64,
    pub best_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialSection {
    pub source: String,
    /// Correctly classified test samples attacked (attack source only).
    pub attempted: Option<usize>,
    pub samples: usize,
    pub id_samples: usize,
    pub methods: Vec<AdversarialMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeMetrics {
    pub method: Method,
    pub small_accuracy: f64,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeSection {
    pub large_accuracy: f64,
    pub methods: Vec<CascadeMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToastSection {
    pub annotated_negatives: usize,
    pub dstar_size: usize,
    pub daug_size: usize,
    pub final_loss: Option<f64>,
}

/// Contents of `metrics.json`. Field order and float formatting are fixed,
/// so equal runs serialize to equal bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub methods: Vec<MethodMetrics>,
    pub toast: Option<ToastSection>,
    pub selective: Option<Vec<SelectiveMetrics>>,
    pub adversarial: Option<AdversarialSection>,
    pub cascade: Option<CascadeSection>,
}

impl Metrics {
    pub fn method(&self, m: Method) -> Option<&MethodMetrics> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize") + "\n"
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.2}", 100.0 * x))
}

/// Method x {Acc, AUROC, ΔConf} table, plus application columns when
/// present.
pub fn summary_table(m: &Metrics) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>7} {:>7} {:>7} {:>9} {:>8} {:>8}",
        "method", "Acc", "AUROC", "ΔConf", "AUROC_rk", "Adv-ΔC", "Cascade"
    );
    for r in &m.methods {
        let sel = m
            .selective
            .as_ref()
            .and_then(|s| s.iter().find(|x| x.method == r.method))
            .map(|x| x.auroc_risk);
        let adv = m
            .adversarial
            .as_ref()
            .and_then(|a| a.methods.iter().find(|x| x.method == r.method))
            .map(|x| x.delta_conf);
        let cas = m
            .cascade
            .as_ref()
            .and_then(|c| c.methods.iter().find(|x| x.method == r.method))
            .map(|x| x.area);
        let _ = writeln!(
            out,
            "{:<16} {:>7} {:>7} {:>7} {:>9} {:>8} {:>8}",
            r.method.as_str(),
            pct(Some(r.accuracy)),
            pct(r.auroc),
            r.delta_conf.map_or("-".into(), |x| format!("{x:.2}")),
            pct(sel),
            adv.map_or("-".into(), |x| format!("{x:.2}")),
            pct(cas),
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Run directory helpers

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn files_under(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            files_under(&p, root, out)?;
        } else if p.strip_prefix(root).is_ok_and(|r| r != Path::new("meta.json")) {
            out.push(p);
        }
    }
    Ok(())
}

/// SHA-256 of every file under `dir` except `meta.json`, keyed by relative
/// path with `/` separators.
pub fn artifact_hashes(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut files = Vec::new();
    files_under(dir, dir, &mut files)?;
    files
        .into_iter()
        .map(|p| {
            let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
            let rel = p
                .strip_prefix(dir)
                .expect("under root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            Ok((rel, hex::encode(Sha256::digest(&bytes))))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: PipelineConfig,
    pub seeds: BTreeMap<String, u64>,
    pub notes: Vec<String>,
    pub artifacts: BTreeMap<String, String>,
}

/// Writes `meta.json` after hashing everything else in `dir`.
pub fn write_meta(dir: &Path, command: &str, cfg: &PipelineConfig, notes: Vec<String>) -> Result<RunMeta> {
    let meta = RunMeta {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config: cfg.clone(),
        seeds: cfg.seeds(),
        notes,
        artifacts: artifact_hashes(dir)?,
    };
    write(
        &dir.join("meta.json"),
        serde_json::to_string_pretty(&meta).expect("meta") + "\n",
    )?;
    Ok(meta)
}

fn save_log(dir: &Path, m: Method, log: &ConfidenceLog<f64>) -> Result<()> {
    write(&dir.join("logs").join(format!("{}.csv", m.as_str())), log.to_csv())
}

fn log_metrics(m: Method, cal: &Calibrator<f64>, log: &ConfidenceLog<f64>) -> MethodMetrics {
    let (pos, neg) = log.split_by_correctness();
    MethodMetrics {
        method: m,
        accuracy: log.accuracy(),
        auroc: auroc(&pos, &neg).ok(),
        delta_conf: delta_conf(&pos, &neg).ok(),
        temperature: cal.temperature,
    }
}

/// Stratified split of the training set into (fit, holdout).
pub fn holdout_split(cfg: &PipelineConfig, train: &Dataset) -> Result<(Dataset, Dataset)> {
    let k = (1.0 / cfg.eval.holdout_fraction).round() as usize;
    let folds = fold_assignment(train, k.max(2), derive_seed(cfg.seed, HOLDOUT_STREAM))?;
    let mut rest: Vec<usize> = folds[1..].concat();
    rest.sort_unstable();
    let mut held = folds[0].clone();
    held.sort_unstable();
    Ok((train.subset(&rest), train.subset(&held)))
}

/// Trains the calibrator of `method`. Main-task baselines fit on `fit`
/// (temperature uses `holdout`); the self-calibrating model uses all of
/// `train`.
#[allow(clippy::too_many_arguments)]
fn build_calibrator(
    method: Method,
    tc: &TrainConfig,
    toast: &ToastConfig,
    data: &LoadedData,
    fit: &Dataset,
    holdout: &Dataset,
    eps: f64,
    vanilla: Option<&ModelParameters<f64>>,
) -> Result<(Calibrator<f64>, Option<crate::toast::ToastRun<f64>>)> {
    let main = |tc: &TrainConfig| -> Result<ModelParameters<f64>> {
        match vanilla {
            Some(p) if tc.label_smoothing_epsilon == 0.0 => Ok(p.clone()),
            _ => Ok(train_main::<f64>(fit, tc)?.params),
        }
    };
    Ok(match method {
        Method::Vanilla => (Calibrator::new(method, main(tc)?), None),
        Method::Temperature => (Calibrator::fit_temperature_on(main(tc)?, holdout)?, None),
        Method::LabelSmoothing => {
            let tc = TrainConfig {
                label_smoothing_epsilon: eps,
                ..tc.clone()
            };
            (Calibrator::new(method, main(&tc)?), None)
        }
        Method::Toast => {
            let run = run_toast::<f64>(&data.train, toast, &data.lexicon)?;
            (Calibrator::new(method, run.params.clone()), Some(run))
        }
    })
}

/// Result of [`run_pipeline`].
pub struct RunSummary {
    pub dir: PathBuf,
    pub metrics: Metrics,
    pub table: String,
}

const CONFIDENCE_NOTE: &str = "confidence of the self-calibrating model is the calibration head's \
P(correct) given the sample representation and the predicted label";

/// End-to-end run: data, every configured method, evaluation on the test
/// split, then `metrics.json`, curves, artifacts and `meta.json` under
/// `out`.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path) -> Result<RunSummary> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let data = load_data(cfg)?;
    if let Some(s) = &data.synthetic {
        s.save(out.join("data"))?;
    }
    let tc = cfg.train_config();
    let (fit, holdout) = holdout_split(cfg, &data.train)?;
    let vanilla = train_main::<f64>(&fit, &tc)?.params;
    vanilla.save(out.join("models").join("vanilla.params"))?;

    let mut methods: Vec<Method> = Method::ALL
        .into_iter()
        .filter(|m| cfg.eval.methods.contains(m))
        .collect();
    methods.dedup();
    let mut calibrators = Vec::new();
    let mut toast_section = None;
    for &m in &methods {
        let (cal, run) = build_calibrator(
            m,
            &tc,
            &cfg.toast,
            &data,
            &fit,
            &holdout,
            cfg.eval.label_smoothing_epsilon,
            Some(&vanilla),
        )?;
        if let Some(run) = run {
            run.artifacts.write_dir(out.join("artifacts").join("toast"))?;
            toast_section = Some(ToastSection {
                annotated_negatives: run.artifacts.meta.annotated_negatives,
                dstar_size: run.artifacts.dstar.len(),
                daug_size: run.artifacts.daug.len(),
                final_loss: run.artifacts.losses.last().map(|l| l.total),
            });
        }
        if matches!(m, Method::LabelSmoothing | Method::Toast) {
            cal.params
                .save(out.join("models").join(format!("{}.params", m.as_str())))?;
        }
        calibrators.push(cal);
    }

    let logs: Vec<ConfidenceLog<f64>> = calibrators
        .iter()
        .map(|c| c.build_log(&data.test, "id"))
        .collect::<Result<_>>()?;
    let mut method_rows = Vec::new();
    for (c, log) in calibrators.iter().zip(&logs) {
        save_log(out, c.method, log)?;
        method_rows.push(log_metrics(c.method, c, log));
    }

    let apps = &cfg.eval.applications;
    let selective = if apps.contains(&Application::Selective) {
        let mut rows = Vec::new();
        for (c, log) in calibrators.iter().zip(&logs) {
            let r = selective_report(log, &cfg.eval.selective_targets)?;
            let name = c.method.as_str();
            write(
                &out.join("curves").join(format!("selective_{name}.csv")),
                csv_string(
                    &["threshold", "coverage", "accuracy"],
                    r.threshold_curve
                        .iter()
                        .map(|p| vec![p.threshold.to_string(), p.coverage.to_string(), opt(p.accuracy)]),
                ),
            )?;
            write(
                &out.join("curves").join(format!("risk_coverage_{name}.csv")),
                csv_string(
                    &["threshold", "coverage", "risk"],
                    r.risk_coverage
                        .iter()
                        .map(|p| vec![p.threshold.to_string(), p.coverage.to_string(), p.risk.to_string()]),
                ),
            )?;
            rows.push(SelectiveMetrics {
                method: c.method,
                auroc_risk: r.auroc_risk,
                coverage_at: r.coverage_at,
            });
        }
        Some(rows)
    } else {
        None
    };

    let adversarial = if apps.contains(&Application::Adversarial) {
        let (adv, source, attempted) = match &cfg.data.adversarial {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let d = crate::corpus::parse_dataset_with(&text, cfg.data.task_kind, Some(data.train.label_names()))?;
                (d, "file".to_string(), None)
            }
            None => {
                let run = attack_dataset(
                    &vanilla,
                    &data.test,
                    &data.attack_lexicon,
                    cfg.eval.attack_budget,
                    Some(cfg.eval.max_adversarial),
                )?;
                write(&out.join("adversarial.jsonl"), run.to_jsonl(&data.test))?;
                (
                    run.to_dataset(&data.test)?,
                    "greedy_attack".to_string(),
                    Some(run.attempted),
                )
            }
        };
        if adv.is_empty() {
            return Err(Error::Undefined("adversarial set is empty; no attack succeeded"));
        }
        let mut rows = Vec::new();
        let mut id_n = 0;
        for c in &calibrators {
            let r = adversarial_eval(
                c,
                &data.test,
                &adv,
                cfg.eval.id_samples,
                derive_seed(cfg.seed, ID_SAMPLE_STREAM),
            )?;
            id_n = r.id_samples;
            write(
                &out.join("curves").join(format!("detection_{}.csv", c.method.as_str())),
                csv_string(
                    &["threshold", "f1_id", "f1_adversarial", "macro_f1"],
                    r.detection.iter().map(|d| {
                        vec![
                            d.threshold.to_string(),
                            d.f1_id.to_string(),
                            d.f1_adversarial.to_string(),
                            d.macro_f1.to_string(),
                        ]
                    }),
                ),
            )?;
            rows.push(AdversarialMetrics {
                method: c.method,
                auroc: r.auroc,
                delta_conf: r.delta_conf,
                best_macro_f1: r.best_macro_f1,
                best_threshold: r.best_threshold,
            });
        }
        Some(AdversarialSection {
            source,
            attempted,
            samples: adv.len(),
            id_samples: id_n,
            methods: rows,
        })
    } else {
        None
    };

    let cascade = if apps.contains(&Application::Cascade) {
        let cc = &cfg.cascade;
        let cascade_seed = derive_seed(cfg.seed, CASCADE_STREAM);
        let large_tc = TrainConfig {
            hidden_dim: cc.large_hidden,
            epochs: cc.large_epochs,
            seed: cascade_seed,
            ..tc.clone()
        };
        let large = train_main::<f64>(&data.train, &large_tc)?.params;
        let small_tc = TrainConfig {
            hidden_dim: cc.small_hidden,
            epochs: cc.small_epochs,
            seed: cascade_seed,
            ..tc.clone()
        };
        let small_toast = ToastConfig {
            epochs: cc.small_epochs,
            train: small_tc.clone(),
            ..cfg.toast.clone()
        };
        let small_vanilla = train_main::<f64>(&fit, &small_tc)?.params;
        let mut rows = Vec::new();
        let mut large_acc = 0.0;
        for &m in &methods {
            let (small, _) = build_calibrator(
                m,
                &small_tc,
                &small_toast,
                &data,
                &fit,
                &holdout,
                cfg.eval.label_smoothing_epsilon,
                Some(&small_vanilla),
            )?;
            let r = cascade_eval(&small, &large, &data.test)?;
            large_acc = r.large_accuracy;
            write(
                &out.join("curves").join(format!("cascade_{}.csv", m.as_str())),
                csv_string(
                    &["threshold", "accuracy", "routed_fraction"],
                    r.curve.points.iter().map(|p| {
                        vec![
                            p.threshold.to_string(),
                            p.accuracy.to_string(),
                            p.routed_fraction.to_string(),
                        ]
                    }),
                ),
            )?;
            rows.push(CascadeMetrics {
                method: m,
                small_accuracy: r.small_accuracy,
                area: r.curve.area,
            });
        }
        Some(CascadeSection {
            large_accuracy: large_acc,
            methods: rows,
        })
    } else {
        None
    };

    let metrics = Metrics {
        seed: cfg.seed,
        train_size: data.train.len(),
        test_size: data.test.len(),
        methods: method_rows,
        toast: toast_section,
        selective,
        adversarial,
        cascade,
    };
    write(&out.join("metrics.json"), metrics.to_json())?;
    write_meta(out, "run", cfg, vec![CONFIDENCE_NOTE.to_string()])?;
    let table = summary_table(&metrics);
    Ok(RunSummary {
        dir: out.to_path_buf(),
        metrics,
        table,
    })
}

// ---------------------------------------------------------------------------
// Sweeps

pub const SWEEP_HEADER: [&str; 9] = [
    "sweep",
    "point",
    "calib_size",
    "positives",
    "negatives",
    "auroc",
    "delta_conf",
    "accuracy",
    "skipped",
];

fn sweep_record(r: &SweepRow) -> Vec<String> {
    vec![
        r.sweep.as_str().to_string(),
        r.point.clone(),
        r.calib_size.to_string(),
        r.positives.to_string(),
        r.negatives.to_string(),
        opt(r.auroc),
        opt(r.delta_conf),
        opt(r.accuracy),
        r.skipped.clone(),
    ]
}

/// Reads the rows of an existing `sweep.csv`.
pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let bad = |e: String| Error::Format(format!("{}: {e}", path.display()));
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != SWEEP_HEADER.len() {
            return Err(bad(format!(
                "expected {} columns, got {}",
                SWEEP_HEADER.len(),
                rec.len()
            )));
        }
        let num = |i: usize| rec[i].parse::<usize>().map_err(|e| bad(e.to_string()));
        let float = |i: usize| -> Result<Option<f64>> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                rec[i].parse::<f64>().map(Some).map_err(|e| bad(e.to_string()))
            }
        };
        rows.push(SweepRow {
            sweep: rec[0].parse()?,
            point: rec[1].to_string(),
            calib_size: num(2)?,
            positives: num(3)?,
            negatives: num(4)?,
            auroc: float(5)?,
            delta_conf: float(6)?,
            accuracy: float(7)?,
            skipped: rec[8].to_string(),
        });
    }
    Ok(rows)
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    write(&tmp, csv_string(&SWEEP_HEADER, rows.iter().map(sweep_record)))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Runs one sweep into `out/sweep.csv`. Points already present in the file
/// are kept and skipped; new rows are appended as they finish, and the file
/// is finally rewritten in grid order (size sweeps ascending by size).
pub fn run_sweep(cfg: &PipelineConfig, kind: SweepKind, out: &Path) -> Result<SweepReport> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("sweep.csv");
    let existing = if path.exists() {
        read_sweep_csv(&path)?
    } else {
        Vec::new()
    };
    let done: HashSet<(SweepKind, String)> = existing.iter().map(|r| (r.sweep, r.point.clone())).collect();

    let data = load_data(cfg)?;
    let pilot = cfg.pilot_config();
    let grid = sweep_grid(&pilot, kind);
    let pending = grid.iter().filter(|g| !done.contains(&(g.kind, g.key.clone()))).count();
    if pending > 0 {
        let ctx = PilotContext::prepare::<f64>(&data.train, &data.test, &pilot)?;
        if !path.exists() {
            write(&path, csv_string(&SWEEP_HEADER, []))?;
        }
        let file = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let sink = Mutex::new(file);
        ctx.run_grid::<f64>(
            &grid,
            &data.lexicon,
            |g| !done.contains(&(g.kind, g.key.clone())),
            |row| {
                let mut line = csv::Writer::from_writer(Vec::new());
                line.write_record(sweep_record(row)).expect("in-memory write");
                let bytes = line.into_inner().expect("in-memory flush");
                let mut f = sink.lock().expect("sweep file lock");
                f.write_all(&bytes)
                    .and_then(|()| f.flush())
                    .map_err(|e| Error::io(&path, e))
            },
        )?;
    }

    // Merge: keep other sweeps' rows, order this sweep's rows by grid.
    let all = read_sweep_csv(&path)?;
    let mut merged: Vec<SweepRow> = all.iter().filter(|r| r.sweep != kind).cloned().collect();
    let mut rows = Vec::new();
    for g in &grid {
        if let Some(r) = all.iter().find(|r| r.sweep == kind && r.point == g.key) {
            rows.push(r.clone());
        }
    }
    merged.extend(rows.iter().cloned());
    write_sweep_csv(&path, &merged)?;
    let notes = sweep_notes(kind);
    write_meta(out, &format!("sweep {kind}"), cfg, notes.clone())?;
    Ok(SweepReport { kind, rows, notes })
}

//! Samples, datasets, JSONL ingestion, stratified folding and the seeded
//! synthetic generator.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::rng::seeded;

/// Whitespace tokenization used by every component that looks at words.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    #[default]
    SingleText,
    TextPair,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text_a: String,
    pub text_b: Option<String>,
    pub label: usize,
}

impl Sample {
    pub fn new(id: impl Into<String>, text_a: impl Into<String>, label: usize) -> Self {
        Self {
            id: id.into(),
            text_a: text_a.into(),
            text_b: None,
            label,
        }
    }

    pub fn with_pair(mut self, text_b: impl Into<String>) -> Self {
        self.text_b = Some(text_b.into());
        self
    }
}

/// An immutable labelled collection. Construction validates id uniqueness,
/// label range and non-empty text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    samples: Vec<Sample>,
    label_names: Vec<String>,
    task_kind: TaskKind,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, label_names: Vec<String>, task_kind: TaskKind) -> Result<Self> {
        if label_names.len() < 2 {
            return Err(Error::Format(format!(
                "a dataset needs at least 2 labels, got {}",
                label_names.len()
            )));
        }
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
            if s.label >= label_names.len() {
                return Err(Error::InvalidClass {
                    class: s.label,
                    num_classes: label_names.len(),
                });
            }
            if tokenize(&s.text_a).is_empty() {
                return Err(Error::Format(format!("sample `{}` has empty text", s.id)));
            }
        }
        Ok(Self {
            samples,
            label_names,
            task_kind,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn task_kind(&self) -> TaskKind {
        self.task_kind
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// New dataset made of the samples at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            label_names: self.label_names.clone(),
            task_kind: self.task_kind,
        }
    }

    /// Same label space and task kind, different samples.
    pub fn with_samples(&self, samples: Vec<Sample>) -> Result<Self> {
        Self::new(samples, self.label_names.clone(), self.task_kind)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Serialize as JSONL: a header line carrying `label_names`, then one
    /// object per sample.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = serde_json::json!({ "label_names": self.label_names });
        out.push_str(&header.to_string());
        out.push('\n');
        for s in &self.samples {
            out.push_str(&sample_json(s, &self.label_names[s.label], None).to_string());
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn sample_json(s: &Sample, label: &str, origin_id: Option<&str>) -> Value {
    let mut m = Map::new();
    m.insert("id".into(), Value::String(s.id.clone()));
    m.insert("text".into(), Value::String(s.text_a.clone()));
    if let Some(b) = &s.text_b {
        m.insert("text_pair".into(), Value::String(b.clone()));
    }
    m.insert("label".into(), Value::String(label.to_string()));
    if let Some(o) = origin_id {
        m.insert("origin_id".into(), Value::String(o.to_string()));
    }
    Value::Object(m)
}

fn label_string(v: &Value, line: usize) -> Result<String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        _ => Err(Error::Parse {
            line,
            msg: "`label` must be a string or number".into(),
        }),
    }
}

/// Parse JSONL text. Labels are mapped to indices by first-seen order unless
/// the first line is a `{"label_names": [...]}` header, in which case labels
/// outside the header are rejected.
pub fn parse_dataset(text: &str, task_kind: TaskKind) -> Result<Dataset> {
    parse_dataset_with(text, task_kind, None)
}

/// Like [`parse_dataset`] but with a label space fixed by the caller.
pub fn parse_dataset_with(text: &str, task_kind: TaskKind, fixed_labels: Option<&[String]>) -> Result<Dataset> {
    let mut label_names: Vec<String> = fixed_labels.map(<[String]>::to_vec).unwrap_or_default();
    let mut fixed = fixed_labels.is_some();
    let mut index: HashMap<String, usize> = label_names.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
    let mut samples = Vec::new();
    let mut first_content = true;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::Parse {
            line,
            msg: "expected a JSON object".into(),
        })?;
        if first_content {
            first_content = false;
            if let Some(names) = obj.get("label_names") {
                if fixed_labels.is_none() {
                    let names = names.as_array().ok_or_else(|| Error::Parse {
                        line,
                        msg: "`label_names` must be an array".into(),
                    })?;
                    for n in names {
                        let n = label_string(n, line)?;
                        index.insert(n.clone(), label_names.len());
                        label_names.push(n);
                    }
                    fixed = true;
                }
                continue;
            }
        }
        let text_a = obj.get("text").and_then(Value::as_str).ok_or_else(|| Error::Parse {
            line,
            msg: "missing string key `text`".into(),
        })?;
        let text_b = match (task_kind, obj.get("text_pair")) {
            (TaskKind::TextPair, Some(Value::String(b))) => Some(b.clone()),
            (TaskKind::TextPair, _) => {
                return Err(Error::Parse {
                    line,
                    msg: "missing string key `text_pair`".into(),
                })
            }
            (TaskKind::SingleText, _) => None,
        };
        let label = label_string(
            obj.get("label").ok_or_else(|| Error::Parse {
                line,
                msg: "missing key `label`".into(),
            })?,
            line,
        )?;
        let label = match index.get(&label) {
            Some(&k) => k,
            None if fixed => return Err(Error::UnknownLabel { line, label }),
            None => {
                index.insert(label.clone(), label_names.len());
                label_names.push(label);
                label_names.len() - 1
            }
        };
        if tokenize(text_a).is_empty() {
            return Err(Error::Parse {
                line,
                msg: "`text` has no tokens".into(),
            });
        }
        let id = match obj.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => format!("line-{line}"),
        };
        samples.push(Sample {
            id,
            text_a: text_a.to_string(),
            text_b,
            label,
        });
    }
    if samples.is_empty() {
        return Err(Error::NoSamples);
    }
    Dataset::new(samples, label_names, task_kind)
}

pub fn load_dataset(path: impl AsRef<Path>, task_kind: TaskKind) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, task_kind)
}

/// Split into `k` disjoint folds, stratified by label. Each class is shuffled
/// with `seed` and dealt round-robin, continuing the fold cursor across
/// classes, so per-class and total fold sizes differ by at most one. Samples
/// keep their dataset order inside a fold.
pub fn split_folds(d: &Dataset, k: usize, seed: u64) -> Result<Vec<Dataset>> {
    Ok(fold_assignment(d, k, seed)?.iter().map(|idx| d.subset(idx)).collect())
}

/// Index form of [`split_folds`].
pub fn fold_assignment(d: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("K must be at least 2, got {k}")));
    }
    if k > d.len() {
        return Err(Error::InvalidConfig(format!("K={k} exceeds dataset size {}", d.len())));
    }
    let mut rng = seeded(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); d.num_classes()];
    for (i, s) in d.samples().iter().enumerate() {
        by_class[s.label].push(i);
    }
    let mut folds = vec![Vec::new(); k];
    let mut cursor = 0usize;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[cursor % k].push(i);
            cursor += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Annotation produced by a model for one training sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub sample_id: String,
    pub text_a: String,
    pub text_b: Option<String>,
    pub predicted_label: usize,
    pub correctness: u8,
}

impl CalibrationRecord {
    pub fn is_correct(&self) -> bool {
        self.correctness == 1
    }
}

/// Knobs of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub vocab_size: usize,
    /// Training samples per class.
    pub samples_per_class: usize,
    pub test_samples_per_class: usize,
    pub hardness_fraction: f64,
    pub hard_flip_prob: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 2,
            vocab_size: 400,
            samples_per_class: 600,
            test_samples_per_class: 300,
            hardness_fraction: 0.3,
            hard_flip_prob: 0.5,
            min_len: 12,
            max_len: 24,
            seed: 7,
        }
    }
}

/// Probability that a token of an easy sample is class-indicative.
const EASY_SIGNAL: f64 = 0.4;
/// Own-class and other-class indicative rates for hard samples.
const HARD_OWN_SIGNAL: f64 = 0.12;
const HARD_CROSS_SIGNAL: f64 = 0.06;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_classes < 2 {
            return bad(format!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if self.samples_per_class == 0 || self.test_samples_per_class == 0 {
            return bad("sample counts must be positive".into());
        }
        if self.min_len == 0 || self.max_len < self.min_len {
            return bad(format!("invalid length range [{}, {}]", self.min_len, self.max_len));
        }
        for (name, p) in [
            ("hardness_fraction", self.hardness_fraction),
            ("hard_flip_prob", self.hard_flip_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0,1], got {p}"));
            }
        }
        let v = self.vocab();
        if v.per_class == 0 || v.noise_count() == 0 {
            return bad(format!(
                "vocab_size {} too small for {} classes",
                self.vocab_size, self.num_classes
            ));
        }
        Ok(())
    }

    pub fn vocab(&self) -> SynthVocab {
        SynthVocab {
            num_classes: self.num_classes,
            vocab_size: self.vocab_size,
            per_class: self.vocab_size / (4 * self.num_classes.max(1)),
        }
    }
}

/// Token layout of the synthetic vocabulary: the first `per_class *
/// num_classes` ids are class-indicative, the rest are noise.
#[derive(Debug, Clone, Copy)]
pub struct SynthVocab {
    pub num_classes: usize,
    pub vocab_size: usize,
    pub per_class: usize,
}

impl SynthVocab {
    pub fn token(id: usize) -> String {
        format!("w{id:04}")
    }

    pub fn indicative(&self, class: usize) -> Vec<String> {
        let start = class * self.per_class;
        (start..start + self.per_class).map(Self::token).collect()
    }

    pub fn noise_count(&self) -> usize {
        self.vocab_size.saturating_sub(self.per_class * self.num_classes)
    }

    pub fn noise(&self) -> Vec<String> {
        (self.per_class * self.num_classes..self.vocab_size)
            .map(Self::token)
            .collect()
    }

    fn indicative_id(&self, class: usize, rng: &mut impl Rng) -> usize {
        class * self.per_class + rng.gen_range(0..self.per_class)
    }

    fn noise_id(&self, rng: &mut impl Rng) -> usize {
        self.per_class * self.num_classes + rng.gen_range(0..self.noise_count())
    }
}

/// Generator output. The hardness flags are parallel to the samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub train: Dataset,
    pub test: Dataset,
    pub train_hard: Vec<bool>,
    pub test_hard: Vec<bool>,
}

impl SynthData {
    /// Writes `train.jsonl`, `test.jsonl` and their `*.hard.json` sidecars.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.train.save(dir.join("train.jsonl"))?;
        self.test.save(dir.join("test.jsonl"))?;
        for (name, flags, d) in [
            ("train.hard.json", &self.train_hard, &self.train),
            ("test.hard.json", &self.test_hard, &self.test),
        ] {
            let map: BTreeMap<&str, bool> = d
                .samples()
                .iter()
                .zip(flags)
                .map(|(s, &h)| (s.id.as_str(), h))
                .collect();
            let p = dir.join(name);
            let body = serde_json::to_string_pretty(&map).expect("serializable map");
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Seeded synthetic classification data with planted per-sample hardness.
///
/// Easy samples draw each token from their class's indicative set with
/// probability 0.4 and from the shared noise set otherwise. Hard samples are
/// diluted (0.12 own-class, 0.06 other-class indicative tokens) and their
/// label is moved to a random other class with `hard_flip_prob`.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let vocab = cfg.vocab();
    let mut rng = seeded(cfg.seed);
    let label_names: Vec<String> = (0..cfg.num_classes).map(|c| format!("c{c}")).collect();

    let mut make_split = |prefix: &str, per_class: usize| -> Result<(Dataset, Vec<bool>)> {
        let mut rows = Vec::with_capacity(per_class * cfg.num_classes);
        for class in 0..cfg.num_classes {
            for _ in 0..per_class {
                let hard = rng.gen_bool(cfg.hardness_fraction);
                let len = rng.gen_range(cfg.min_len..=cfg.max_len);
                let mut tokens = Vec::with_capacity(len);
                for _ in 0..len {
                    let u: f64 = rng.gen();
                    let id = if !hard {
                        if u < EASY_SIGNAL {
                            vocab.indicative_id(class, &mut rng)
                        } else {
                            vocab.noise_id(&mut rng)
                        }
                    } else if u < HARD_OWN_SIGNAL {
                        vocab.indicative_id(class, &mut rng)
                    } else if u < HARD_OWN_SIGNAL + HARD_CROSS_SIGNAL {
                        let other = other_class(class, cfg.num_classes, &mut rng);
                        vocab.indicative_id(other, &mut rng)
                    } else {
                        vocab.noise_id(&mut rng)
                    };
                    tokens.push(SynthVocab::token(id));
                }
                let label = if hard && rng.gen_bool(cfg.hard_flip_prob) {
                    other_class(class, cfg.num_classes, &mut rng)
                } else {
                    class
                };
                rows.push((tokens.join(" "), label, hard));
            }
        }
        rows.shuffle(&mut rng);
        let mut samples = Vec::with_capacity(rows.len());
        let mut flags = Vec::with_capacity(rows.len());
        for (i, (text, label, hard)) in rows.into_iter().enumerate() {
            samples.push(Sample::new(format!("{prefix}-{i:06}"), text, label));
            flags.push(hard);
        }
        Ok((Dataset::new(samples, label_names.clone(), TaskKind::SingleText)?, flags))
    };
    let (train, train_hard) = make_split("train", cfg.samples_per_class)?;
    let (test, test_hard) = make_split("test", cfg.test_samples_per_class)?;
    Ok(SynthData {
        train,
        test,
        train_hard,
        test_hard,
    })
}

fn other_class(class: usize, n: usize, rng: &mut impl Rng) -> usize {
    let k = rng.gen_range(0..n - 1);
    if k >= class {
        k + 1
    } else {
        k
    }
}

/// Reads a hardness sidecar written by [`SynthData::save`] back into flags
/// aligned with `d`.
pub fn load_hardness(path: impl AsRef<Path>, d: &Dataset) -> Result<Vec<bool>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let map: BTreeMap<String, bool> = serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
    d.samples()
        .iter()
        .map(|s| {
            map.get(&s.id)
                .copied()
                .ok_or_else(|| Error::Format(format!("no hardness flag for `{}`", s.id)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, classes: usize) -> Dataset {
        let samples = (0..n)
            .map(|i| Sample::new(format!("s{i}"), format!("tok{i} x"), i % classes))
            .collect();
        Dataset::new(
            samples,
            (0..classes).map(|c| format!("l{c}")).collect(),
            TaskKind::SingleText,
        )
        .unwrap()
    }

    #[test]
    fn parses_three_labels_in_first_seen_order() {
        let text = r#"{"text": "awful stuff", "label": "bad"}
{"text": "lovely", "label": "good"}
{"text": "it is fine", "label": "neutral"}
"#;
        let d = parse_dataset(text, TaskKind::SingleText).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.num_classes(), 3);
        assert_eq!(d.label_names(), ["bad", "good", "neutral"]);
        assert_eq!(d.samples()[2].label, 2);
    }

    #[test]
    fn empty_file_is_rejected() {
        let err = parse_dataset("", TaskKind::SingleText).unwrap_err();
        assert_eq!(err.to_string(), "no samples");
        let err = parse_dataset("\n\n", TaskKind::SingleText).unwrap_err();
        assert!(matches!(err, Error::NoSamples));
    }

    #[test]
    fn duplicate_ids_are_named() {
        let text = r#"{"id": "a", "text": "x", "label": "p"}
{"id": "b", "text": "y", "label": "n"}
{"id": "a", "text": "z", "label": "p"}
"#;
        let err = parse_dataset(text, TaskKind::SingleText).unwrap_err();
        assert!(matches!(&err, Error::DuplicateId(id) if id == "a"));
        assert!(err.to_string().contains("`a`"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "{\"text\": \"x\", \"label\": \"p\"}\n{oops\n";
        match parse_dataset(text, TaskKind::SingleText).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn header_fixes_label_space() {
        let text = r#"{"label_names": ["neg", "pos"]}
{"text": "x", "label": "pos"}
{"text": "y", "label": "meh"}
"#;
        match parse_dataset(text, TaskKind::SingleText).unwrap_err() {
            Error::UnknownLabel { line, label } => {
                assert_eq!(line, 3);
                assert_eq!(label, "meh");
            }
            e => panic!("unexpected {e}"),
        }
        let ok = "{\"label_names\": [\"neg\", \"pos\"]}\n{\"text\": \"x\", \"label\": \"pos\"}\n";
        let d = parse_dataset(ok, TaskKind::SingleText).unwrap();
        assert_eq!(d.samples()[0].label, 1);
    }

    #[test]
    fn pair_tasks_require_second_segment() {
        let text = "{\"text\": \"a\", \"text_pair\": \"b\", \"label\": \"e\"}\n{\"text\": \"c\", \"text_pair\": \"d\", \"label\": \"n\"}\n";
        let d = parse_dataset(text, TaskKind::TextPair).unwrap();
        assert_eq!(d.samples()[0].text_b.as_deref(), Some("b"));
        let bad = "{\"text\": \"a\", \"label\": \"e\"}\n";
        assert!(parse_dataset(bad, TaskKind::TextPair).is_err());
    }

    #[test]
    fn folds_of_ten_and_nine() {
        let d = toy(10, 2);
        let folds = split_folds(&d, 2, 1).unwrap();
        assert_eq!(folds.iter().map(Dataset::len).collect::<Vec<_>>(), [5, 5]);
        let a: HashSet<_> = folds[0].samples().iter().map(|s| &s.id).collect();
        assert!(folds[1].samples().iter().all(|s| !a.contains(&s.id)));

        let d = toy(9, 2);
        let mut sizes: Vec<_> = split_folds(&d, 2, 1).unwrap().iter().map(Dataset::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, [4, 5]);
    }

    #[test]
    fn folds_are_stratified() {
        let d = toy(100, 2);
        for seed in 0..5 {
            for f in split_folds(&d, 2, seed).unwrap() {
                assert_eq!(f.class_counts(), [25, 25]);
            }
        }
    }

    #[test]
    fn too_many_folds_is_an_error() {
        let d = toy(3, 2);
        assert!(split_folds(&d, 4, 0).is_err());
        assert!(split_folds(&d, 1, 0).is_err());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let cfg = SynthConfig {
            samples_per_class: 50,
            test_samples_per_class: 20,
            ..SynthConfig::default()
        };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a.train.to_jsonl(), b.train.to_jsonl());
        assert_eq!(a.test.to_jsonl(), b.test.to_jsonl());
        assert_eq!(a.train_hard, b.train_hard);
        assert_eq!(a.train.len(), 100);
        assert_eq!(a.test.len(), 40);
    }

    #[test]
    fn synthetic_config_validation() {
        let cfg = SynthConfig {
            hardness_fraction: 1.5,
            ..SynthConfig::default()
        };
        assert!(generate_synthetic(&cfg).is_err());
        let cfg = SynthConfig {
            vocab_size: 4,
            ..SynthConfig::default()
        };
        assert!(generate_synthetic(&cfg).is_err());
    }

    #[test]
    fn save_and_load_hardness() {
        let cfg = SynthConfig {
            samples_per_class: 10,
            test_samples_per_class: 5,
            ..SynthConfig::default()
        };
        let data = generate_synthetic(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        data.save(dir.path()).unwrap();
        let train = load_dataset(dir.path().join("train.jsonl"), TaskKind::SingleText).unwrap();
        assert_eq!(train, data.train);
        let flags = load_hardness(dir.path().join("train.hard.json"), &train).unwrap();
        assert_eq!(flags, data.train_hard);
    }
}

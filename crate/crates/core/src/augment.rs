//! Textual transformations for augmented negatives, and a greedy
//! word-substitution attacker.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{sample_json, tokenize, Dataset, Sample, SynthVocab};
use crate::error::{Error, Result};
use crate::model::ModelParameters;
use crate::scalar::Scalar;

pub const DEFAULT_RATE: f64 = 0.1;

/// Token to synonyms. Keys are stored lowercased and lookups lowercase
/// their argument.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SynonymLexicon {
    entries: BTreeMap<String, Vec<String>>,
}

impl SynonymLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds synonyms for `word`; empty lists are ignored so no entry is ever
    /// empty.
    pub fn insert(&mut self, word: &str, synonyms: impl IntoIterator<Item = String>) {
        let syns: Vec<String> = synonyms.into_iter().filter(|s| !s.is_empty()).collect();
        if syns.is_empty() {
            return;
        }
        self.entries.entry(word.to_lowercase()).or_default().extend(syns);
    }

    pub fn get(&self, word: &str) -> Option<&[String]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `word<TAB>syn1,syn2,...` lines. Blank lines and `#` comments
    /// are skipped.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut lex = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, syns) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: "expected `word<TAB>synonyms`".into(),
            })?;
            let syns: Vec<String> = syns
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            if word.trim().is_empty() || syns.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "empty word or synonym list".into(),
                });
            }
            lex.insert(word.trim(), syns);
        }
        Ok(lex)
    }

    pub fn to_tsv(&self) -> String {
        self.entries
            .iter()
            .map(|(w, s)| format!("{w}\t{}\n", s.join(",")))
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse_tsv(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    /// Meaning-preserving lexicon over the synthetic vocabulary: every token
    /// maps to two neighbours from its own group (same class-indicative set,
    /// or the noise set).
    pub fn synthetic(vocab: &SynthVocab) -> Self {
        let mut lex = Self::new();
        let mut groups: Vec<Vec<String>> = (0..vocab.num_classes).map(|c| vocab.indicative(c)).collect();
        groups.push(vocab.noise());
        for g in groups.iter().filter(|g| g.len() > 1) {
            for (i, w) in g.iter().enumerate() {
                let syns = [1, 2]
                    .iter()
                    .map(|o| g[(i + o) % g.len()].clone())
                    .filter(|s| s != w)
                    .collect::<Vec<_>>();
                lex.insert(w, syns);
            }
        }
        lex
    }

    /// Attack lexicon over the synthetic vocabulary: each class-indicative
    /// token maps to three noise tokens.
    pub fn synthetic_attack(vocab: &SynthVocab) -> Self {
        let noise = vocab.noise();
        let mut lex = Self::new();
        let mut k = 0;
        for c in 0..vocab.num_classes {
            for w in vocab.indicative(c) {
                let syns = (0..3).map(|j| noise[(k + j) % noise.len()].clone()).collect::<Vec<_>>();
                k += 3;
                lex.insert(&w, syns);
            }
        }
        lex
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    SynonymSubstitution,
    RandomInsertion,
    RandomSwap,
    RandomDeletion,
}

impl TransformKind {
    pub const ALL: [TransformKind; 4] = [
        TransformKind::SynonymSubstitution,
        TransformKind::RandomInsertion,
        TransformKind::RandomSwap,
        TransformKind::RandomDeletion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::SynonymSubstitution => "synonym_substitution",
            TransformKind::RandomInsertion => "random_insertion",
            TransformKind::RandomSwap => "random_swap",
            TransformKind::RandomDeletion => "random_deletion",
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Number of edits for `n` tokens: `ceil(rate * n)`, at least one when
/// `rate > 0`.
pub fn edit_count(rate: f64, n: usize) -> usize {
    if rate <= 0.0 || n == 0 {
        return 0;
    }
    ((rate * n as f64).ceil() as usize).clamp(1, n)
}

/// Applies one transformation. Substitution, insertion and swap perform
/// `ceil(rate * n)` edits; deletion drops each token independently with
/// probability `rate` but always keeps at least one.
pub fn apply_transform<R: Rng + ?Sized>(
    kind: TransformKind,
    text: &str,
    rate: f64,
    lexicon: &SynonymLexicon,
    rng: &mut R,
) -> String {
    let mut tokens: Vec<String> = tokenize(text).into_iter().map(str::to_string).collect();
    let n = tokens.len();
    if n == 0 {
        return text.to_string();
    }
    let k = edit_count(rate, n);
    match kind {
        TransformKind::SynonymSubstitution => {
            let candidates: Vec<usize> = (0..n).filter(|&i| lexicon.get(&tokens[i]).is_some()).collect();
            let picks = k.min(candidates.len());
            for j in index::sample(rng, candidates.len(), picks).into_vec() {
                let pos = candidates[j];
                let syns = lexicon.get(&tokens[pos]).expect("candidate has an entry");
                tokens[pos] = syns[rng.gen_range(0..syns.len())].clone();
            }
        }
        TransformKind::RandomInsertion => {
            for _ in 0..k {
                let source = tokens[rng.gen_range(0..tokens.len())].clone();
                let word = match lexicon.get(&source) {
                    Some(syns) if rng.gen_bool(0.5) => syns[rng.gen_range(0..syns.len())].clone(),
                    _ => source,
                };
                let at = rng.gen_range(0..=tokens.len());
                tokens.insert(at, word);
            }
        }
        TransformKind::RandomSwap => {
            if n >= 2 {
                for _ in 0..k {
                    let i = rng.gen_range(0..n - 1);
                    tokens.swap(i, i + 1);
                }
            }
        }
        TransformKind::RandomDeletion => {
            let keep: Vec<bool> = (0..n).map(|_| !rng.gen_bool(rate.clamp(0.0, 1.0))).collect();
            if keep.iter().any(|&b| b) {
                tokens = tokens
                    .into_iter()
                    .zip(keep)
                    .filter_map(|(t, k)| k.then_some(t))
                    .collect();
            } else {
                let survivor = rng.gen_range(0..n);
                tokens = vec![tokens.swap_remove(survivor)];
            }
        }
    }
    tokens.join(" ")
}

/// Draws the transformation uniformly, then applies it.
pub fn random_transform<R: Rng + ?Sized>(
    text: &str,
    rate: f64,
    lexicon: &SynonymLexicon,
    rng: &mut R,
) -> (TransformKind, String) {
    let kind = *TransformKind::ALL.choose(rng).expect("four kinds");
    (kind, apply_transform(kind, text, rate, lexicon, rng))
}

/// A successful attack: the perturbed sample and the substitutions made.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialSample {
    pub sample: Sample,
    pub origin_id: String,
    pub substitutions: usize,
}

/// Greedy word-substitution attack on `text_a`. Each step substitutes one
/// not-yet-edited position with the synonym that lowers the gold-class
/// probability most, stopping once the prediction flips. Returns `None`
/// when the budget runs out or no substitution helps.
pub fn greedy_attack<T: Scalar>(
    p: &ModelParameters<T>,
    s: &Sample,
    lexicon: &SynonymLexicon,
    budget: usize,
) -> Result<Option<AdversarialSample>> {
    if p.predict(s).label != s.label {
        return Err(Error::AttackMisclassified);
    }
    let mut tokens: Vec<String> = tokenize(&s.text_a).into_iter().map(str::to_string).collect();
    let mut edited = vec![false; tokens.len()];
    let gold_prob = |toks: &[String]| -> Result<(T, usize)> {
        let f = p.features_of(&toks.join(" "), s.text_b.as_deref());
        let pred = p.predict_features(&f)?;
        Ok((pred.probs[s.label], pred.label))
    };
    let (mut current, _) = gold_prob(&tokens)?;
    for step in 0..budget {
        let mut best: Option<(T, usize, usize, String)> = None;
        for pos in 0..tokens.len() {
            if edited[pos] {
                continue;
            }
            let Some(syns) = lexicon.get(&tokens[pos]) else {
                continue;
            };
            for syn in syns {
                let mut trial = tokens.clone();
                trial[pos] = syn.clone();
                let (prob, label) = gold_prob(&trial)?;
                if best.as_ref().is_none_or(|b| prob < b.0) {
                    best = Some((prob, label, pos, syn.clone()));
                }
            }
        }
        let Some((prob, label, pos, syn)) = best else {
            return Ok(None);
        };
        if prob >= current {
            return Ok(None);
        }
        tokens[pos] = syn;
        edited[pos] = true;
        current = prob;
        if label != s.label {
            return Ok(Some(AdversarialSample {
                sample: Sample {
                    id: format!("{}-adv", s.id),
                    text_a: tokens.join(" "),
                    text_b: s.text_b.clone(),
                    label: s.label,
                },
                origin_id: s.id.clone(),
                substitutions: step + 1,
            }));
        }
    }
    Ok(None)
}

/// Attack results for a dataset: the adversarial samples found plus the
/// number of correctly classified inputs attempted.
#[derive(Debug, Clone)]
pub struct AttackRun {
    pub adversarial: Vec<AdversarialSample>,
    pub attempted: usize,
}

impl AttackRun {
    pub fn success_rate(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.adversarial.len() as f64 / self.attempted as f64
        }
    }

    /// Adversarial samples as a dataset over `template`'s label space.
    pub fn to_dataset(&self, template: &Dataset) -> Result<Dataset> {
        template.with_samples(self.adversarial.iter().map(|a| a.sample.clone()).collect())
    }

    /// Corpus JSONL lines with an extra `origin_id` key.
    pub fn to_jsonl(&self, template: &Dataset) -> String {
        let mut out = String::new();
        let header = serde_json::json!({ "label_names": template.label_names() });
        out.push_str(&header.to_string());
        out.push('\n');
        for a in &self.adversarial {
            let v = sample_json(&a.sample, &template.label_names()[a.sample.label], Some(&a.origin_id));
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }
}

/// Attacks every correctly classified sample of `d`, stopping after
/// `max_successes` adversarial samples when given.
pub fn attack_dataset<T: Scalar>(
    p: &ModelParameters<T>,
    d: &Dataset,
    lexicon: &SynonymLexicon,
    budget: usize,
    max_successes: Option<usize>,
) -> Result<AttackRun> {
    let mut run = AttackRun {
        adversarial: Vec::new(),
        attempted: 0,
    };
    for s in d.samples() {
        if max_successes.is_some_and(|m| run.adversarial.len() >= m) {
            break;
        }
        if p.predict(s).label != s.label {
            continue;
        }
        run.attempted += 1;
        if let Some(a) = greedy_attack(p, s, lexicon, budget)? {
            run.adversarial.push(a);
        }
    }
    Ok(run)
}

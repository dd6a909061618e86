//! Three-stage self-calibration pipeline: K-fold cross-annotation of the
//! training set, post-processing (down-sampling plus augmented negatives),
//! and multi-task training of the main and calibration heads.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{random_transform, SynonymLexicon, TransformKind, DEFAULT_RATE};
use crate::corpus::{fold_assignment, CalibrationRecord, Dataset, Sample};
use crate::error::{Error, Result};
use crate::model::{
    featurize_samples, train_main, Batch, CalibExample, ConsistencyExample, LossTerms, MainExample, ModelParameters,
    ObjectiveWeights, SparseVector, TrainConfig,
};
use crate::rng::{derive_seed, seeded, Rng};
use crate::scalar::Scalar;

/// Stage switches for ablation runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablations {
    /// Replace cross-annotation with one 9:1 split (annotate the 10%).
    pub no_cross_annotation: bool,
    pub no_downsample: bool,
    pub no_augment: bool,
    /// Use alpha = 1.
    pub no_alpha_decay: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToastConfig {
    pub k: usize,
    pub alpha: f64,
    pub augment_per_negative: usize,
    pub rate: f64,
    /// Epochs of the final multi-task training.
    pub epochs: usize,
    /// Seed for folds, down-sampling and augmentation.
    pub seed: u64,
    pub ablations: Ablations,
    /// Main-task settings: the annotators train with it as is; the final
    /// model uses it with `epochs` replaced.
    pub train: TrainConfig,
}

impl Default for ToastConfig {
    fn default() -> Self {
        Self {
            k: 2,
            alpha: 0.1,
            augment_per_negative: 1,
            rate: DEFAULT_RATE,
            epochs: 8,
            seed: 0,
            ablations: Ablations::default(),
            train: TrainConfig::default(),
        }
    }
}

const FOLD_STREAM: u64 = 10;
const DOWNSAMPLE_STREAM: u64 = 11;
const AUGMENT_STREAM: u64 = 12;
const ANNOTATOR_STREAM: u64 = 100;
const MAIN_BATCH_STREAM: u64 = 20;
const CALIB_BATCH_STREAM: u64 = 21;
const AUG_BATCH_STREAM: u64 = 22;

impl ToastConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidConfig(format!("K must be >= 2, got {}", self.k)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.augment_per_negative == 0 {
            return Err(Error::InvalidConfig("augment_per_negative must be >= 1".into()));
        }
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rate must lie in (0,1], got {}",
                self.rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        self.train.validate()
    }

    /// Alpha actually used by the consistency term.
    pub fn effective_alpha(&self) -> f64 {
        if self.ablations.no_alpha_decay {
            1.0
        } else {
            self.alpha
        }
    }

    /// Main-task config of the annotator trained in `round`.
    pub fn annotator_config(&self, round: usize) -> TrainConfig {
        TrainConfig {
            label_smoothing_epsilon: 0.0,
            seed: derive_seed(self.train.seed, ANNOTATOR_STREAM + round as u64),
            ..self.train.clone()
        }
    }
}

/// Bookkeeping for one annotation round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRound {
    pub round: usize,
    pub train_ids: Vec<String>,
    pub annotated_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossAnnotation {
    /// One record per annotated sample, in dataset order.
    pub records: Vec<CalibrationRecord>,
    pub rounds: Vec<AnnotationRound>,
}

impl CrossAnnotation {
    /// Records whose annotating round also trained on them, or that no round
    /// (or more than one) claims to have annotated.
    pub fn leakage_violations(&self) -> Vec<String> {
        let mut annotated_by: HashMap<&str, Vec<usize>> = HashMap::new();
        for r in &self.rounds {
            for id in &r.annotated_ids {
                annotated_by.entry(id.as_str()).or_default().push(r.round);
            }
        }
        let mut bad = Vec::new();
        for rec in &self.records {
            match annotated_by.get(rec.sample_id.as_str()).map(Vec::as_slice) {
                Some([round]) => {
                    let r = &self.rounds[*round];
                    if r.train_ids.iter().any(|t| t == &rec.sample_id) {
                        bad.push(rec.sample_id.clone());
                    }
                }
                _ => bad.push(rec.sample_id.clone()),
            }
        }
        bad
    }

    pub fn negatives(&self) -> usize {
        self.records.iter().filter(|r| !r.is_correct()).count()
    }
}

fn record_for(s: &Sample, predicted: usize) -> CalibrationRecord {
    CalibrationRecord {
        sample_id: s.id.clone(),
        text_a: s.text_a.clone(),
        text_b: s.text_b.clone(),
        predicted_label: predicted,
        correctness: u8::from(predicted == s.label),
    }
}

/// Annotates `held_out` groups with models fitted on the complementary
/// samples. `fit(train, round)` returns a predictor.
pub fn annotate_partition<F, P>(d: &Dataset, held_out: &[Vec<usize>], fit: F) -> Result<CrossAnnotation>
where
    F: Fn(&Dataset, usize) -> Result<P> + Sync,
    P: Fn(&Sample) -> usize + Sync,
{
    let rounds: Vec<(AnnotationRound, Vec<(usize, CalibrationRecord)>)> = held_out
        .par_iter()
        .enumerate()
        .map(|(round, annotate)| {
            let held: HashSet<usize> = annotate.iter().copied().collect();
            let train_idx: Vec<usize> = (0..d.len()).filter(|i| !held.contains(i)).collect();
            let train = d.subset(&train_idx);
            let predict = fit(&train, round)?;
            let recs = annotate
                .iter()
                .map(|&i| {
                    let s = &d.samples()[i];
                    (i, record_for(s, predict(s)))
                })
                .collect();
            Ok((
                AnnotationRound {
                    round,
                    train_ids: train.samples().iter().map(|s| s.id.clone()).collect(),
                    annotated_ids: annotate.iter().map(|&i| d.samples()[i].id.clone()).collect(),
                },
                recs,
            ))
        })
        .collect::<Result<_>>()?;
    let mut indexed: Vec<(usize, CalibrationRecord)> = Vec::new();
    let mut meta = Vec::with_capacity(rounds.len());
    for (r, recs) in rounds {
        meta.push(r);
        indexed.extend(recs);
    }
    indexed.sort_by_key(|(i, _)| *i);
    Ok(CrossAnnotation {
        records: indexed.into_iter().map(|(_, r)| r).collect(),
        rounds: meta,
    })
}

/// K-fold cross-annotation with a generic model fitter.
pub fn cross_annotate_with<F, P>(d: &Dataset, k: usize, seed: u64, fit: F) -> Result<CrossAnnotation>
where
    F: Fn(&Dataset, usize) -> Result<P> + Sync,
    P: Fn(&Sample) -> usize + Sync,
{
    let folds = fold_assignment(d, k, derive_seed(seed, FOLD_STREAM))?;
    annotate_partition(d, &folds, fit)
}

type Predictor = Box<dyn Fn(&Sample) -> usize + Sync>;

fn main_task_fitter<T: Scalar>(cfg: &ToastConfig) -> impl Fn(&Dataset, usize) -> Result<Predictor> + Sync + '_ {
    move |train: &Dataset, round: usize| {
        let model = train_main::<T>(train, &cfg.annotator_config(round))?.params;
        Ok(Box::new(move |s: &Sample| model.predict(s).label) as Predictor)
    }
}

/// Every training sample is annotated exactly once by a model trained on
/// the other K-1 folds.
pub fn cross_annotate<T: Scalar>(d: &Dataset, cfg: &ToastConfig) -> Result<CrossAnnotation> {
    cfg.validate()?;
    cross_annotate_with(d, cfg.k, cfg.seed, main_task_fitter::<T>(cfg))
}

/// Single 9:1 split: train on 90%, annotate the remaining 10%.
pub fn split_annotate<T: Scalar>(d: &Dataset, cfg: &ToastConfig) -> Result<CrossAnnotation> {
    cfg.validate()?;
    let tenths = fold_assignment(d, 10, derive_seed(cfg.seed, FOLD_STREAM))?;
    annotate_partition(d, &tenths[..1], main_task_fitter::<T>(cfg))
}

/// Down-samples the majority correctness class to the minority count.
/// Output keeps input order.
pub fn downsample_balance(records: &[CalibrationRecord], rng: &mut Rng) -> Result<Vec<CalibrationRecord>> {
    if records.is_empty() {
        return Err(Error::NoSamples);
    }
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..records.len()).partition(|&i| records[i].is_correct());
    let (minority, majority) = if pos.len() <= neg.len() { (pos, neg) } else { (neg, pos) };
    if minority.is_empty() {
        return Err(Error::Degenerate(
            "calibration classes degenerate; annotator is perfectly right or wrong".into(),
        ));
    }
    let mut keep: Vec<usize> = index::sample(rng, majority.len(), minority.len())
        .into_iter()
        .map(|j| majority[j])
        .chain(minority.iter().copied())
        .collect();
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| records[i].clone()).collect())
}

/// A negative calibration record paired with a transformed copy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedRecord {
    pub sample_id: String,
    pub text_a: String,
    pub text_b: Option<String>,
    pub aug_text_a: String,
    pub aug_text_b: Option<String>,
    pub predicted_label: usize,
    pub transform: TransformKind,
}

/// `m` augmented copies of every negative record.
pub fn build_augment_set(
    records: &[CalibrationRecord],
    lexicon: &SynonymLexicon,
    m: usize,
    rate: f64,
    rng: &mut Rng,
) -> Vec<AugmentedRecord> {
    let mut out = Vec::new();
    for r in records.iter().filter(|r| !r.is_correct()) {
        for _ in 0..m {
            let (kind, aug_a) = random_transform(&r.text_a, rate, lexicon, rng);
            let aug_b = r
                .text_b
                .as_ref()
                .map(|b| crate::augment::apply_transform(kind, b, rate, lexicon, rng));
            out.push(AugmentedRecord {
                sample_id: r.sample_id.clone(),
                text_a: r.text_a.clone(),
                text_b: r.text_b.clone(),
                aug_text_a: aug_a,
                aug_text_b: aug_b,
                predicted_label: r.predicted_label,
                transform: kind,
            });
        }
    }
    out
}

/// Cycles through a shuffled index order, reshuffling on every wrap.
struct Cycler {
    order: Vec<usize>,
    pos: usize,
    rng: Rng,
}

impl Cycler {
    fn new(n: usize, rng: Rng) -> Self {
        Self {
            order: (0..n).collect(),
            pos: n,
            rng,
        }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let n = self.order.len();
        if n == 0 {
            return Vec::new();
        }
        let take = size.min(n);
        let mut out = Vec::with_capacity(take);
        while out.len() < take {
            if self.pos == n {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct MultitaskTrained<T> {
    pub params: ModelParameters<T>,
    /// Per-step loss terms.
    pub trace: Vec<LossTerms<T>>,
}

/// Trains a fresh model minimizing `L_o + L_c + alpha * L_c*`. Each step
/// takes one batch from each of the three sets; smaller sets cycle. An
/// epoch is `ceil(max set size / batch_size)` steps.
pub fn train_multitask<T: Scalar>(
    d: &Dataset,
    dstar: &[CalibrationRecord],
    daug: &[AugmentedRecord],
    cfg: &ToastConfig,
) -> Result<MultitaskTrained<T>> {
    cfg.validate()?;
    if d.is_empty() {
        return Err(Error::NoSamples);
    }
    if dstar.is_empty() {
        return Err(Error::Degenerate("calibration set is empty".into()));
    }
    let tc = &cfg.train;
    let mut params: ModelParameters<T> = tc.init_params(d.num_classes())?;
    for r in dstar {
        if r.predicted_label >= d.num_classes() {
            return Err(Error::InvalidClass {
                class: r.predicted_label,
                num_classes: d.num_classes(),
            });
        }
    }
    let main_x = featurize_samples::<T>(&tc.featurizer, d.samples());
    let calib_x: Vec<SparseVector<T>> = dstar
        .par_iter()
        .map(|r| params.features_of(&r.text_a, r.text_b.as_deref()))
        .collect();
    let clean_x: Vec<SparseVector<T>> = daug
        .par_iter()
        .map(|a| params.features_of(&a.text_a, a.text_b.as_deref()))
        .collect();
    let aug_x: Vec<SparseVector<T>> = daug
        .par_iter()
        .map(|a| params.features_of(&a.aug_text_a, a.aug_text_b.as_deref()))
        .collect();

    let weights = ObjectiveWeights {
        alpha: T::of(cfg.effective_alpha()),
        epsilon: T::of(tc.label_smoothing_epsilon),
    };
    let lr = T::of(tc.learning_rate);
    let stream = |s| seeded(derive_seed(tc.seed, s));
    let mut main_c = Cycler::new(d.len(), stream(MAIN_BATCH_STREAM));
    let mut calib_c = Cycler::new(dstar.len(), stream(CALIB_BATCH_STREAM));
    let mut aug_c = Cycler::new(daug.len(), stream(AUG_BATCH_STREAM));
    let largest = d.len().max(dstar.len()).max(daug.len());
    let steps = largest.div_ceil(tc.batch_size) * cfg.epochs;

    let mut trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        let batch = Batch {
            main: main_c
                .next_batch(tc.batch_size)
                .into_iter()
                .map(|i| MainExample {
                    x: &main_x[i],
                    label: d.samples()[i].label,
                })
                .collect(),
            calib: calib_c
                .next_batch(tc.batch_size)
                .into_iter()
                .map(|i| CalibExample {
                    x: &calib_x[i],
                    y_star: dstar[i].predicted_label,
                    correct: dstar[i].is_correct(),
                })
                .collect(),
            consistency: aug_c
                .next_batch(tc.batch_size)
                .into_iter()
                .map(|i| ConsistencyExample {
                    clean: &clean_x[i],
                    augmented: &aug_x[i],
                    y_star: daug[i].predicted_label,
                })
                .collect(),
        };
        let (loss, grads) = params.objective(&batch, weights)?;
        trace.push(loss);
        params.apply_gradients(&grads, lr);
    }
    Ok(MultitaskTrained { params, trace })
}

/// Stage metadata recorded for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToastMeta {
    pub k: usize,
    pub alpha: f64,
    pub effective_alpha: f64,
    pub seed: u64,
    pub train_seed: u64,
    pub annotator_seeds: Vec<u64>,
    pub ablations: Ablations,
    pub train_size: usize,
    pub annotated: usize,
    pub annotated_negatives: usize,
    pub dstar_size: usize,
    pub daug_size: usize,
    pub rounds: Vec<AnnotationRound>,
}

#[derive(Debug, Clone)]
pub struct ToastArtifacts<T> {
    pub annotation: CrossAnnotation,
    /// Calibration set after post-processing.
    pub dstar: Vec<CalibrationRecord>,
    pub daug: Vec<AugmentedRecord>,
    pub losses: Vec<LossTerms<T>>,
    pub meta: ToastMeta,
}

impl<T: Scalar> ToastArtifacts<T> {
    pub fn losses_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["step", "l_o", "l_c", "l_c_star", "l_a"])
            .expect("in-memory write");
        for (i, l) in self.losses.iter().enumerate() {
            w.write_record([
                i.to_string(),
                l.main.as_f64().to_string(),
                l.calib.as_f64().to_string(),
                l.consistency.as_f64().to_string(),
                l.total.as_f64().to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    /// Writes `dstar.jsonl`, `daug.jsonl`, `losses.csv` and `meta.json`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let jsonl = |rows: Vec<String>| rows.into_iter().map(|r| r + "\n").collect::<String>();
        let files = [
            (
                "dstar.jsonl",
                jsonl(
                    self.dstar
                        .iter()
                        .map(|r| serde_json::to_string(r).expect("record"))
                        .collect(),
                ),
            ),
            (
                "daug.jsonl",
                jsonl(
                    self.daug
                        .iter()
                        .map(|r| serde_json::to_string(r).expect("record"))
                        .collect(),
                ),
            ),
            ("losses.csv", self.losses_csv()),
            (
                "meta.json",
                serde_json::to_string_pretty(&self.meta).expect("meta") + "\n",
            ),
        ];
        for (name, body) in files {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ToastRun<T> {
    pub params: ModelParameters<T>,
    pub artifacts: ToastArtifacts<T>,
}

/// Runs the three stages, honouring the ablation flags.
pub fn run_toast<T: Scalar>(d: &Dataset, cfg: &ToastConfig, lexicon: &SynonymLexicon) -> Result<ToastRun<T>> {
    cfg.validate()?;
    let ab = cfg.ablations;
    let annotation = if ab.no_cross_annotation {
        split_annotate::<T>(d, cfg)?
    } else {
        cross_annotate::<T>(d, cfg)?
    };
    let dstar = if ab.no_downsample {
        annotation.records.clone()
    } else {
        downsample_balance(
            &annotation.records,
            &mut seeded(derive_seed(cfg.seed, DOWNSAMPLE_STREAM)),
        )?
    };
    let daug = if ab.no_augment {
        Vec::new()
    } else {
        build_augment_set(
            &dstar,
            lexicon,
            cfg.augment_per_negative,
            cfg.rate,
            &mut seeded(derive_seed(cfg.seed, AUGMENT_STREAM)),
        )
    };
    let trained = train_multitask::<T>(d, &dstar, &daug, cfg)?;
    let meta = ToastMeta {
        k: cfg.k,
        alpha: cfg.alpha,
        effective_alpha: cfg.effective_alpha(),
        seed: cfg.seed,
        train_seed: cfg.train.seed,
        annotator_seeds: (0..annotation.rounds.len())
            .map(|r| cfg.annotator_config(r).seed)
            .collect(),
        ablations: ab,
        train_size: d.len(),
        annotated: annotation.records.len(),
        annotated_negatives: annotation.negatives(),
        dstar_size: dstar.len(),
        daug_size: daug.len(),
        rounds: annotation.rounds.clone(),
    };
    Ok(ToastRun {
        params: trained.params,
        artifacts: ToastArtifacts {
            annotation,
            dstar,
            daug,
            losses: trained.trace,
            meta,
        },
    })
}

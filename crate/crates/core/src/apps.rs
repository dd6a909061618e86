//! Downstream evaluation protocols: selective classification, adversarial
//! sample detection, model cascading, and the pilot sweeps that vary the
//! calibration set.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::SynonymLexicon;
use crate::calibrators::{Calibrator, ConfidenceLog, Method};
use crate::corpus::{fold_assignment, CalibrationRecord, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{
    auroc, auroc_risk, cascade_curve, coverage_at_risk, delta_conf, detection_scores, risk_coverage, threshold_grid,
    CascadeCurve, DetectionScores, RiskCoveragePoint,
};
use crate::model::{train_main, CalibInputs, ModelParameters};
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;
use crate::toast::{run_toast, train_multitask, ToastConfig};

/// ID samples mixed with the adversarial set.
pub const DEFAULT_ID_SAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageAtTarget {
    pub target: f64,
    pub coverage: Option<f64>,
}

/// Accepted fraction and accepted-set accuracy at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub threshold: f64,
    pub coverage: f64,
    /// `None` when nothing is accepted.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectiveReport {
    pub samples: usize,
    pub accuracy: f64,
    pub auroc_risk: f64,
    pub coverage_at: Vec<CoverageAtTarget>,
    /// Over the `0.01` threshold grid.
    pub threshold_curve: Vec<ThresholdPoint>,
    pub risk_coverage: Vec<RiskCoveragePoint>,
}

/// Coverage and accuracy with acceptance rule `confidence >= t`.
pub fn threshold_curve<T: Scalar>(log: &ConfidenceLog<T>, thresholds: &[f64]) -> Vec<ThresholdPoint> {
    let n = log.len();
    thresholds
        .iter()
        .map(|&t| {
            let (mut accepted, mut hits) = (0usize, 0usize);
            for (c, &ok) in log.confidence.iter().zip(&log.correct) {
                if c.as_f64() >= t {
                    accepted += 1;
                    hits += usize::from(ok);
                }
            }
            ThresholdPoint {
                threshold: t,
                coverage: if n == 0 { 0.0 } else { accepted as f64 / n as f64 },
                accuracy: (accepted > 0).then(|| hits as f64 / accepted as f64),
            }
        })
        .collect()
}

pub fn selective_report<T: Scalar>(log: &ConfidenceLog<T>, targets: &[f64]) -> Result<SelectiveReport> {
    if log.is_empty() {
        return Err(Error::NoSamples);
    }
    Ok(SelectiveReport {
        samples: log.len(),
        accuracy: log.accuracy(),
        auroc_risk: auroc_risk(log)?,
        coverage_at: targets
            .iter()
            .map(|&target| CoverageAtTarget {
                target,
                coverage: coverage_at_risk(log, target),
            })
            .collect(),
        threshold_curve: threshold_curve(log, &threshold_grid()),
        risk_coverage: risk_coverage(log),
    })
}

pub fn selective_eval<T: Scalar>(c: &Calibrator<T>, d: &Dataset, targets: &[f64]) -> Result<SelectiveReport> {
    selective_report(&c.build_log(d, "id")?, targets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialReport {
    pub id_samples: usize,
    pub adversarial_samples: usize,
    /// ID scores ranked above adversarial ones.
    pub auroc: f64,
    pub delta_conf: f64,
    pub best_macro_f1: f64,
    pub best_threshold: f64,
    pub detection: Vec<DetectionScores>,
}

pub fn adversarial_report<T: Scalar>(id: &[T], adv: &[T]) -> Result<AdversarialReport> {
    if adv.is_empty() {
        return Err(Error::Undefined("adversarial set is empty"));
    }
    let detection: Vec<DetectionScores> = threshold_grid()
        .into_iter()
        .map(|t| detection_scores(id, adv, t))
        .collect();
    // first threshold wins ties
    let best = detection
        .iter()
        .fold(detection[0], |b, s| if s.macro_f1 > b.macro_f1 { *s } else { b });
    Ok(AdversarialReport {
        id_samples: id.len(),
        adversarial_samples: adv.len(),
        auroc: auroc(id, adv)?,
        delta_conf: delta_conf(id, adv)?,
        best_macro_f1: best.macro_f1,
        best_threshold: best.threshold,
        detection,
    })
}

/// Mixes `min(id_limit, |id|)` seeded ID samples with every adversarial
/// sample and scores how well confidence separates them.
pub fn adversarial_eval<T: Scalar>(
    c: &Calibrator<T>,
    id_samples: &Dataset,
    adv_samples: &Dataset,
    id_limit: usize,
    seed: u64,
) -> Result<AdversarialReport> {
    if adv_samples.is_empty() {
        return Err(Error::Undefined("adversarial set is empty"));
    }
    let id = if id_samples.len() > id_limit {
        let mut idx = index::sample(&mut seeded(seed), id_samples.len(), id_limit).into_vec();
        idx.sort_unstable();
        id_samples.subset(&idx)
    } else {
        id_samples.clone()
    };
    let id_log = c.build_log(&id, "id")?;
    let adv_log = c.build_log(adv_samples, "adversarial")?;
    adversarial_report(&id_log.confidence, &adv_log.confidence)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeReport {
    pub small_accuracy: f64,
    pub large_accuracy: f64,
    pub curve: CascadeCurve,
}

/// Small model answers unless its confidence falls below the threshold.
pub fn cascade_eval<T: Scalar>(
    small: &Calibrator<T>,
    large: &ModelParameters<T>,
    d: &Dataset,
) -> Result<CascadeReport> {
    if d.is_empty() {
        return Err(Error::NoSamples);
    }
    let scored = d
        .samples()
        .par_iter()
        .map(|s| small.score(s).map(|(p, c)| (p, c, large.predict(s).label)))
        .collect::<Result<Vec<_>>>()?;
    let small_pred: Vec<usize> = scored.iter().map(|r| r.0).collect();
    let small_conf: Vec<T> = scored.iter().map(|r| r.1).collect();
    let large_pred: Vec<usize> = scored.iter().map(|r| r.2).collect();
    let labels: Vec<usize> = d.samples().iter().map(|s| s.label).collect();
    let acc = |p: &[usize]| p.iter().zip(&labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64;
    Ok(CascadeReport {
        small_accuracy: acc(&small_pred),
        large_accuracy: acc(&large_pred),
        curve: cascade_curve(&small_pred, &small_conf, &large_pred, &labels, &threshold_grid())?,
    })
}

// ---------------------------------------------------------------------------
// Pilot sweeps

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Size,
    Imbalance,
    Features,
    K,
}

impl SweepKind {
    pub const ALL: [SweepKind; 4] = [SweepKind::Size, SweepKind::Imbalance, SweepKind::Features, SweepKind::K];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::Size => "size",
            SweepKind::Imbalance => "imbalance",
            SweepKind::Features => "features",
            SweepKind::K => "k",
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown sweep kind `{s}` (size, imbalance, features, k)")))
    }
}

/// Grid of the pilot sweeps. The training set is split in half: one half
/// trains the annotator and the main task, the other is annotated and
/// sub-sampled into calibration sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PilotConfig {
    /// Balanced calibration-set sizes.
    pub sizes: Vec<usize>,
    /// Negative fractions at a fixed calibration-set size.
    pub ratios: Vec<f64>,
    pub imbalance_size: usize,
    /// Fixed-one-class mode: one class keeps `fixed_count` records while
    /// the other takes each of `fixed_others`.
    pub fixed_count: usize,
    pub fixed_others: Vec<usize>,
    pub ks: Vec<usize>,
    /// Independent draws (calibration sample and training seed) averaged
    /// per grid point.
    pub repeats: usize,
    /// Seed of the pool split and calibration-set sub-sampling.
    pub seed: u64,
    pub toast: ToastConfig,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            sizes: vec![50, 100, 200, 400, 800],
            ratios: (1..=9).map(|i| f64::from(i) / 10.0).collect(),
            imbalance_size: 400,
            fixed_count: 100,
            fixed_others: vec![25, 50, 100, 200, 400],
            ks: vec![2, 3, 4, 5],
            repeats: 3,
            seed: 0,
            toast: ToastConfig::default(),
        }
    }
}

impl PilotConfig {
    pub fn validate(&self) -> Result<()> {
        self.toast.validate()?;
        if self.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::InvalidConfig("ratios must lie in [0,1]".into()));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be >= 1".into()));
        }
        if self.ks.iter().any(|&k| k < 2) {
            return Err(Error::InvalidConfig("every K must be >= 2".into()));
        }
        Ok(())
    }
}

/// One configuration of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SweepPoint {
    Counts { positives: usize, negatives: usize },
    Features(FeatureVariant),
    K(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureVariant {
    All,
    WithoutPrediction,
    WithoutSample,
}

impl FeatureVariant {
    pub const ALL: [FeatureVariant; 3] = [
        FeatureVariant::All,
        FeatureVariant::WithoutPrediction,
        FeatureVariant::WithoutSample,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureVariant::All => "all",
            FeatureVariant::WithoutPrediction => "without_prediction",
            FeatureVariant::WithoutSample => "without_sample",
        }
    }

    pub fn inputs(self) -> CalibInputs {
        CalibInputs {
            sample: self != FeatureVariant::WithoutSample,
            prediction: self != FeatureVariant::WithoutPrediction,
        }
    }
}

/// A grid point with its stable key.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub kind: SweepKind,
    pub key: String,
    pub point: SweepPoint,
}

fn counts(kind: SweepKind, key: String, positives: usize, negatives: usize) -> GridPoint {
    GridPoint {
        kind,
        key,
        point: SweepPoint::Counts { positives, negatives },
    }
}

/// Grid points of one sweep, in report order.
pub fn sweep_grid(cfg: &PilotConfig, kind: SweepKind) -> Vec<GridPoint> {
    match kind {
        SweepKind::Size => {
            let mut sizes = cfg.sizes.clone();
            sizes.sort_unstable();
            sizes.dedup();
            sizes
                .into_iter()
                .map(|n| counts(kind, format!("size={n}"), n - n / 2, n / 2))
                .collect()
        }
        SweepKind::Imbalance => {
            let n = cfg.imbalance_size;
            let mut out: Vec<GridPoint> = cfg
                .ratios
                .iter()
                .map(|&r| {
                    let neg = (r * n as f64).round() as usize;
                    counts(kind, format!("ratio={r}"), n - neg, neg)
                })
                .collect();
            let m = cfg.fixed_count;
            for &o in &cfg.fixed_others {
                out.push(counts(kind, format!("fixed_positive={m};negatives={o}"), m, o));
            }
            for &o in &cfg.fixed_others {
                out.push(counts(kind, format!("fixed_negative={m};positives={o}"), o, m));
            }
            out
        }
        SweepKind::Features => FeatureVariant::ALL
            .into_iter()
            .map(|v| GridPoint {
                kind,
                key: format!("features={}", v.as_str()),
                point: SweepPoint::Features(v),
            })
            .collect(),
        SweepKind::K => cfg
            .ks
            .iter()
            .map(|&k| GridPoint {
                kind,
                key: format!("k={k}"),
                point: SweepPoint::K(k),
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep: SweepKind,
    pub point: String,
    pub calib_size: usize,
    pub positives: usize,
    pub negatives: usize,
    pub auroc: Option<f64>,
    pub delta_conf: Option<f64>,
    pub accuracy: Option<f64>,
    /// Empty for completed points.
    pub skipped: String,
}

impl SweepRow {
    fn skipped(g: &GridPoint, positives: usize, negatives: usize, reason: String) -> Self {
        Self {
            sweep: g.kind,
            point: g.key.clone(),
            calib_size: positives + negatives,
            positives,
            negatives,
            auroc: None,
            delta_conf: None,
            accuracy: None,
            skipped: reason,
        }
    }

    pub fn is_skipped(&self) -> bool {
        !self.skipped.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: SweepKind,
    pub rows: Vec<SweepRow>,
    pub notes: Vec<String>,
}

const WITHOUT_SAMPLE_NOTE: &str = "feature ablation zeroes a block of the calibration-head input: \
without_sample zeroes the hidden representation, without_prediction zeroes the predicted-label one-hot";

const POOL_STREAM: u64 = 30;
const POINT_STREAM: u64 = 1000;
const REPEAT_STREAM: u64 = 50;

/// Shared state of a pilot run: the main-task half, the annotated pool and
/// the evaluation set.
pub struct PilotContext<'a> {
    cfg: &'a PilotConfig,
    train: &'a Dataset,
    test: &'a Dataset,
    main: Dataset,
    pool: Vec<CalibrationRecord>,
}

impl<'a> PilotContext<'a> {
    /// Splits `train` into halves and annotates the pool half with a
    /// main-task model trained on the other.
    pub fn prepare<T: Scalar>(train: &'a Dataset, test: &'a Dataset, cfg: &'a PilotConfig) -> Result<Self> {
        cfg.validate()?;
        let halves = fold_assignment(train, 2, derive_seed(cfg.seed, POOL_STREAM))?;
        let main = train.subset(&halves[0]);
        let annotator = train_main::<T>(&main, &cfg.toast.annotator_config(0))?.params;
        let pool = halves[1]
            .par_iter()
            .map(|&i| {
                let s = &train.samples()[i];
                let pred = annotator.predict(s).label;
                CalibrationRecord {
                    sample_id: s.id.clone(),
                    text_a: s.text_a.clone(),
                    text_b: s.text_b.clone(),
                    predicted_label: pred,
                    correctness: u8::from(pred == s.label),
                }
            })
            .collect();
        Ok(Self {
            cfg,
            train,
            test,
            main,
            pool,
        })
    }

    /// Annotated pool (positives, negatives).
    pub fn pool_counts(&self) -> (usize, usize) {
        let pos = self.pool.iter().filter(|r| r.is_correct()).count();
        (pos, self.pool.len() - pos)
    }

    pub fn pool(&self) -> &[CalibrationRecord] {
        &self.pool
    }

    fn sample_pool(&self, positives: usize, negatives: usize, seed: u64) -> Option<Vec<CalibrationRecord>> {
        let (pos, neg): (Vec<usize>, Vec<usize>) = (0..self.pool.len()).partition(|&i| self.pool[i].is_correct());
        if positives > pos.len() || negatives > neg.len() {
            return None;
        }
        let mut rng = seeded(seed);
        let mut keep: Vec<usize> = index::sample(&mut rng, pos.len(), positives)
            .into_iter()
            .map(|j| pos[j])
            .chain(
                index::sample(&mut rng, neg.len(), negatives)
                    .into_iter()
                    .map(|j| neg[j]),
            )
            .collect();
        keep.sort_unstable();
        Some(keep.into_iter().map(|i| self.pool[i].clone()).collect())
    }

    /// (auroc, delta_conf, accuracy) of the calibration head on the test
    /// set, or `None` when the test log has one correctness class.
    fn evaluate<T: Scalar>(&self, params: ModelParameters<T>) -> Result<Option<[f64; 3]>> {
        let log = Calibrator::new(Method::Toast, params).build_log(self.test, "id")?;
        let (pos, neg) = log.split_by_correctness();
        if pos.is_empty() || neg.is_empty() {
            return Ok(None);
        }
        Ok(Some([auroc(&pos, &neg)?, delta_conf(&pos, &neg)?, log.accuracy()]))
    }

    /// Averages repeated draws into a row.
    fn row(g: &GridPoint, p: usize, n: usize, draws: Vec<Option<[f64; 3]>>) -> SweepRow {
        let Some(draws) = draws.into_iter().collect::<Option<Vec<_>>>() else {
            return SweepRow::skipped(g, p, n, "evaluation set has a single correctness class".into());
        };
        let mean = |j: usize| draws.iter().map(|d| d[j]).sum::<f64>() / draws.len() as f64;
        SweepRow {
            sweep: g.kind,
            point: g.key.clone(),
            calib_size: p + n,
            positives: p,
            negatives: n,
            auroc: Some(mean(0)),
            delta_conf: Some(mean(1)),
            accuracy: Some(mean(2)),
            skipped: String::new(),
        }
    }

    fn repeat_config(&self, rep: usize) -> ToastConfig {
        let mut tc = self.cfg.toast.clone();
        if rep > 0 {
            tc.train.seed = derive_seed(tc.train.seed, REPEAT_STREAM + rep as u64);
        }
        tc
    }

    fn counts_row<T: Scalar>(
        &self,
        g: &GridPoint,
        p: usize,
        n: usize,
        inputs: CalibInputs,
        seed: u64,
    ) -> Result<SweepRow> {
        if p + n == 0 {
            return Ok(SweepRow::skipped(g, p, n, "empty calibration set".into()));
        }
        let mut draws = Vec::with_capacity(self.cfg.repeats);
        for rep in 0..self.cfg.repeats {
            let Some(dstar) = self.sample_pool(p, n, derive_seed(seed, rep as u64)) else {
                let (hp, hn) = self.pool_counts();
                return Ok(SweepRow::skipped(
                    g,
                    p,
                    n,
                    format!("needs {p} positives and {n} negatives, pool has {hp} and {hn}"),
                ));
            };
            let mut tc = self.repeat_config(rep);
            tc.train.calib_inputs = inputs;
            let trained = train_multitask::<T>(&self.main, &dstar, &[], &tc)?;
            draws.push(self.evaluate(trained.params)?);
        }
        Ok(Self::row(g, p, n, draws))
    }

    /// Runs one grid point; `index` (its grid position) seeds its
    /// calibration-set samples.
    pub fn run_point<T: Scalar>(&self, g: &GridPoint, index: usize, lexicon: &SynonymLexicon) -> Result<SweepRow> {
        let kind = SweepKind::ALL.iter().position(|k| *k == g.kind).unwrap_or(0) as u64;
        let seed = derive_seed(self.cfg.seed, POINT_STREAM + 100 * kind + index as u64);
        match &g.point {
            SweepPoint::Counts { positives, negatives } => {
                self.counts_row::<T>(g, *positives, *negatives, CalibInputs::default(), seed)
            }
            SweepPoint::Features(v) => {
                let (hp, hn) = self.pool_counts();
                let m = hp.min(hn);
                // all variants share one calibration sample
                let shared = derive_seed(self.cfg.seed, POINT_STREAM + 100 * kind);
                self.counts_row::<T>(g, m, m, v.inputs(), shared)
            }
            SweepPoint::K(k) => {
                if *k > self.train.len() {
                    return Ok(SweepRow::skipped(
                        g,
                        0,
                        0,
                        format!("K={k} exceeds {} samples", self.train.len()),
                    ));
                }
                let mut draws = Vec::with_capacity(self.cfg.repeats);
                let (mut p, mut n) = (0, 0);
                for rep in 0..self.cfg.repeats {
                    let cfg = ToastConfig {
                        k: *k,
                        ..self.repeat_config(rep)
                    };
                    let run = match run_toast::<T>(self.train, &cfg, lexicon) {
                        Ok(r) => r,
                        Err(Error::Degenerate(reason)) => return Ok(SweepRow::skipped(g, 0, 0, reason)),
                        Err(e) => return Err(e),
                    };
                    p = run.artifacts.dstar.iter().filter(|r| r.is_correct()).count();
                    n = run.artifacts.dstar.len() - p;
                    draws.push(self.evaluate(run.params)?);
                }
                Ok(Self::row(g, p, n, draws))
            }
        }
    }

    /// Runs the points of `grid` accepted by `todo` in parallel, calling
    /// `on_row` as each finishes; rows come back in grid order.
    pub fn run_grid<T: Scalar>(
        &self,
        grid: &[GridPoint],
        lexicon: &SynonymLexicon,
        todo: impl Fn(&GridPoint) -> bool + Sync,
        on_row: impl Fn(&SweepRow) -> Result<()> + Sync,
    ) -> Result<Vec<SweepRow>> {
        let rows: Vec<Option<SweepRow>> = grid
            .par_iter()
            .enumerate()
            .map(|(i, g)| {
                if !todo(g) {
                    return Ok(None);
                }
                let row = self.run_point::<T>(g, i, lexicon)?;
                on_row(&row)?;
                Ok(Some(row))
            })
            .collect::<Result<_>>()?;
        Ok(rows.into_iter().flatten().collect())
    }
}

/// Runs a whole sweep.
pub fn pilot_sweeps<T: Scalar>(
    train: &Dataset,
    test: &Dataset,
    cfg: &PilotConfig,
    kind: SweepKind,
    lexicon: &SynonymLexicon,
) -> Result<SweepReport> {
    let ctx = PilotContext::prepare::<T>(train, test, cfg)?;
    let grid = sweep_grid(cfg, kind);
    let rows = ctx.run_grid::<T>(&grid, lexicon, |_| true, |_| Ok(()))?;
    Ok(SweepReport {
        kind,
        rows,
        notes: sweep_notes(kind),
    })
}

pub fn sweep_notes(kind: SweepKind) -> Vec<String> {
    match kind {
        SweepKind::Features => vec![WITHOUT_SAMPLE_NOTE.to_string()],
        _ => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(rows: &[(f64, bool)]) -> ConfidenceLog<f64> {
        let mut l = ConfidenceLog::default();
        for &(c, ok) in rows {
            l.push(c, ok, 0, "id");
        }
        l
    }

    #[test]
    fn oracle_confidence_has_zero_risk() {
        let l = log(&[(1.0, true), (0.0, false), (1.0, true), (0.0, false), (1.0, true)]);
        let r = selective_report(&l, &[0.9, 1.0]).unwrap();
        assert_eq!(r.auroc_risk, 0.0);
        // accepting only the confident rows reaches any target at 60%
        assert_eq!(r.coverage_at[0].coverage, Some(0.6));
        assert_eq!(r.coverage_at[1].coverage, Some(0.6));
    }

    #[test]
    fn constant_confidence_is_all_or_nothing() {
        let l = log(&[(0.7, true), (0.7, true), (0.7, false), (0.7, true)]);
        let r = selective_report(&l, &[0.7, 0.75, 0.8]).unwrap();
        assert_eq!(r.coverage_at[0].coverage, Some(1.0));
        assert_eq!(r.coverage_at[1].coverage, Some(1.0));
        assert_eq!(r.coverage_at[2].coverage, None);
    }

    #[test]
    fn threshold_curve_accepts_at_equality() {
        let l = log(&[(0.5, true), (0.4, false)]);
        let c = threshold_curve(&l, &[0.0, 0.5, 0.6]);
        assert_eq!(c[0].coverage, 1.0);
        assert_eq!(c[1].coverage, 0.5);
        assert_eq!(c[1].accuracy, Some(1.0));
        assert_eq!(c[2].accuracy, None);
    }

    #[test]
    fn adversarial_below_id_minimum() {
        let r = adversarial_report(&[0.8, 0.9, 0.7], &[0.1, 0.2]).unwrap();
        assert_eq!(r.auroc, 1.0);
        assert_eq!(r.best_macro_f1, 1.0);
        assert_eq!(r.detection.len(), 101);
    }

    #[test]
    fn adversarial_copy_is_chance() {
        let id = [0.3, 0.9, 0.5, 0.7];
        let r = adversarial_report(&id, &id).unwrap();
        assert_eq!(r.auroc, 0.5);
        assert_eq!(r.delta_conf, 0.0);
    }

    #[test]
    fn empty_adversarial_set_is_an_error() {
        assert!(adversarial_report::<f64>(&[0.5], &[]).is_err());
    }

    #[test]
    fn grids() {
        let cfg = PilotConfig::default();
        let k = sweep_grid(&cfg, SweepKind::K);
        assert_eq!(k.len(), 4);
        let size = sweep_grid(
            &PilotConfig {
                sizes: vec![400, 50, 100],
                ..cfg.clone()
            },
            SweepKind::Size,
        );
        let keys: Vec<&str> = size.iter().map(|g| g.key.as_str()).collect();
        assert_eq!(keys, ["size=50", "size=100", "size=400"]);
        let imb = sweep_grid(&cfg, SweepKind::Imbalance);
        assert_eq!(imb.len(), 9 + 2 * cfg.fixed_others.len());
        assert_eq!(
            imb[4].point,
            SweepPoint::Counts {
                positives: 200,
                negatives: 200
            }
        );
        assert_eq!(sweep_grid(&cfg, SweepKind::Features).len(), 3);
    }

    #[test]
    fn sweep_kind_round_trips() {
        for k in SweepKind::ALL {
            assert_eq!(k.as_str().parse::<SweepKind>().unwrap(), k);
        }
        assert!("bogus".parse::<SweepKind>().is_err());
    }

    #[test]
    fn feature_variants_zero_blocks() {
        assert_eq!(FeatureVariant::All.inputs(), CalibInputs::default());
        assert!(!FeatureVariant::WithoutSample.inputs().sample);
        assert!(!FeatureVariant::WithoutPrediction.inputs().prediction);
    }
}

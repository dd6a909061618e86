//! Uniform confidence scoring over the four compared methods.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::model::{softmax, ModelParameters};
use crate::scalar::{safe_ln, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Vanilla,
    Temperature,
    LabelSmoothing,
    Toast,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Vanilla,
        Method::Temperature,
        Method::LabelSmoothing,
        Method::Toast,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::Temperature => "temperature",
            Method::LabelSmoothing => "label_smoothing",
            Method::Toast => "toast",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown calibration method `{s}`")))
    }
}

/// A model bound to a confidence-scoring method.
#[derive(Debug, Clone)]
pub struct Calibrator<T> {
    pub method: Method,
    pub params: ModelParameters<T>,
    /// Fitted temperature, required by [`Method::Temperature`].
    pub temperature: Option<T>,
}

impl<T: Scalar> Calibrator<T> {
    pub fn new(method: Method, params: ModelParameters<T>) -> Self {
        Self {
            method,
            params,
            temperature: None,
        }
    }

    /// Temperature scaling fitted on `holdout`.
    pub fn fit_temperature_on(params: ModelParameters<T>, holdout: &Dataset) -> Result<Self> {
        let logits: Vec<Vec<T>> = holdout.samples().par_iter().map(|s| params.predict(s).logits).collect();
        let labels: Vec<usize> = holdout.samples().iter().map(|s| s.label).collect();
        let t = fit_temperature(&logits, &labels)?;
        Ok(Self {
            method: Method::Temperature,
            params,
            temperature: Some(t),
        })
    }

    /// Predicted label (always from the main head) and its confidence.
    pub fn score(&self, s: &Sample) -> Result<(usize, T)> {
        let pred = self.params.predict(s);
        let conf = match self.method {
            Method::Vanilla | Method::LabelSmoothing => pred.max_prob,
            Method::Temperature => {
                let t = self.temperature.ok_or(Error::UnfittedTemperature)?;
                scaled_max_prob(&pred.logits, t)
            }
            Method::Toast => {
                let f = self.params.features(s);
                self.params.forward_calib(&f, pred.label)?[1]
            }
        };
        Ok((pred.label, conf))
    }

    /// Scores every sample of `d` against its gold label.
    pub fn build_log(&self, d: &Dataset, group: &str) -> Result<ConfidenceLog<T>> {
        let scored = d
            .samples()
            .par_iter()
            .map(|s| self.score(s).map(|(p, c)| (p, c, p == s.label)))
            .collect::<Result<Vec<_>>>()?;
        let mut log = ConfidenceLog::with_capacity(scored.len());
        for (pred, conf, ok) in scored {
            log.push(conf, ok, pred, group);
        }
        Ok(log)
    }
}

/// `max softmax(logits / t)`, computed from the scaled logit gaps so binary
/// confidences stay a strictly monotone function of the margin.
pub fn scaled_max_prob<T: Scalar>(logits: &[T], t: T) -> T {
    let scaled: Vec<T> = logits.iter().map(|&z| z / t).collect();
    softmax(&scaled).into_iter().fold(T::zero(), T::max)
}

fn mean_nll<T: Scalar>(logits: &[Vec<T>], labels: &[usize], t: f64) -> f64 {
    let t = T::of(t);
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(z, &y)| {
            let scaled: Vec<T> = z.iter().map(|&v| v / t).collect();
            (-safe_ln(softmax(&scaled)[y])).as_f64()
        })
        .sum();
    total / labels.len() as f64
}

const GRID_POINTS: usize = 200;
const T_MIN: f64 = 0.01;
const T_MAX: f64 = 100.0;

/// Temperature minimizing the mean NLL of `softmax(logits / T)`: a
/// 200-point log-spaced grid on [0.01, 100] followed by golden-section
/// refinement (in log T) around the best grid point.
pub fn fit_temperature<T: Scalar>(logits: &[Vec<T>], labels: &[usize]) -> Result<T> {
    if logits.len() != labels.len() {
        return Err(Error::Misaligned(format!(
            "{} logit rows vs {} labels",
            logits.len(),
            labels.len()
        )));
    }
    if labels.len() < 2 {
        return Err(Error::Degenerate("temperature fitting needs at least 2 records".into()));
    }
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Degenerate(
            "temperature fitting needs at least 2 distinct labels".into(),
        ));
    }
    for (z, &y) in logits.iter().zip(labels) {
        if y >= z.len() {
            return Err(Error::InvalidClass {
                class: y,
                num_classes: z.len(),
            });
        }
    }
    let (lo, hi) = (T_MIN.ln(), T_MAX.ln());
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS).map(|i| lo + step * i as f64).collect();
    let nll: Vec<f64> = grid.par_iter().map(|&g| mean_nll(logits, labels, g.exp())).collect();
    let best = nll
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty grid");

    let f = |g: f64| mean_nll(logits, labels, g.exp());
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(GRID_POINTS - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let refined = (a + b) / 2.0;
    let chosen = if f(refined) <= nll[best] { refined } else { grid[best] };
    Ok(T::of(chosen.exp()))
}

/// Parallel per-sample confidence records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfidenceLog<T> {
    pub confidence: Vec<T>,
    pub correct: Vec<bool>,
    pub predicted: Vec<usize>,
    pub group: Vec<String>,
}

impl<T: Scalar> ConfidenceLog<T> {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            confidence: Vec::with_capacity(n),
            correct: Vec::with_capacity(n),
            predicted: Vec::with_capacity(n),
            group: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, confidence: T, correct: bool, predicted: usize, group: &str) {
        self.confidence.push(confidence);
        self.correct.push(correct);
        self.predicted.push(predicted);
        self.group.push(group.to_string());
    }

    pub fn len(&self) -> usize {
        self.confidence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.confidence.is_empty()
    }

    pub fn accuracy(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.correct.iter().filter(|&&c| c).count() as f64 / self.len() as f64
    }

    /// Confidences of correct rows, then of wrong rows.
    pub fn split_by_correctness(&self) -> (Vec<T>, Vec<T>) {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (&c, &ok) in self.confidence.iter().zip(&self.correct) {
            if ok {
                pos.push(c);
            } else {
                neg.push(c);
            }
        }
        (pos, neg)
    }

    /// Rows concatenated from `self` then `other`.
    pub fn concat(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.confidence.extend_from_slice(&other.confidence);
        out.correct.extend_from_slice(&other.correct);
        out.predicted.extend_from_slice(&other.predicted);
        out.group.extend(other.group.iter().cloned());
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["confidence", "correct", "pred", "group"])
            .expect("in-memory write");
        for i in 0..self.len() {
            w.write_record([
                self.confidence[i].as_f64().to_string(),
                u8::from(self.correct[i]).to_string(),
                self.predicted[i].to_string(),
                self.group[i].clone(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut log = Self::default();
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
            let field = |k: usize| {
                rec.get(k).ok_or_else(|| Error::Parse {
                    line,
                    msg: format!("missing column {k}"),
                })
            };
            let bad = |m: &str| Error::Parse {
                line,
                msg: m.to_string(),
            };
            let conf: f64 = field(0)?.parse().map_err(|_| bad("bad confidence"))?;
            let correct = match field(1)? {
                "1" => true,
                "0" => false,
                _ => return Err(bad("correct must be 0 or 1")),
            };
            let pred: usize = field(2)?.parse().map_err(|_| bad("bad pred"))?;
            log.push(T::of(conf), correct, pred, field(3)?);
        }
        Ok(log)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

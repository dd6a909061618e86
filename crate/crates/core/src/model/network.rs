//! Shared linear encoder with a main head over task classes and a binary
//! calibration head that also sees the one-hot of the predicted class.
//!
//! Inputs are L2-normalized count vectors. For an input `x`:
//!
//! ```text
//! h      = E^T x                      (hidden_dim)
//! main   = softmax(W^T h + b)         (classes)
//! u      = [h * sample_on, onehot(y*) * prediction_on]
//! calib  = softmax(V^T u + c)         (P_false, P_true)
//! ```

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{featurize, FeaturizerConfig, SparseVector};
use super::loss::{ce_logit_grad, kl_logit_grads, loss_ce, loss_kl, softmax};
use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which blocks of the calibration-head input are live. Switching one off
/// zeroes that block, used for feature ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibInputs {
    pub sample: bool,
    pub prediction: bool,
}

impl Default for CalibInputs {
    fn default() -> Self {
        Self {
            sample: true,
            prediction: true,
        }
    }
}

/// Named parameter tensors, all stored row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tensor {
    /// `hash_dim x hidden`
    Encoder,
    /// `hidden x classes`
    MainWeight,
    MainBias,
    /// `(hidden + classes) x 2`
    CalibWeight,
    CalibBias,
}

impl Tensor {
    pub const ALL: [Tensor; 5] = [
        Tensor::Encoder,
        Tensor::MainWeight,
        Tensor::MainBias,
        Tensor::CalibWeight,
        Tensor::CalibBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tensor::Encoder => "encoder",
            Tensor::MainWeight => "main_weight",
            Tensor::MainBias => "main_bias",
            Tensor::CalibWeight => "calib_weight",
            Tensor::CalibBias => "calib_bias",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters<T> {
    pub featurizer: FeaturizerConfig,
    pub hidden: usize,
    pub classes: usize,
    pub calib_inputs: CalibInputs,
    /// Seed the parameters were initialized from, if any.
    pub seed: Option<u64>,
    pub encoder: Vec<T>,
    pub main_weight: Vec<T>,
    pub main_bias: Vec<T>,
    pub calib_weight: Vec<T>,
    pub calib_bias: Vec<T>,
}

/// Main-head output.
#[derive(Debug, Clone, PartialEq)]
pub struct MainOutput<T> {
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

impl<T: Scalar> ModelParameters<T> {
    /// All-zero parameters: the main head is uniform and the calibration
    /// head outputs (0.5, 0.5).
    pub fn zeros(featurizer: FeaturizerConfig, hidden: usize, classes: usize) -> Result<Self> {
        featurizer.validate()?;
        if hidden == 0 || classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "need hidden >= 1 and classes >= 2, got {hidden} and {classes}"
            )));
        }
        Ok(Self {
            encoder: vec![T::zero(); featurizer.hash_dim * hidden],
            main_weight: vec![T::zero(); hidden * classes],
            main_bias: vec![T::zero(); classes],
            calib_weight: vec![T::zero(); (hidden + classes) * 2],
            calib_bias: vec![T::zero(); 2],
            featurizer,
            hidden,
            classes,
            calib_inputs: CalibInputs::default(),
            seed: None,
        })
    }

    /// Encoder uniform in [-scale, scale], heads zero.
    pub fn init(
        featurizer: FeaturizerConfig,
        hidden: usize,
        classes: usize,
        scale: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut p = Self::zeros(featurizer, hidden, classes)?;
        for w in &mut p.encoder {
            *w = T::of(rng.gen_range(-scale..=scale));
        }
        Ok(p)
    }

    pub fn tensor(&self, t: Tensor) -> &[T] {
        match t {
            Tensor::Encoder => &self.encoder,
            Tensor::MainWeight => &self.main_weight,
            Tensor::MainBias => &self.main_bias,
            Tensor::CalibWeight => &self.calib_weight,
            Tensor::CalibBias => &self.calib_bias,
        }
    }

    pub fn tensor_mut(&mut self, t: Tensor) -> &mut [T] {
        match t {
            Tensor::Encoder => &mut self.encoder,
            Tensor::MainWeight => &mut self.main_weight,
            Tensor::MainBias => &mut self.main_bias,
            Tensor::CalibWeight => &mut self.calib_weight,
            Tensor::CalibBias => &mut self.calib_bias,
        }
    }

    pub fn is_finite(&self) -> bool {
        Tensor::ALL
            .iter()
            .all(|&t| self.tensor(t).iter().all(|v| v.is_finite()))
    }

    /// Raw count features of a sample under this model's featurizer.
    pub fn features(&self, s: &Sample) -> SparseVector<T> {
        featurize(&s.text_a, s.text_b.as_deref(), &self.featurizer)
    }

    pub fn features_of(&self, text_a: &str, text_b: Option<&str>) -> SparseVector<T> {
        featurize(text_a, text_b, &self.featurizer)
    }

    fn check_input(&self, f: &SparseVector<T>) -> Result<()> {
        if f.dim != self.featurizer.hash_dim {
            return Err(Error::DimensionMismatch {
                expected: self.featurizer.hash_dim,
                got: f.dim,
            });
        }
        Ok(())
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.classes {
            return Err(Error::InvalidClass {
                class,
                num_classes: self.classes,
            });
        }
        Ok(())
    }

    /// Encoder output for an already-normalized input.
    fn hidden_of(&self, x: &SparseVector<T>) -> Vec<T> {
        let hd = self.hidden;
        let mut h = vec![T::zero(); hd];
        for (k, v) in x.iter() {
            let row = &self.encoder[k * hd..(k + 1) * hd];
            for (hj, &w) in h.iter_mut().zip(row) {
                *hj += v * w;
            }
        }
        h
    }

    fn main_logits(&self, h: &[T]) -> Vec<T> {
        let c = self.classes;
        let mut z = self.main_bias.clone();
        for (j, &hj) in h.iter().enumerate() {
            let row = &self.main_weight[j * c..(j + 1) * c];
            for (zc, &w) in z.iter_mut().zip(row) {
                *zc += hj * w;
            }
        }
        z
    }

    fn calib_input(&self, h: &[T], y_star: usize) -> Vec<T> {
        let mut u = Vec::with_capacity(self.hidden + self.classes);
        if self.calib_inputs.sample {
            u.extend_from_slice(h);
        } else {
            u.extend(std::iter::repeat_n(T::zero(), self.hidden));
        }
        let on = if self.calib_inputs.prediction {
            T::one()
        } else {
            T::zero()
        };
        u.extend((0..self.classes).map(|c| if c == y_star { on } else { T::zero() }));
        u
    }

    fn calib_logits(&self, u: &[T]) -> Vec<T> {
        let mut z = self.calib_bias.clone();
        for (i, &ui) in u.iter().enumerate() {
            if ui.is_zero() {
                continue;
            }
            z[0] += ui * self.calib_weight[2 * i];
            z[1] += ui * self.calib_weight[2 * i + 1];
        }
        z
    }

    /// Main-task logits and class probabilities.
    pub fn forward_main(&self, f: &SparseVector<T>) -> Result<MainOutput<T>> {
        self.check_input(f)?;
        let h = self.hidden_of(&f.normalized());
        let logits = self.main_logits(&h);
        let probs = softmax(&logits);
        Ok(MainOutput { logits, probs })
    }

    /// Calibration head output `[P_false, P_true]` for input `f` paired with
    /// the predicted class `y_star`.
    pub fn forward_calib(&self, f: &SparseVector<T>, y_star: usize) -> Result<[T; 2]> {
        self.check_input(f)?;
        self.check_class(y_star)?;
        let h = self.hidden_of(&f.normalized());
        let z = self.calib_logits(&self.calib_input(&h, y_star));
        let p = softmax(&z);
        Ok([p[0], p[1]])
    }
}

/// Prediction of the main head. Ties go to the lowest class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub label: usize,
    pub max_prob: T,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> ModelParameters<T> {
    pub fn predict(&self, s: &Sample) -> Prediction<T> {
        self.predict_features(&self.features(s))
            .expect("features built by this model match its dimensions")
    }

    pub fn predict_features(&self, f: &SparseVector<T>) -> Result<Prediction<T>> {
        let out = self.forward_main(f)?;
        let label = argmax(&out.probs);
        Ok(Prediction {
            label,
            max_prob: out.probs[label],
            logits: out.logits,
            probs: out.probs,
        })
    }
}

/// Sparse-in-encoder gradient with the same layout as [`ModelParameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub hidden: usize,
    pub encoder_rows: HashMap<usize, Vec<T>>,
    pub main_weight: Vec<T>,
    pub main_bias: Vec<T>,
    pub calib_weight: Vec<T>,
    pub calib_bias: Vec<T>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(p: &ModelParameters<T>) -> Self {
        Self {
            hidden: p.hidden,
            encoder_rows: HashMap::new(),
            main_weight: vec![T::zero(); p.main_weight.len()],
            main_bias: vec![T::zero(); p.main_bias.len()],
            calib_weight: vec![T::zero(); p.calib_weight.len()],
            calib_bias: vec![T::zero(); p.calib_bias.len()],
        }
    }

    /// Gradient entry at flat `index` of tensor `t`.
    pub fn get(&self, t: Tensor, index: usize) -> T {
        match t {
            Tensor::Encoder => self
                .encoder_rows
                .get(&(index / self.hidden))
                .map_or(T::zero(), |r| r[index % self.hidden]),
            Tensor::MainWeight => self.main_weight[index],
            Tensor::MainBias => self.main_bias[index],
            Tensor::CalibWeight => self.calib_weight[index],
            Tensor::CalibBias => self.calib_bias[index],
        }
    }

    /// Flat encoder indices with a stored (possibly zero) gradient, sorted.
    pub fn encoder_indices(&self) -> Vec<usize> {
        let mut rows: Vec<usize> = self.encoder_rows.keys().copied().collect();
        rows.sort_unstable();
        rows.into_iter()
            .flat_map(|r| r * self.hidden..(r + 1) * self.hidden)
            .collect()
    }
}

/// One main-task example.
#[derive(Debug, Clone)]
pub struct MainExample<'a, T> {
    pub x: &'a SparseVector<T>,
    pub label: usize,
}

/// One calibration-task example: input, predicted class, correctness.
#[derive(Debug, Clone)]
pub struct CalibExample<'a, T> {
    pub x: &'a SparseVector<T>,
    pub y_star: usize,
    pub correct: bool,
}

/// One consistency pair: clean input, transformed input, predicted class.
#[derive(Debug, Clone)]
pub struct ConsistencyExample<'a, T> {
    pub clean: &'a SparseVector<T>,
    pub augmented: &'a SparseVector<T>,
    pub y_star: usize,
}

/// A mini-batch for the combined objective; any part may be empty.
#[derive(Debug, Clone)]
pub struct Batch<'a, T> {
    pub main: Vec<MainExample<'a, T>>,
    pub calib: Vec<CalibExample<'a, T>>,
    pub consistency: Vec<ConsistencyExample<'a, T>>,
}

impl<T> Default for Batch<'_, T> {
    fn default() -> Self {
        Self {
            main: Vec::new(),
            calib: Vec::new(),
            consistency: Vec::new(),
        }
    }
}

/// Per-term batch-mean losses and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms<T> {
    pub main: T,
    pub calib: T,
    pub consistency: T,
    pub total: T,
}

/// Weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveWeights<T> {
    pub alpha: T,
    /// Label smoothing applied to the main-task target only.
    pub epsilon: T,
}

struct Cache<T> {
    x: SparseVector<T>,
    h: Vec<T>,
}

impl<T: Scalar> ModelParameters<T> {
    fn cache(&self, f: &SparseVector<T>) -> Cache<T> {
        let x = f.normalized();
        let h = self.hidden_of(&x);
        Cache { x, h }
    }

    fn backprop_hidden(&self, cache: &Cache<T>, dh: &[T], g: &mut Gradients<T>) {
        let hd = self.hidden;
        for (k, v) in cache.x.iter() {
            let row = g.encoder_rows.entry(k).or_insert_with(|| vec![T::zero(); hd]);
            for (r, &d) in row.iter_mut().zip(dh) {
                *r += v * d;
            }
        }
    }

    /// Backprop a calibration-logit gradient `gz` (already scaled).
    fn backprop_calib(&self, cache: &Cache<T>, u: &[T], gz: &[T], g: &mut Gradients<T>) {
        for (i, &ui) in u.iter().enumerate() {
            g.calib_weight[2 * i] += ui * gz[0];
            g.calib_weight[2 * i + 1] += ui * gz[1];
        }
        g.calib_bias[0] += gz[0];
        g.calib_bias[1] += gz[1];
        if self.calib_inputs.sample {
            let dh: Vec<T> = (0..self.hidden)
                .map(|j| self.calib_weight[2 * j] * gz[0] + self.calib_weight[2 * j + 1] * gz[1])
                .collect();
            self.backprop_hidden(cache, &dh, g);
        }
    }

    /// Batch-mean losses `L_o`, `L_c`, `L_c*` and `L_A = L_o + L_c + alpha
    /// L_c*`, with the analytic gradient of `L_A`.
    pub fn objective(&self, batch: &Batch<'_, T>, w: ObjectiveWeights<T>) -> Result<(LossTerms<T>, Gradients<T>)> {
        let mut g = Gradients::zeros_like(self);
        let c = self.classes;

        let mut main = T::zero();
        if !batch.main.is_empty() {
            let scale = T::one() / T::of_usize(batch.main.len());
            for ex in &batch.main {
                self.check_input(ex.x)?;
                self.check_class(ex.label)?;
                let cache = self.cache(ex.x);
                let probs = softmax(&self.main_logits(&cache.h));
                main += loss_ce(&probs, ex.label, w.epsilon)? * scale;
                let gz: Vec<T> = ce_logit_grad(&probs, ex.label, w.epsilon)
                    .into_iter()
                    .map(|v| v * scale)
                    .collect();
                for (j, &hj) in cache.h.iter().enumerate() {
                    for (k, &gk) in gz.iter().enumerate() {
                        g.main_weight[j * c + k] += hj * gk;
                    }
                }
                for (b, &gk) in g.main_bias.iter_mut().zip(&gz) {
                    *b += gk;
                }
                let dh: Vec<T> = (0..self.hidden)
                    .map(|j| {
                        self.main_weight[j * c..(j + 1) * c]
                            .iter()
                            .zip(&gz)
                            .map(|(&wv, &gk)| wv * gk)
                            .sum()
                    })
                    .collect();
                self.backprop_hidden(&cache, &dh, &mut g);
            }
        }

        let mut calib = T::zero();
        if !batch.calib.is_empty() {
            let scale = T::one() / T::of_usize(batch.calib.len());
            for ex in &batch.calib {
                self.check_input(ex.x)?;
                self.check_class(ex.y_star)?;
                let cache = self.cache(ex.x);
                let u = self.calib_input(&cache.h, ex.y_star);
                let probs = softmax(&self.calib_logits(&u));
                let target = usize::from(ex.correct);
                calib += loss_ce(&probs, target, T::zero())? * scale;
                let gz: Vec<T> = ce_logit_grad(&probs, target, T::zero())
                    .into_iter()
                    .map(|v| v * scale)
                    .collect();
                self.backprop_calib(&cache, &u, &gz, &mut g);
            }
        }

        let mut consistency = T::zero();
        if !batch.consistency.is_empty() && !w.alpha.is_zero() {
            let scale = w.alpha / T::of_usize(batch.consistency.len());
            let mean = T::one() / T::of_usize(batch.consistency.len());
            for ex in &batch.consistency {
                self.check_input(ex.clean)?;
                self.check_input(ex.augmented)?;
                self.check_class(ex.y_star)?;
                let cp = self.cache(ex.clean);
                let cq = self.cache(ex.augmented);
                let up = self.calib_input(&cp.h, ex.y_star);
                let uq = self.calib_input(&cq.h, ex.y_star);
                let p = softmax(&self.calib_logits(&up));
                let q = softmax(&self.calib_logits(&uq));
                consistency += loss_kl(&p, &q)? * mean;
                let (gp, gq) = kl_logit_grads(&p, &q);
                let gp: Vec<T> = gp.into_iter().map(|v| v * scale).collect();
                let gq: Vec<T> = gq.into_iter().map(|v| v * scale).collect();
                self.backprop_calib(&cp, &up, &gp, &mut g);
                self.backprop_calib(&cq, &uq, &gq, &mut g);
            }
        } else if !batch.consistency.is_empty() {
            // alpha = 0: report the term, contribute no gradient
            let mean = T::one() / T::of_usize(batch.consistency.len());
            for ex in &batch.consistency {
                let p = self.forward_calib(ex.clean, ex.y_star)?;
                let q = self.forward_calib(ex.augmented, ex.y_star)?;
                consistency += loss_kl(&p, &q)? * mean;
            }
        }

        let total = main + calib + w.alpha * consistency;
        Ok((
            LossTerms {
                main,
                calib,
                consistency,
                total,
            },
            g,
        ))
    }

    /// `params -= lr * grad`.
    pub fn apply_gradients(&mut self, g: &Gradients<T>, lr: T) {
        let hd = self.hidden;
        for (&row, grad) in &g.encoder_rows {
            for (w, &d) in self.encoder[row * hd..(row + 1) * hd].iter_mut().zip(grad) {
                *w -= lr * d;
            }
        }
        for (dst, src) in [
            (&mut self.main_weight, &g.main_weight),
            (&mut self.main_bias, &g.main_bias),
            (&mut self.calib_weight, &g.calib_weight),
            (&mut self.calib_bias, &g.calib_bias),
        ] {
            for (w, &d) in dst.iter_mut().zip(src) {
                *w -= lr * d;
            }
        }
    }
}

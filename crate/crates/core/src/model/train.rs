//! Mini-batch SGD for the main task.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{FeaturizerConfig, SparseVector};
use super::network::{Batch, CalibInputs, MainExample, ModelParameters, ObjectiveWeights};
use crate::corpus::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::scalar::Scalar;

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub label_smoothing_epsilon: f64,
    pub hidden_dim: usize,
    /// Encoder entries start uniform in [-init_scale, init_scale].
    pub init_scale: f64,
    pub featurizer: FeaturizerConfig,
    /// Live blocks of the calibration-head input.
    pub calib_inputs: CalibInputs,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 5,
            batch_size: 32,
            seed: 0,
            label_smoothing_epsilon: 0.0,
            hidden_dim: 64,
            init_scale: 0.1,
            featurizer: FeaturizerConfig::default(),
            calib_inputs: CalibInputs::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad(format!("init_scale must be >= 0, got {}", self.init_scale));
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.label_smoothing_epsilon) {
            return bad(format!(
                "label_smoothing_epsilon must lie in [0,1), got {}",
                self.label_smoothing_epsilon
            ));
        }
        self.featurizer.validate()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Freshly initialized parameters for `classes` outputs.
    pub fn init_params<T: Scalar>(&self, classes: usize) -> Result<ModelParameters<T>> {
        self.validate()?;
        let mut rng = seeded(derive_seed(self.seed, INIT_STREAM));
        let mut p = ModelParameters::init(
            self.featurizer.clone(),
            self.hidden_dim,
            classes,
            self.init_scale,
            &mut rng,
        )?;
        p.seed = Some(self.seed);
        p.calib_inputs = self.calib_inputs;
        Ok(p)
    }

    pub(crate) fn shuffle_rng(&self) -> crate::rng::Rng {
        seeded(derive_seed(self.seed, SHUFFLE_STREAM))
    }
}

/// Parameters plus the per-batch training-loss trace.
#[derive(Debug, Clone)]
pub struct Trained<T> {
    pub params: ModelParameters<T>,
    pub loss_trace: Vec<T>,
}

pub fn featurize_samples<T: Scalar>(featurizer: &FeaturizerConfig, samples: &[Sample]) -> Vec<SparseVector<T>> {
    samples
        .par_iter()
        .map(|s| super::features::featurize(&s.text_a, s.text_b.as_deref(), featurizer))
        .collect()
}

/// Trains a fresh model on the main task only, minimizing batch-mean
/// (optionally label-smoothed) cross-entropy.
pub fn train_main<T: Scalar>(d: &Dataset, cfg: &TrainConfig) -> Result<Trained<T>> {
    if d.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut params: ModelParameters<T> = cfg.init_params(d.num_classes())?;
    let xs = featurize_samples::<T>(&cfg.featurizer, d.samples());
    let weights = ObjectiveWeights {
        alpha: T::zero(),
        epsilon: T::of(cfg.label_smoothing_epsilon),
    };
    let lr = T::of(cfg.learning_rate);
    let mut rng = cfg.shuffle_rng();
    let mut order: Vec<usize> = (0..d.len()).collect();
    let mut trace = Vec::new();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = Batch {
                main: chunk
                    .iter()
                    .map(|&i| MainExample {
                        x: &xs[i],
                        label: d.samples()[i].label,
                    })
                    .collect(),
                ..Batch::default()
            };
            let (loss, grads) = params.objective(&batch, weights)?;
            trace.push(loss.total);
            params.apply_gradients(&grads, lr);
        }
    }
    Ok(Trained {
        params,
        loss_trace: trace,
    })
}

/// Fraction of samples whose predicted label matches the gold label.
pub fn accuracy<T: Scalar>(p: &ModelParameters<T>, d: &Dataset) -> f64 {
    if d.is_empty() {
        return 0.0;
    }
    let hits = d.samples().par_iter().filter(|s| p.predict(s).label == s.label).count();
    hits as f64 / d.len() as f64
}

#![allow(dead_code)]

use rand::Rng;
use selfcal::corpus::{Dataset, Sample, SynthConfig, TaskKind};
use selfcal::model::{
    Batch, CalibExample, ConsistencyExample, FeaturizerConfig, MainExample, ModelParameters, ObjectiveWeights,
    SparseVector, Tensor, TrainConfig,
};
use selfcal::rng::seeded;

/// O(n·m) pairwise AUROC, ties count one half.
pub fn brute_auroc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut s = 0.0;
    for &p in pos {
        for &n in neg {
            s += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    s / (pos.len() * neg.len()) as f64
}

pub fn small_featurizer() -> FeaturizerConfig {
    FeaturizerConfig {
        hash_dim: 1 << 14,
        ..FeaturizerConfig::default()
    }
}

pub fn fast_train(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        featurizer: small_featurizer(),
        ..TrainConfig::default()
    }
}

pub fn synth(seed: u64, per_class: usize, test_per_class: usize) -> SynthConfig {
    SynthConfig {
        seed,
        samples_per_class: per_class,
        test_samples_per_class: test_per_class,
        ..SynthConfig::default()
    }
}

/// Two classes separated by a single token.
pub fn separable(n: usize) -> Dataset {
    let samples = (0..n)
        .map(|i| {
            let label = i % 2;
            let word = if label == 0 { "alpha" } else { "omega" };
            Sample::new(format!("s{i}"), format!("{word} filler w{} w{}", i % 7, i % 5), label)
        })
        .collect();
    Dataset::new(samples, vec!["a".into(), "b".into()], TaskKind::SingleText).unwrap()
}

/// A small model with every tensor randomized, for finite differences.
pub struct GradInstance {
    pub params: ModelParameters<f64>,
    pub main: Vec<(SparseVector<f64>, usize)>,
    pub calib: Vec<(SparseVector<f64>, usize, bool)>,
    pub pairs: Vec<(SparseVector<f64>, SparseVector<f64>, usize)>,
    pub weights: ObjectiveWeights<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Main,
    Calib,
    Consistency,
    All,
}

fn random_text(rng: &mut impl Rng) -> String {
    let len = rng.gen_range(1..=6);
    (0..len)
        .map(|_| format!("t{}", rng.gen_range(0..10)))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn grad_instance(seed: u64) -> GradInstance {
    let mut rng = seeded(seed);
    let featurizer = FeaturizerConfig {
        hash_dim: 64,
        ..FeaturizerConfig::default()
    };
    let classes = 3;
    let mut params = ModelParameters::<f64>::init(featurizer, 4, classes, 0.5, &mut rng).unwrap();
    for t in Tensor::ALL {
        for w in params.tensor_mut(t) {
            *w = rng.gen_range(-1.0..1.0);
        }
    }
    let feat = |rng: &mut _| params.features_of(&random_text(rng), None);
    let main = (0..4).map(|_| (feat(&mut rng), rng.gen_range(0..classes))).collect();
    let calib = (0..4)
        .map(|_| (feat(&mut rng), rng.gen_range(0..classes), rng.gen_bool(0.5)))
        .collect();
    let pairs = (0..4)
        .map(|_| (feat(&mut rng), feat(&mut rng), rng.gen_range(0..classes)))
        .collect();
    let weights = ObjectiveWeights {
        alpha: rng.gen_range(0.1..1.0),
        epsilon: rng.gen_range(0.0..0.3),
    };
    GradInstance {
        params,
        main,
        calib,
        pairs,
        weights,
    }
}

impl GradInstance {
    pub fn batch(&self, term: Term) -> Batch<'_, f64> {
        let mut b = Batch::default();
        if matches!(term, Term::Main | Term::All) {
            b.main = self
                .main
                .iter()
                .map(|(x, label)| MainExample { x, label: *label })
                .collect();
        }
        if matches!(term, Term::Calib | Term::All) {
            b.calib = self
                .calib
                .iter()
                .map(|(x, y_star, correct)| CalibExample {
                    x,
                    y_star: *y_star,
                    correct: *correct,
                })
                .collect();
        }
        if matches!(term, Term::Consistency | Term::All) {
            b.consistency = self
                .pairs
                .iter()
                .map(|(clean, augmented, y_star)| ConsistencyExample {
                    clean,
                    augmented,
                    y_star: *y_star,
                })
                .collect();
        }
        b
    }

    fn loss(&self, p: &ModelParameters<f64>, term: Term) -> f64 {
        let (terms, _) = p.objective(&self.batch(term), self.weights).unwrap();
        terms.total
    }

    /// Largest relative error between analytic and central-difference
    /// gradients over every dense entry and every touched encoder entry.
    /// The denominator is floored at `floor` so near-zero entries are
    /// compared absolutely.
    pub fn max_rel_error(&self, term: Term, step: f64, floor: f64) -> f64 {
        let (_, g) = self.params.objective(&self.batch(term), self.weights).unwrap();
        let mut worst: f64 = 0.0;
        let mut check = |t: Tensor, i: usize| {
            let mut plus = self.params.clone();
            plus.tensor_mut(t)[i] += step;
            let mut minus = self.params.clone();
            minus.tensor_mut(t)[i] -= step;
            let numeric = (self.loss(&plus, term) - self.loss(&minus, term)) / (2.0 * step);
            let analytic = g.get(t, i);
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
            worst = worst.max(err);
        };
        for t in [
            Tensor::MainWeight,
            Tensor::MainBias,
            Tensor::CalibWeight,
            Tensor::CalibBias,
        ] {
            for i in 0..self.params.tensor(t).len() {
                check(t, i);
            }
        }
        let mut enc = g.encoder_indices();
        // untouched rows must have zero gradient both ways
        enc.extend([0, 5, 63 * self.params.hidden]);
        for i in enc {
            check(Tensor::Encoder, i);
        }
        worst
    }
}

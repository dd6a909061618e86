//! Hashed bag-of-n-grams featurizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturizerConfig {
    pub lowercase: bool,
    pub ngram_max: usize,
    pub hash_dim: usize,
    /// Hash second-segment tokens in their own namespace.
    pub segment_tagging: bool,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            ngram_max: 2,
            hash_dim: 1 << 18,
            segment_tagging: true,
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.hash_dim.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "hash_dim must be a power of two, got {}",
                self.hash_dim
            )));
        }
        if self.ngram_max == 0 {
            return Err(Error::InvalidConfig("ngram_max must be >= 1".into()));
        }
        Ok(())
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector<T> {
    pub dim: usize,
    pub indices: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Scalar> SparseVector<T> {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn get(&self, index: usize) -> T {
        match self.indices.binary_search(&index) {
            Ok(k) => self.values[k],
            Err(_) => T::zero(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn norm(&self) -> T {
        self.values.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// Copy scaled to unit L2 norm (zero vectors stay zero).
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        let values = if n > T::zero() {
            self.values.iter().map(|&v| v / n).collect()
        } else {
            self.values.clone()
        };
        Self {
            dim: self.dim,
            indices: self.indices.clone(),
            values,
        }
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(parts: &[&str], namespace: u8) -> u64 {
    let mut h = FNV_OFFSET;
    let mut eat = |b: u8| {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    };
    eat(namespace);
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            eat(0x1f);
        }
        p.bytes().for_each(&mut eat);
    }
    h
}

fn push_segment(text: &str, namespace: u8, cfg: &FeaturizerConfig, out: &mut Vec<usize>) {
    let lowered;
    let text = if cfg.lowercase {
        lowered = text.to_lowercase();
        lowered.as_str()
    } else {
        text
    };
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mask = (cfg.hash_dim - 1) as u64;
    for n in 1..=cfg.ngram_max {
        for gram in tokens.windows(n) {
            // n-gram order is folded into the namespace byte
            out.push((fnv1a(gram, namespace.wrapping_add(n as u8)) & mask) as usize);
        }
    }
}

/// Count vector of hashed 1..=`ngram_max`-grams. N-grams never span the two
/// segments; with `segment_tagging` the second segment is hashed in its own
/// namespace.
pub fn featurize<T: Scalar>(text_a: &str, text_b: Option<&str>, cfg: &FeaturizerConfig) -> SparseVector<T> {
    let mut buckets = Vec::new();
    push_segment(text_a, 0, cfg, &mut buckets);
    if let Some(b) = text_b {
        let ns = if cfg.segment_tagging { 0x80 } else { 0 };
        push_segment(b, ns, cfg, &mut buckets);
    }
    buckets.sort_unstable();
    let mut indices = Vec::new();
    let mut values: Vec<T> = Vec::new();
    for b in buckets {
        if indices.last() == Some(&b) {
            *values.last_mut().expect("parallel to indices") += T::one();
        } else {
            indices.push(b);
            values.push(T::one());
        }
    }
    SparseVector {
        dim: cfg.hash_dim,
        indices,
        values,
    }
}

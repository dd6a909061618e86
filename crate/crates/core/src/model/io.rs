//! Parameter files: one JSON header line followed by the tensors as
//! little-endian `f64`, in header order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::FeaturizerConfig;
use super::network::{CalibInputs, ModelParameters, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const FORMAT: &str = "selfcal-params";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dtype: String,
    hidden: usize,
    classes: usize,
    featurizer: FeaturizerConfig,
    calib_inputs: CalibInputs,
    seed: Option<u64>,
    tensors: Vec<TensorEntry>,
}

impl<T: Scalar> ModelParameters<T> {
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = Header {
            format: FORMAT.into(),
            version: VERSION,
            dtype: "f64".into(),
            hidden: self.hidden,
            classes: self.classes,
            featurizer: self.featurizer.clone(),
            calib_inputs: self.calib_inputs,
            seed: self.seed,
            tensors: Tensor::ALL
                .iter()
                .map(|&t| TensorEntry {
                    name: t.name().into(),
                    len: self.tensor(t).len(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for t in Tensor::ALL {
            let mut buf = Vec::with_capacity(self.tensor(t).len() * 8);
            for v in self.tensor(t) {
                buf.extend_from_slice(&v.as_f64().to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        r.read_line(&mut line)
            .map_err(|e| Error::Format(format!("reading parameter header: {e}")))?;
        let header: Header =
            serde_json::from_str(line.trim_end()).map_err(|e| Error::Format(format!("bad parameter header: {e}")))?;
        if header.format != FORMAT || header.version != VERSION || header.dtype != "f64" {
            return Err(Error::Format(format!(
                "unsupported parameter file {} v{} ({})",
                header.format, header.version, header.dtype
            )));
        }
        let mut p = Self::zeros(header.featurizer, header.hidden, header.classes)?;
        p.calib_inputs = header.calib_inputs;
        p.seed = header.seed;
        if header.tensors.len() != Tensor::ALL.len() {
            return Err(Error::Format("parameter file lists wrong tensors".into()));
        }
        for (entry, t) in header.tensors.iter().zip(Tensor::ALL) {
            let dst = p.tensor_mut(t);
            if entry.name != t.name() || entry.len != dst.len() {
                return Err(Error::DimensionMismatch {
                    expected: dst.len(),
                    got: entry.len,
                });
            }
            let mut bytes = vec![0u8; entry.len * 8];
            r.read_exact(&mut bytes)
                .map_err(|e| Error::Format(format!("truncated tensor {}: {e}", entry.name)))?;
            for (v, chunk) in dst.iter_mut().zip(bytes.chunks_exact(8)) {
                let raw = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
                *v = T::of(raw);
            }
        }
        if !p.is_finite() {
            return Err(Error::Format("parameter file contains non-finite values".into()));
        }
        Ok(p)
    }

    /// Writes to `path`, creating missing parent directories.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn round_trip_is_lossless() {
        let cfg = FeaturizerConfig {
            hash_dim: 1 << 6,
            ..FeaturizerConfig::default()
        };
        let mut p = ModelParameters::<f64>::init(cfg, 3, 2, 0.1, &mut seeded(5)).unwrap();
        p.main_bias = vec![0.125, -3.5];
        p.calib_inputs.prediction = false;
        p.seed = Some(5);
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        let q = ModelParameters::<f64>::read_from(buf.as_slice()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let cfg = FeaturizerConfig {
            hash_dim: 1 << 4,
            ..FeaturizerConfig::default()
        };
        let p = ModelParameters::<f64>::zeros(cfg, 2, 2).unwrap();
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(ModelParameters::<f64>::read_from(buf.as_slice()).is_err());
    }
}

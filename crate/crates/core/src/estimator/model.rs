//! Trained estimator and its binary file format.
//!
//! ```text
//! offset  size  field
//! 0       8     magic "SPRFMODL"
//! 8       4     format version, u32 LE
//! 12      4     header length H, u32 LE
//! 16      H     JSON header {"format_version", "arch", "meta"}
//! 16+H    8     weight count N, u64 LE
//! 24+H    8N    weights, f64 LE
//! 24+H+8N 32    SHA-256 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::{self, Arch, Layout};
use crate::error::{Error, Result};
use crate::pred::SupportEstimator;

pub const MAGIC: &[u8; 8] = b"SPRFMODL";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    /// Training SNR in dB; `None` for noiseless training.
    pub snr_db: Option<f64>,
    pub k1: usize,
    pub k2: usize,
    pub prior: String,
    pub seed: u64,
    pub epochs: usize,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    arch: Arch,
    meta: ModelMeta,
}

#[derive(Debug, Clone)]
pub struct EstimatorModel {
    pub arch: Arch,
    pub meta: ModelMeta,
    layout: Layout,
    weights: Vec<f64>,
}

impl EstimatorModel {
    pub fn new(arch: Arch, meta: ModelMeta, weights: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        let layout = Layout::new(arch);
        if weights.len() != layout.len() {
            return Err(Error::Dimension(format!(
                "{} weights for an architecture with {} parameters",
                weights.len(),
                layout.len()
            )));
        }
        Ok(EstimatorModel {
            arch,
            meta,
            layout,
            weights,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    /// Probability vectors for several measurement vectors at once.
    pub fn forward_many(&self, ys: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let m = self.arch.m;
        if let Some(bad) = ys.iter().find(|y| y.len() != m) {
            return Err(Error::Dimension(format!("input has length {}, expected m = {m}", bad.len())));
        }
        let mut x = Array2::zeros((ys.len(), m));
        for (mut row, y) in x.rows_mut().into_iter().zip(ys) {
            row.assign(&ndarray::ArrayView1::from(&network::normalize_input(y)));
        }
        let p = network::forward_batch(&self.layout, &self.weights, &x.view());
        Ok(p.rows().into_iter().map(|r| r.to_vec()).collect())
    }

    pub fn forward(&self, y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_many(&[y])?.pop().expect("one row"))
    }

    fn header_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Header {
            format_version: FORMAT_VERSION,
            arch: self.arch,
            meta: self.meta.clone(),
        })?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = self.header_json()?;
        let mut out = Vec::with_capacity(16 + header.len() + 8 + 8 * self.weights.len() + DIGEST_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&(self.weights.len() as u64).to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, body) = split_checked(bytes)?;
        let h: Header = serde_json::from_str(header).map_err(|e| Error::ModelFormat(format!("bad header: {e}")))?;
        if h.format_version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "header says version {}, expected {FORMAT_VERSION}",
                h.format_version
            )));
        }
        let count = u64::from_le_bytes(body[..8].try_into().expect("8 bytes")) as usize;
        let raw = &body[8..];
        if raw.len() != count * 8 {
            return Err(Error::ModelFormat(format!(
                "weight block holds {} bytes, header announces {count} weights",
                raw.len()
            )));
        }
        let weights = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        EstimatorModel::new(h.arch, h.meta, weights).map_err(|e| Error::ModelFormat(e.to_string()))
    }
}

impl SupportEstimator for EstimatorModel {
    fn output_dim(&self) -> usize {
        self.arch.output_dim()
    }

    fn estimate(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.forward(y)
    }
}

/// Validate magic, version, lengths and checksum; return the header text and
/// the bytes between header and checksum.
fn split_checked(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let min = MAGIC.len() + 8;
    if bytes.len() < min + 8 + DIGEST_LEN {
        return Err(Error::ModelFormat("file is truncated".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::ModelFormat("not a model file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let header_len = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let body_start = min + header_len;
    if bytes.len() < body_start + 8 + DIGEST_LEN {
        return Err(Error::ModelFormat("file is truncated".into()));
    }
    let count = u64::from_le_bytes(bytes[body_start..body_start + 8].try_into().expect("8 bytes")) as usize;
    let expected = body_start
        .checked_add(8)
        .and_then(|v| count.checked_mul(8).and_then(|w| v.checked_add(w)))
        .and_then(|v| v.checked_add(DIGEST_LEN));
    match expected {
        Some(len) if len == bytes.len() => {}
        Some(len) if len > bytes.len() => return Err(Error::ModelFormat("file is truncated".into())),
        _ => return Err(Error::ModelFormat("trailing bytes after checksum".into())),
    }
    let (payload, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(payload).as_slice() != digest {
        return Err(Error::ModelFormat("checksum mismatch".into()));
    }
    let header = std::str::from_utf8(&bytes[min..body_start]).map_err(|_| Error::ModelFormat("header is not UTF-8".into()))?;
    Ok((header, &payload[body_start..]))
}

pub fn save_model(model: &EstimatorModel, path: &Path) -> Result<()> {
    let bytes = model.to_bytes()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<EstimatorModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EstimatorModel::from_bytes(&bytes)
}

/// The JSON header of a model file, verbatim, after integrity checks.
pub fn inspect_model(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (header, _) = split_checked(&bytes)?;
    Ok(header.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn small_model(seed: u64) -> EstimatorModel {
        let arch = Arch {
            n: 12,
            m: 13,
            hidden_size: 8,
            num_layers: 2,
            unfold_steps: 3,
        };
        let weights = Layout::new(arch).init(&mut stream(seed));
        let meta = ModelMeta {
            snr_db: Some(30.0),
            k1: 2,
            k2: 3,
            prior: "uniform".into(),
            seed,
            epochs: 0,
            final_loss: None,
        };
        EstimatorModel::new(arch, meta, weights).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = small_model(3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.meta, model.meta);
        let mut rng = stream(4);
        for _ in 0..100 {
            let y: Vec<f64> = (0..13).map(|_| rng.random_range(0.0..5.0)).collect();
            let a = model.forward(&y).unwrap();
            let b = back.forward(&y).unwrap();
            assert!(a.iter().zip(&b).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn forward_is_deterministic_and_on_simplex() {
        let model = small_model(5);
        let y: Vec<f64> = (0..13).map(|i| (i as f64).sin().abs()).collect();
        let a = model.forward(&y).unwrap();
        assert_eq!(a, model.forward(&y).unwrap());
        assert!(a.iter().all(|&v| v >= 0.0));
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(model.forward(&[1.0; 5]).is_err());
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let bytes = small_model(6).to_bytes().unwrap();

        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 1;
        assert!(matches!(EstimatorModel::from_bytes(&flipped), Err(Error::ModelFormat(m)) if m.contains("checksum")));

        let mut digest = bytes.clone();
        let last = digest.len() - 1;
        digest[last] ^= 0xff;
        assert!(matches!(EstimatorModel::from_bytes(&digest), Err(Error::ModelFormat(_))));

        let truncated = &bytes[..bytes.len() - 40];
        assert!(matches!(EstimatorModel::from_bytes(truncated), Err(Error::ModelFormat(m)) if m.contains("truncated")));
        assert!(EstimatorModel::from_bytes(&bytes[..10]).is_err());

        let mut version = bytes.clone();
        version[8] = 9;
        assert!(matches!(EstimatorModel::from_bytes(&version), Err(Error::ModelFormat(m)) if m.contains("version")));
    }

    #[test]
    fn header_records_schema() {
        let model = small_model(7);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_model(&model, &path).unwrap();
        let header: serde_json::Value = serde_json::from_str(&inspect_model(&path).unwrap()).unwrap();
        assert_eq!(header["arch"]["n"], 12);
        assert_eq!(header["arch"]["m"], 13);
        assert_eq!(header["arch"]["hidden_size"], 8);
        assert_eq!(header["arch"]["num_layers"], 2);
        assert_eq!(header["arch"]["unfold_steps"], 3);
        assert_eq!(header["meta"]["snr_db"], 30.0);
        assert_eq!(header["meta"]["seed"], 7);
        assert_eq!(header["format_version"], 1);
    }
}

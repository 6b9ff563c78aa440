//! On-disk interchange format for embeddings and feature vectors.
//!
//! An interchange directory holds two files:
//!
//! ```text
//! <dir>/manifest.json   version, kind, rows, cols, dtype, encoder_tag, spans, source
//! <dir>/data.bin        rows*cols little-endian IEEE-754 binary32, row-major
//! ```
//!
//! `kind` is `"embedding"` (token embeddings; `spans` is required) or
//! `"features"` (one vector per row; `spans` is absent). Values are stored
//! as `f32`, so writing rounds each `f64` to the nearest `f32`; reading a
//! file and writing it back reproduces it bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_finite, EmbeddingMatrix, PromptLayout, TokenSpan};

pub const FORMAT_VERSION: u32 = 1;
pub const DTYPE_F32LE: &str = "f32le";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATA_FILE: &str = "data.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    Embedding,
    Features,
}

/// Span table as written to `manifest.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanTable {
    pub sot: TokenSpan,
    pub identity: TokenSpan,
    pub frames: Vec<TokenSpan>,
    pub eot: TokenSpan,
}

impl From<&PromptLayout> for SpanTable {
    fn from(layout: &PromptLayout) -> Self {
        Self {
            sot: layout.sot(),
            identity: layout.identity(),
            frames: layout.frames().to_vec(),
            eot: layout.eot(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub kind: PayloadKind,
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    pub encoder_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spans: Option<SpanTable>,
    /// Free-form provenance (model id, tokenizer, pooling recipe, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub source: BTreeMap<String, String>,
}

impl Manifest {
    fn check_header(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported manifest version {} (expected {FORMAT_VERSION})",
                self.version
            )));
        }
        if self.dtype != DTYPE_F32LE {
            return Err(Error::Format(format!(
                "unsupported dtype {:?} (expected {DTYPE_F32LE:?})",
                self.dtype
            )));
        }
        Ok(())
    }

    fn layout(&self) -> Result<PromptLayout> {
        let spans = self
            .spans
            .as_ref()
            .ok_or_else(|| Error::Format("embedding manifest has no span table".into()))?;
        PromptLayout::new(
            self.rows,
            spans.sot,
            spans.identity,
            spans.frames.clone(),
            spans.eot,
        )
    }
}

/// A stack of feature vectors (one per row) tagged with their source.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub data: Array2<f64>,
    pub tag: String,
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
}

/// Writes an embedding matrix, rounding values to `f32`.
pub fn write_interchange(embedding: &EmbeddingMatrix, dir: &Path) -> Result<()> {
    write_interchange_with_source(embedding, dir, BTreeMap::new())
}

pub fn write_interchange_with_source(
    embedding: &EmbeddingMatrix,
    dir: &Path,
    source: BTreeMap<String, String>,
) -> Result<()> {
    let data = embedding.data();
    let manifest = Manifest {
        version: FORMAT_VERSION,
        kind: PayloadKind::Embedding,
        rows: data.nrows(),
        cols: data.ncols(),
        dtype: DTYPE_F32LE.into(),
        encoder_tag: embedding.encoder_tag().into(),
        spans: Some(SpanTable::from(embedding.layout())),
        source,
    };
    write_dir(dir, &manifest, data.view())
}

pub fn read_interchange(dir: &Path) -> Result<EmbeddingMatrix> {
    let manifest = read_manifest(dir)?;
    manifest.check_header()?;
    if manifest.kind != PayloadKind::Embedding {
        return Err(Error::Format(format!(
            "{}: expected an embedding payload, found {:?}",
            dir.display(),
            manifest.kind
        )));
    }
    let layout = manifest.layout()?;
    let data = read_blob(dir, &manifest)?;
    EmbeddingMatrix::new(data, layout, manifest.encoder_tag)
}

pub fn write_features(features: &FeatureMatrix, dir: &Path) -> Result<()> {
    let manifest = Manifest {
        version: FORMAT_VERSION,
        kind: PayloadKind::Features,
        rows: features.data.nrows(),
        cols: features.data.ncols(),
        dtype: DTYPE_F32LE.into(),
        encoder_tag: features.tag.clone(),
        spans: None,
        source: BTreeMap::new(),
    };
    write_dir(dir, &manifest, features.data.view())
}

pub fn read_features(dir: &Path) -> Result<FeatureMatrix> {
    let manifest = read_manifest(dir)?;
    manifest.check_header()?;
    if manifest.kind != PayloadKind::Features {
        return Err(Error::Format(format!(
            "{}: expected a features payload, found {:?}",
            dir.display(),
            manifest.kind
        )));
    }
    let data = read_blob(dir, &manifest)?;
    check_finite(data.view())?;
    Ok(FeatureMatrix {
        data,
        tag: manifest.encoder_tag,
    })
}

/// Little-endian `f32` bytes of a matrix in row-major order.
pub fn encode_f32le(data: ArrayView2<'_, f64>) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data.iter() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    bytes
}

fn write_dir(dir: &Path, manifest: &Manifest, data: ArrayView2<'_, f64>) -> Result<()> {
    check_finite(data)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let blob_path = dir.join(DATA_FILE);
    fs::write(&blob_path, encode_f32le(data)).map_err(|e| Error::io(&blob_path, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(manifest).map_err(|e| Error::json(&manifest_path, e))?;
    text.push('\n');
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))
}

fn read_blob(dir: &Path, manifest: &Manifest) -> Result<Array2<f64>> {
    let path = dir.join(DATA_FILE);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let expected = manifest
        .rows
        .checked_mul(manifest.cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("manifest shape overflows".into()))?;
    if bytes.len() != expected {
        return Err(Error::ShapeMismatch(format!(
            "{} holds {} bytes but the manifest declares {}x{} f32 ({expected} bytes)",
            path.display(),
            bytes.len(),
            manifest.rows,
            manifest.cols
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Array2::from_shape_vec((manifest.rows, manifest.cols), values)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample(rows: usize, cols: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-3.0f32..3.0) as f64);
        let layout = PromptLayout::from_segment_lengths(3, &[2, 4, 3], rows).unwrap();
        EmbeddingMatrix::new(data, layout, "clip-l").unwrap()
    }

    #[test]
    fn roundtrip_77x2048() {
        let dir = tempfile::tempdir().unwrap();
        let emb = sample(77, 2048, 11);
        write_interchange(&emb, dir.path()).unwrap();
        let back = read_interchange(dir.path()).unwrap();
        assert_eq!(back, emb);
        let bytes = fs::read(dir.path().join(DATA_FILE)).unwrap();
        assert_eq!(bytes.len(), 77 * 2048 * 4);
    }

    #[test]
    fn truncated_blob_is_shape_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write_interchange(&sample(20, 16, 1), dir.path()).unwrap();
        let path = dir.path().join(DATA_FILE);
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_interchange(dir.path()), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn unknown_version_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        write_interchange(&sample(20, 16, 2), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("\"version\": 1", "\"version\": 7");
        fs::write(&path, text).unwrap();
        assert!(matches!(read_interchange(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn wrong_dtype_and_kind_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        write_interchange(&sample(20, 16, 3), dir.path()).unwrap();
        assert!(matches!(read_features(dir.path()), Err(Error::Format(_))));
        let path = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("f32le", "f16le");
        fs::write(&path, text).unwrap();
        assert!(matches!(read_interchange(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn manifest_spans_are_revalidated() {
        let dir = tempfile::tempdir().unwrap();
        write_interchange(&sample(20, 16, 4), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        let mut manifest = read_manifest(dir.path()).unwrap();
        manifest.spans.as_mut().unwrap().eot = TokenSpan::new(19, 20).unwrap();
        fs::write(&path, serde_json::to_string(&manifest).unwrap()).unwrap();
        assert!(matches!(read_interchange(dir.path()), Err(Error::SpanError(_))));
    }

    #[test]
    fn features_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let fm = FeatureMatrix {
            data: Array2::from_shape_fn((4, 5), |(i, j)| (i * 5 + j) as f64 * 0.25),
            tag: "dinov2".into(),
        };
        write_features(&fm, dir.path()).unwrap();
        assert_eq!(read_features(dir.path()).unwrap(), fm);
    }
}

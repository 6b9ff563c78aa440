//! Text encoders that turn a prompt set into a consolidated embedding.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::consolidation::consolidate;
use crate::error::{Error, Result};
use crate::interchange::{read_interchange, read_manifest};
use crate::model::{EmbeddingMatrix, PromptSet};
use crate::toy::{ToyEncoder, ToyEncoderConfig};

/// Where an encoder's embeddings come from, recorded in run manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderRecord {
    Toy { config: ToyEncoderConfig },
    Interchange { root: PathBuf },
}

impl EncoderRecord {
    pub fn build(&self) -> Result<Box<dyn StoryEncoder>> {
        Ok(match self {
            EncoderRecord::Toy { config } => Box::new(ToyEncoder::new(*config)?),
            EncoderRecord::Interchange { root } => Box::new(InterchangeEncoder::open(root)?),
        })
    }
}

/// Encodes `[P0; P1; ...; PN]` as a single consolidated prompt.
pub trait StoryEncoder {
    fn embed_dim(&self) -> usize;
    fn encode(&self, set: &PromptSet) -> Result<EmbeddingMatrix>;
    fn record(&self) -> EncoderRecord;
}

impl StoryEncoder for ToyEncoder {
    fn embed_dim(&self) -> usize {
        self.config().embed_dim
    }

    fn encode(&self, set: &PromptSet) -> Result<EmbeddingMatrix> {
        self.encode_set(set)
    }

    fn record(&self) -> EncoderRecord {
        EncoderRecord::Toy { config: *self.config() }
    }
}

pub const INDEX_FILE: &str = "index.json";

/// `index.json` at the root of an exported embedding tree.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InterchangeIndex {
    /// Consolidated prompt text → interchange directory, relative to the root.
    pub entries: BTreeMap<String, PathBuf>,
}

/// Serves precomputed embeddings looked up by consolidated prompt text.
#[derive(Debug, Clone)]
pub struct InterchangeEncoder {
    root: PathBuf,
    index: InterchangeIndex,
    dim: usize,
}

impl InterchangeEncoder {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let path = root.join(INDEX_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let index: InterchangeIndex = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        let first = index
            .entries
            .values()
            .next()
            .ok_or_else(|| Error::Format(format!("{} lists no embeddings", path.display())))?;
        let dim = read_manifest(&root.join(first))?.cols;
        Ok(Self { root, index, dim })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl StoryEncoder for InterchangeEncoder {
    fn embed_dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, set: &PromptSet) -> Result<EmbeddingMatrix> {
        let cp = consolidate(set)?;
        let rel = self.index.entries.get(cp.text()).ok_or_else(|| {
            Error::Format(format!(
                "{}: no embedding exported for {:?}",
                self.root.display(),
                cp.text()
            ))
        })?;
        let e = read_interchange(&self.root.join(rel))?;
        if e.layout().n_frames() != set.len() {
            return Err(Error::SpanError(format!(
                "{}: embedding has {} frame spans, prompt set has {} frames",
                rel.display(),
                e.layout().n_frames(),
                set.len()
            )));
        }
        if e.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: e.dim(),
            });
        }
        Ok(e)
    }

    fn record(&self) -> EncoderRecord {
        EncoderRecord::Interchange {
            root: self.root.clone(),
        }
    }
}

/// Writes `index.json` for an exported tree.
pub fn write_index(root: &Path, index: &InterchangeIndex) -> Result<()> {
    let path = root.join(INDEX_FILE);
    let text = serde_json::to_string_pretty(index).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

//! Seeded toy text encoder: hashed token table, learned-free positional table
//! and a small stack of bidirectional pre-norm transformer blocks.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::consolidation::{compute_layout, consolidate, ConsolidatedPrompt, Tokenizer};
use crate::error::{Error, Result};
use crate::model::{EmbeddingMatrix, PromptLayout, PromptSet};
use crate::seed::rng_for;
use crate::toy::tokenizer::HashTokenizer;

pub const ENCODER_TAG: &str = "toy-encoder";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyEncoderConfig {
    pub vocab_hash_buckets: u32,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_tokens: usize,
    pub weight_seed: u64,
}

impl Default for ToyEncoderConfig {
    fn default() -> Self {
        Self {
            vocab_hash_buckets: 4096,
            embed_dim: 64,
            layers: 2,
            heads: 2,
            max_tokens: 32,
            weight_seed: 0,
        }
    }
}

impl ToyEncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_hash_buckets == 0 {
            return Err(Error::InvalidParameter("vocab_hash_buckets must be >= 1".into()));
        }
        if self.heads == 0 || self.embed_dim == 0 || !self.embed_dim.is_multiple_of(self.heads) {
            return Err(Error::InvalidParameter(format!(
                "embed_dim {} must be a positive multiple of heads {}",
                self.embed_dim, self.heads
            )));
        }
        if self.max_tokens < 8 {
            return Err(Error::InvalidParameter(format!(
                "max_tokens must be >= 8, got {}",
                self.max_tokens
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Block {
    wq: Array2<f64>,
    wk: Array2<f64>,
    wv: Array2<f64>,
    wo: Array2<f64>,
    w_in: Array2<f64>,
    w_out: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct ToyEncoder {
    cfg: ToyEncoderConfig,
    tokenizer: HashTokenizer,
    /// `vocab_hash_buckets` word rows followed by the SOT and EOT rows.
    token_table: Array2<f64>,
    positions: Array2<f64>,
    blocks: Vec<Block>,
}

/// Weights drawn uniformly from `[-0.5, 0.5] / sqrt(fan)`.
pub(crate) fn uniform_weights<R: Rng>(rng: &mut R, rows: usize, cols: usize, fan: usize) -> Array2<f64> {
    let scale = 1.0 / (fan as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || (rng.random::<f64>() - 0.5) * scale)
}

impl ToyEncoder {
    pub fn new(cfg: ToyEncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.embed_dim;
        let root = cfg.weight_seed;
        let vocab = cfg.vocab_hash_buckets as usize + 2;
        // Embedding tables are unit-scale; positions are kept weaker than tokens.
        let token_table = uniform_weights(&mut rng_for(root, "encoder/tokens"), vocab, d, 1) * TOKEN_SCALE;
        let positions =
            uniform_weights(&mut rng_for(root, "encoder/positions"), cfg.max_tokens, d, 1) * POSITION_SCALE;
        let blocks = (0..cfg.layers)
            .map(|l| {
                let mut rng = rng_for(root, &format!("encoder/block-{l}"));
                Block {
                    wq: uniform_weights(&mut rng, d, d, d),
                    wk: uniform_weights(&mut rng, d, d, d),
                    wv: uniform_weights(&mut rng, d, d, d) * VALUE_GAIN,
                    wo: uniform_weights(&mut rng, d, d, d) * VALUE_GAIN,
                    w_in: uniform_weights(&mut rng, d, 2 * d, d),
                    w_out: uniform_weights(&mut rng, 2 * d, d, 2 * d),
                }
            })
            .collect();
        Ok(Self {
            cfg,
            tokenizer: HashTokenizer::new(cfg.vocab_hash_buckets),
            token_table,
            positions,
            blocks,
        })
    }

    pub fn config(&self) -> &ToyEncoderConfig {
        &self.cfg
    }

    pub fn tokenizer(&self) -> &HashTokenizer {
        &self.tokenizer
    }

    pub fn encode_set(&self, set: &PromptSet) -> Result<EmbeddingMatrix> {
        self.encode_consolidated(&consolidate(set)?)
    }

    pub fn encode_consolidated(&self, cp: &ConsolidatedPrompt) -> Result<EmbeddingMatrix> {
        let layout = compute_layout(cp, &self.tokenizer, self.cfg.max_tokens)?;
        let tokens = cp.content_tokens(&self.tokenizer);
        self.forward(&tokens, layout)
    }

    /// Encodes free text as a bare identity segment with no frames.
    pub fn encode_text(&self, text: &str) -> Result<EmbeddingMatrix> {
        let tokens = self.tokenizer.tokenize(text);
        if tokens.is_empty() {
            return Err(Error::EmptyPrompt(format!("{text:?} produced no tokens")));
        }
        let layout = PromptLayout::from_segment_lengths(tokens.len(), &[], self.cfg.max_tokens)?;
        self.forward(&tokens, layout)
    }

    fn forward(&self, content: &[u32], layout: PromptLayout) -> Result<EmbeddingMatrix> {
        let m = layout.total_tokens();
        let d = self.cfg.embed_dim;
        let sot = self.cfg.vocab_hash_buckets as usize;
        let eot = sot + 1;
        let ids: Vec<usize> = std::iter::once(sot)
            .chain(content.iter().map(|&t| t as usize))
            .chain(std::iter::repeat(eot))
            .take(m)
            .collect();
        debug_assert_eq!(ids.len(), m);

        let mut x = Array2::<f64>::zeros((m, d));
        for (row, &id) in ids.iter().enumerate() {
            let mut r = x.row_mut(row);
            r += &self.token_table.row(id);
            r += &self.positions.row(row);
        }

        // Padding EOT tokens read the live sequence but are not read by it.
        let live = layout.live_tokens();
        for block in &self.blocks {
            let h = layer_norm(x.view());
            x += &self.self_attention(block, h.view(), live);
            let h = layer_norm(x.view());
            let hidden = h.dot(&block.w_in).mapv(f64::tanh);
            x += &hidden.dot(&block.w_out);
        }
        EmbeddingMatrix::new(layer_norm(x.view()), layout, ENCODER_TAG)
    }

    fn self_attention(&self, block: &Block, h: ArrayView2<'_, f64>, live: usize) -> Array2<f64> {
        let heads = self.cfg.heads;
        let dh = self.cfg.embed_dim / heads;
        let q = h.dot(&block.wq);
        let k = h.slice(s![..live, ..]).dot(&block.wk);
        let v = h.slice(s![..live, ..]).dot(&block.wv);
        let scale = 1.0 / (dh as f64).sqrt();
        let mut merged = Array2::<f64>::zeros(q.raw_dim());
        for head in 0..heads {
            let cols = s![.., head * dh..(head + 1) * dh];
            let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            for mut row in scores.rows_mut() {
                let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                row.mapv_inplace(|v| (v - max).exp());
                let sum = row.sum();
                row /= sum;
            }
            merged.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        }
        merged.dot(&block.wo)
    }
}

const TOKEN_SCALE: f64 = 2.0;
const POSITION_SCALE: f64 = 0.2;
/// Gain on the value and output projections. Below about 4 the residual
/// stream drowns out the shared context a token reads from its prompt.
const VALUE_GAIN: f64 = 5.0;

fn layer_norm(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let d = x.ncols() as f64;
    let mean = x.mean_axis(Axis(1)).expect("non-empty rows");
    let centered = &x - &mean.insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
    let inv = var.mapv(|v| 1.0 / (v + 1e-5).sqrt());
    centered * &inv.insert_axis(Axis(1))
}

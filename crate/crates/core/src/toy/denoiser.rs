//! Seeded toy cross-attention denoiser.
//!
//! The latent is a `grid.0 × grid.1` field of `channels`-dimensional vectors.
//! Each step projects the latent to queries, attends over the text embedding
//! (optionally with the identity-preserving copy appended) and moves the
//! latent a fraction `step_size` of the way towards the attention output.

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interchange::encode_f32le;
use crate::ipca::{attention, build_filtered_kv, ipca_attention, IpcaConfig};
use crate::model::{AttentionBundle, EmbeddingMatrix};
use crate::seed::{digest_hex, rng_for};
use crate::toy::encoder::uniform_weights;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyDenoiserConfig {
    pub latent_grid: (usize, usize),
    pub channels: usize,
    pub steps: usize,
    pub step_size: f64,
    pub weight_seed: u64,
    pub noise_seed: u64,
}

impl Default for ToyDenoiserConfig {
    fn default() -> Self {
        Self {
            latent_grid: (8, 8),
            channels: 64,
            steps: 10,
            step_size: 0.1,
            weight_seed: 0,
            noise_seed: 0,
        }
    }
}

impl ToyDenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter("steps must be >= 1".into()));
        }
        if !self.step_size.is_finite() || self.step_size < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "step_size must be finite and >= 0, got {}",
                self.step_size
            )));
        }
        if self.latent_grid.0 == 0 || self.latent_grid.1 == 0 || self.channels == 0 {
            return Err(Error::InvalidParameter("latent grid and channels must be non-empty".into()));
        }
        Ok(())
    }

    pub fn positions(&self) -> usize {
        self.latent_grid.0 * self.latent_grid.1
    }
}

/// Final latent of one frame: `positions × channels`, row-major over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub grid: (usize, usize),
    pub data: Array2<f64>,
}

impl FrameFeatures {
    pub fn flatten(&self) -> Vec<f64> {
        self.data.iter().copied().collect()
    }

    /// SHA-256 over the `f32le` encoding, as written to disk.
    pub fn digest(&self) -> String {
        digest_hex(&encode_f32le(self.data.view()))
    }
}

#[derive(Debug, Clone)]
pub struct ToyDenoiser {
    cfg: ToyDenoiserConfig,
    embed_dim: usize,
    wq: Array2<f64>,
    wk: Array2<f64>,
    wv: Array2<f64>,
    wo: Array2<f64>,
}

/// How the text conditioning enters cross-attention.
#[derive(Debug, Clone, Copy)]
pub enum Conditioning<'a> {
    /// Plain cross-attention over the (possibly reweighted) embedding.
    Plain(&'a EmbeddingMatrix),
    /// Cross-attention with the identity-preserving copy built from `pre_svr`.
    Ipca {
        embedding: &'a EmbeddingMatrix,
        pre_svr: &'a EmbeddingMatrix,
        cfg: &'a IpcaConfig,
        /// Label of the dropout stream, e.g. `"frame-3"`.
        stream: &'a str,
    },
}

impl ToyDenoiser {
    pub fn new(cfg: ToyDenoiserConfig, embed_dim: usize) -> Result<Self> {
        cfg.validate()?;
        if embed_dim == 0 {
            return Err(Error::InvalidParameter("embed_dim must be >= 1".into()));
        }
        let c = cfg.channels;
        let mut rng = rng_for(cfg.weight_seed, "denoiser/weights");
        Ok(Self {
            cfg,
            embed_dim,
            wq: uniform_weights(&mut rng, c, c, c),
            wk: uniform_weights(&mut rng, embed_dim, c, embed_dim),
            wv: uniform_weights(&mut rng, embed_dim, c, embed_dim) * VALUE_GAIN,
            wo: uniform_weights(&mut rng, c, c, c) * VALUE_GAIN,
        })
    }

    pub fn config(&self) -> &ToyDenoiserConfig {
        &self.cfg
    }

    /// Initial latent, shared by every frame of a run.
    pub fn initial_noise(&self) -> Array2<f64> {
        let mut rng = rng_for(self.cfg.noise_seed, "denoiser/noise");
        let scale = 3f64.sqrt() * 2.0;
        Array2::from_shape_simple_fn((self.cfg.positions(), self.cfg.channels), || {
            (rng.random::<f64>() - 0.5) * scale
        })
    }

    fn project(&self, e: &EmbeddingMatrix) -> Result<(Array2<f64>, Array2<f64>)> {
        if e.dim() != self.embed_dim {
            return Err(Error::ShapeMismatch(format!(
                "embedding width {} != denoiser input width {}",
                e.dim(),
                self.embed_dim
            )));
        }
        Ok((e.data().dot(&self.wk), e.data().dot(&self.wv)))
    }

    pub fn generate(&self, conditioning: Conditioning<'_>) -> Result<FrameFeatures> {
        let embedding = match conditioning {
            Conditioning::Plain(e) => e,
            Conditioning::Ipca { embedding, pre_svr, .. } => {
                if embedding.layout() != pre_svr.layout() {
                    return Err(Error::ShapeMismatch(
                        "reweighted and pre-reweighting embeddings have different layouts".into(),
                    ));
                }
                embedding
            }
        };
        let (keys, values) = self.project(embedding)?;
        let pre = match conditioning {
            Conditioning::Ipca {
                pre_svr, cfg, stream, ..
            } => {
                cfg.validate()?;
                let (k, v) = self.project(pre_svr)?;
                Some((k, v, cfg, rng_for(cfg.rng_seed, &format!("dropout/{stream}"))))
            }
            Conditioning::Plain(_) => None,
        };
        let mut pre = pre;

        let eta = self.cfg.step_size;
        let mut z = self.initial_noise();
        for _ in 0..self.cfg.steps {
            let queries = normalize_rows(z.view()).dot(&self.wq);
            let bundle = AttentionBundle::new(queries, keys.clone(), values.clone(), embedding.layout().clone())?;
            let attended = match pre.as_mut() {
                None => attention(bundle.queries().view(), bundle.keys().view(), bundle.values().view(), bundle.scale())?,
                Some((k, v, cfg, rng)) => {
                    let filtered = build_filtered_kv(k.view(), v.view(), bundle.layout(), cfg, rng)?;
                    ipca_attention(
                        bundle.queries().view(),
                        bundle.keys().view(),
                        bundle.values().view(),
                        &filtered,
                        bundle.scale(),
                        cfg.neg_inf_substitute,
                    )?
                }
            };
            let update = attended.output.dot(&self.wo);
            z = z * (1.0 - eta) + update * eta;
        }
        Ok(FrameFeatures {
            grid: self.cfg.latent_grid,
            data: z,
        })
    }
}

const VALUE_GAIN: f64 = 4.0;

fn normalize_rows(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let norms = x.map_axis(Axis(1), |r| r.dot(&r).sqrt().max(1e-12));
    let d = (x.ncols() as f64).sqrt();
    &x * &norms.mapv(|n| d / n).insert_axis(Axis(1))
}

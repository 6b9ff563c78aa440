//! End-to-end story generation over the toy encoder and denoiser.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::consolidation::sliding_window_view;
use crate::encoder::{EncoderRecord, StoryEncoder};
use crate::error::{Error, Result};
use crate::ipca::IpcaConfig;
use crate::model::{EmbeddingMatrix, PromptSet, SvrParams};
use crate::reweighting::{npr_reweight, svr_pipeline_with, SuppressMode};
use crate::seed::derive_seed;
use crate::toy::denoiser::{Conditioning, FrameFeatures, ToyDenoiser, ToyDenoiserConfig};
use crate::toy::encoder::ToyEncoderConfig;

/// How each frame's conditioning is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    /// Consolidated prompt, no reweighting.
    #[serde(rename = "pcon")]
    Pcon,
    /// Consolidated prompt with naive frame scaling.
    #[serde(rename = "npr")]
    Npr,
    /// Consolidated prompt with singular-value reweighting.
    #[serde(rename = "svr")]
    Svr,
    /// Singular-value reweighting plus identity-preserving cross-attention.
    #[serde(rename = "svr+ipca")]
    SvrIpca,
    /// Each frame encoded on its own as `[P0; Pj]`.
    #[serde(rename = "multi-prompt-baseline")]
    MultiPromptBaseline,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Pcon,
        Mode::Npr,
        Mode::Svr,
        Mode::SvrIpca,
        Mode::MultiPromptBaseline,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Pcon => "pcon",
            Mode::Npr => "npr",
            Mode::Svr => "svr",
            Mode::SvrIpca => "svr+ipca",
            Mode::MultiPromptBaseline => "multi-prompt-baseline",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Mode::ALL.iter().map(Mode::as_str).collect();
                Error::InvalidParameter(format!("unknown mode {s:?} (expected one of {})", names.join(", ")))
            })
    }
}

/// Seeds for every random stream of a run, derived from one root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub root: u64,
    pub encoder_weights: u64,
    pub denoiser_weights: u64,
    pub noise: u64,
    pub dropout: u64,
}

impl Seeds {
    pub fn from_root(root: u64) -> Self {
        Self {
            root,
            encoder_weights: derive_seed(root, "encoder/weights"),
            denoiser_weights: derive_seed(root, "denoiser/weights"),
            noise: derive_seed(root, "noise"),
            dropout: derive_seed(root, "ipca/dropout"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoryConfig {
    pub mode: Mode,
    pub params: SvrParams,
    pub suppress: SuppressMode,
    /// Sliding-window size; `None` puts every frame in one prompt.
    pub window: Option<usize>,
    pub denoiser: ToyDenoiserConfig,
    pub ipca: IpcaConfig,
}

impl StoryConfig {
    /// Default parameters with every seed derived from `root`.
    pub fn seeded(mode: Mode, root: u64) -> Self {
        let seeds = Seeds::from_root(root);
        Self {
            mode,
            params: SvrParams::default(),
            suppress: SuppressMode::Iterative,
            window: None,
            denoiser: ToyDenoiserConfig {
                weight_seed: seeds.denoiser_weights,
                noise_seed: seeds.noise,
                ..Default::default()
            },
            ipca: IpcaConfig {
                rng_seed: seeds.dropout,
                ..Default::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.denoiser.validate()?;
        self.ipca.validate()?;
        if self.window == Some(0) {
            return Err(Error::InvalidParameter("window size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Toy encoder configuration with its weight seed derived from `root`.
pub fn seeded_encoder_config(root: u64) -> ToyEncoderConfig {
    ToyEncoderConfig {
        weight_seed: Seeds::from_root(root).encoder_weights,
        ..Default::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    /// First and last story frame (1-based) in the prompt used for this frame.
    pub window: (usize, usize),
    pub express_index: usize,
    pub digest: String,
}

/// Everything needed to regenerate a story bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub set: PromptSet,
    pub encoder: EncoderRecord,
    pub config: StoryConfig,
    pub frames: Vec<FrameRecord>,
}

#[derive(Debug, Clone)]
pub struct StoryRun {
    pub frames: Vec<FrameFeatures>,
    pub manifest: RunManifest,
}

/// Generates one frame per frame prompt of `set`.
pub fn run_story<E: StoryEncoder + ?Sized>(set: &PromptSet, encoder: &E, cfg: &StoryConfig) -> Result<StoryRun> {
    cfg.validate()?;
    let denoiser = ToyDenoiser::new(cfg.denoiser, encoder.embed_dim())?;
    let n = set.len();
    let mut cache: BTreeMap<(usize, usize), EmbeddingMatrix> = BTreeMap::new();
    let mut frames = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);

    for j in 1..=n {
        let (window, express, base) = if cfg.mode == Mode::MultiPromptBaseline {
            let pair = set.with_frames(vec![set.frame(j)?.to_string()])?;
            ((j, j), 1, encoder.encode(&pair)?)
        } else {
            let view = sliding_window_view(n, cfg.window.unwrap_or(n), j)?;
            let key = (*view.selected_frames.start(), *view.selected_frames.end());
            let base = match cache.get(&key) {
                Some(e) => e.clone(),
                None => {
                    let e = encoder.encode(&view.apply(set)?)?;
                    cache.insert(key, e.clone());
                    e
                }
            };
            (key, view.express_index, base)
        };

        let stream = format!("frame-{j}");
        let features = match cfg.mode {
            Mode::Pcon | Mode::MultiPromptBaseline => denoiser.generate(Conditioning::Plain(&base))?,
            Mode::Npr => {
                let c = npr_reweight(&base, express, &cfg.params)?;
                denoiser.generate(Conditioning::Plain(&c))?
            }
            Mode::Svr => {
                let c = svr_pipeline_with(&base, express, &cfg.params, cfg.suppress)?;
                denoiser.generate(Conditioning::Plain(&c))?
            }
            Mode::SvrIpca => {
                let c = svr_pipeline_with(&base, express, &cfg.params, cfg.suppress)?;
                denoiser.generate(Conditioning::Ipca {
                    embedding: &c,
                    pre_svr: &base,
                    cfg: &cfg.ipca,
                    stream: &stream,
                })?
            }
        };
        records.push(FrameRecord {
            index: j,
            window,
            express_index: express,
            digest: features.digest(),
        });
        frames.push(features);
    }

    Ok(StoryRun {
        frames,
        manifest: RunManifest {
            set: set.clone(),
            encoder: encoder.record(),
            config: *cfg,
            frames: records,
        },
    })
}

/// Re-runs a story from its manifest alone.
pub fn replay(manifest: &RunManifest) -> Result<StoryRun> {
    let encoder = manifest.encoder.build()?;
    run_story(&manifest.set, encoder.as_ref(), &manifest.config)
}

//! Command-line front end: `run` generates stories, `analyze` reports distances.
//!
//! Artifacts of `run --out DIR`:
//!
//! ```text
//! DIR/run.json                  the resolved run configuration (without `out`)
//! DIR/summary.csv               set_id,method,mean_pairwise_distance
//! DIR/summary.json              the same report with per-method means
//! DIR/<set_id>/manifest.json    RunManifest, enough to replay the story
//! DIR/<set_id>/frame-001/       frame features in the interchange format
//! ```
//!
//! Exit status is 0 on success, 2 for configuration errors and 3 for
//! failures while running.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    frame_feature_distance_report, single_vs_multi_report, DistanceReport, FeatureGroup, Pooling,
};
use crate::corpus::{bundled_corpus, read_corpus};
use crate::encoder::{InterchangeEncoder, StoryEncoder};
use crate::error::Error;
use crate::interchange::{read_features, read_manifest, write_features, FeatureMatrix, PayloadKind};
use crate::model::{PromptSet, SvrParams};
use crate::reweighting::SuppressMode;
use crate::toy::{run_story, seeded_encoder_config, Mode, StoryConfig, ToyEncoder};

pub const RUN_FILE: &str = "run.json";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const STORY_MANIFEST: &str = "manifest.json";

/// A command failure, split by who has to fix it.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config file or input paths.
    Config(Error),
    /// The inputs were accepted but the computation failed.
    Runtime(Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    pub fn error(&self) -> &Error {
        match self {
            Failure::Config(e) | Failure::Runtime(e) => e,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e}"),
            Failure::Runtime(e) => write!(f, "error: {e}"),
        }
    }
}

impl std::error::Error for Failure {}

fn config<E: Into<Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

fn runtime<E: Into<Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

/// Where prompt embeddings come from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum EncoderChoice {
    /// The seeded toy encoder.
    #[default]
    Toy,
    /// A directory of exported embeddings with an `index.json`.
    Dir(PathBuf),
}

impl From<String> for EncoderChoice {
    fn from(s: String) -> Self {
        if s == "toy" {
            EncoderChoice::Toy
        } else {
            EncoderChoice::Dir(PathBuf::from(s))
        }
    }
}

impl From<EncoderChoice> for String {
    fn from(e: EncoderChoice) -> Self {
        match e {
            EncoderChoice::Toy => "toy".into(),
            EncoderChoice::Dir(p) => p.display().to_string(),
        }
    }
}

impl EncoderChoice {
    fn open(&self, seed: u64) -> Result<Box<dyn StoryEncoder>, Failure> {
        match self {
            EncoderChoice::Toy => Ok(Box::new(ToyEncoder::new(seeded_encoder_config(seed)).map_err(config)?)),
            EncoderChoice::Dir(root) => Ok(Box::new(InterchangeEncoder::open(root).map_err(config)?)),
        }
    }
}

/// Fully resolved settings for `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// JSONL corpus; `None` uses the bundled toy corpus.
    pub corpus: Option<PathBuf>,
    pub mode: Mode,
    pub params: SvrParams,
    pub suppress: SuppressMode,
    pub window: Option<usize>,
    pub seed: u64,
    pub dropout: f64,
    pub encoder: EncoderChoice,
    #[serde(skip)]
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            mode: Mode::SvrIpca,
            params: SvrParams::default(),
            suppress: SuppressMode::Iterative,
            window: None,
            seed: 0,
            dropout: StoryConfig::seeded(Mode::SvrIpca, 0).ipca.dropout_rate,
            encoder: EncoderChoice::Toy,
            out: PathBuf::from("runs"),
        }
    }
}

impl RunConfig {
    /// The per-story configuration derived from this run's root seed.
    pub fn story_config(&self) -> StoryConfig {
        let mut cfg = StoryConfig::seeded(self.mode, self.seed);
        cfg.params = self.params;
        cfg.suppress = self.suppress;
        cfg.window = self.window;
        cfg.ipca.dropout_rate = self.dropout;
        cfg
    }

    fn check(&self) -> Result<(), Failure> {
        self.story_config().validate().map_err(config)?;
        if let Some(path) = &self.corpus {
            if !path.is_file() {
                return Err(config(Error::InvalidParameter(format!(
                    "corpus {} does not exist",
                    path.display()
                ))));
            }
        }
        if let EncoderChoice::Dir(root) = &self.encoder {
            if !root.is_dir() {
                return Err(config(Error::InvalidParameter(format!(
                    "encoder directory {} does not exist",
                    root.display()
                ))));
            }
        }
        Ok(())
    }

    fn load_corpus(&self) -> Result<Vec<PromptSet>, Failure> {
        load_corpus(self.corpus.as_deref())
    }
}

fn load_corpus(path: Option<&Path>) -> Result<Vec<PromptSet>, Failure> {
    match path {
        Some(p) => read_corpus(p).map_err(config),
        None => Ok(bundled_corpus()),
    }
}

/// Outcome of a successful `run`.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub stories: usize,
    pub frames: usize,
    pub report: DistanceReport,
}

/// Generates every story of the corpus and writes the artifacts under `cfg.out`.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary, Failure> {
    cfg.check()?;
    let corpus = cfg.load_corpus()?;
    for set in &corpus {
        check_dir_name(set.id()).map_err(config)?;
    }
    let encoder = cfg.encoder.open(cfg.seed)?;
    let story_cfg = cfg.story_config();

    fs::create_dir_all(&cfg.out).map_err(|e| runtime(Error::io(&cfg.out, e)))?;
    let mut groups = Vec::with_capacity(corpus.len());
    let mut frames = 0;
    for set in &corpus {
        let run = run_story(set, encoder.as_ref(), &story_cfg).map_err(runtime)?;
        let dir = cfg.out.join(set.id());
        write_json(&dir.join(STORY_MANIFEST), &run.manifest)?;
        for (j, f) in run.frames.iter().enumerate() {
            let fm = FeatureMatrix {
                data: f.data.clone(),
                tag: format!("toy-denoiser/{}", cfg.mode),
            };
            write_features(&fm, &dir.join(frame_dir_name(j + 1))).map_err(runtime)?;
        }
        frames += run.frames.len();
        groups.push(FeatureGroup {
            set_id: set.id().to_string(),
            method: cfg.mode.to_string(),
            frames: run.frames.iter().map(|f| f.flatten()).collect(),
        });
    }

    let report = frame_feature_distance_report(&groups).map_err(runtime)?;
    write_json(&cfg.out.join(RUN_FILE), cfg)?;
    write_text(&cfg.out.join(SUMMARY_CSV), &report.to_csv())?;
    write_text(&cfg.out.join(SUMMARY_JSON), &report.to_json())?;
    Ok(RunSummary {
        stories: corpus.len(),
        frames,
        report,
    })
}

pub fn frame_dir_name(index: usize) -> String {
    format!("frame-{index:03}")
}

fn check_dir_name(id: &str) -> Result<(), Error> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && !id.contains(['/', '\\'])
        && !matches!(id, RUN_FILE | SUMMARY_CSV | SUMMARY_JSON);
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("set id {id:?} cannot be used as a directory name")))
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| runtime(Error::json(path, e)))?;
    text.push('\n');
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| runtime(Error::io(parent, e)))?;
    }
    fs::write(path, text).map_err(|e| runtime(Error::io(path, e)))
}

/// Which comparison `analyze` performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Compare {
    /// Frame-embedding spread, one consolidated prompt vs one prompt per frame.
    SingleMulti,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeConfig {
    /// Run directories or feature interchange directories.
    pub inputs: Vec<PathBuf>,
    pub compare: Option<Compare>,
    pub corpus: Option<PathBuf>,
    pub encoder: EncoderChoice,
    pub seed: u64,
    pub pooling: Pooling,
    /// Report file; `.json` selects JSON, anything else CSV. `None` prints CSV.
    pub out: Option<PathBuf>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            compare: None,
            corpus: None,
            encoder: EncoderChoice::Toy,
            seed: 0,
            pooling: Pooling::Mean,
            out: None,
        }
    }
}

/// Builds a distance report from run outputs, feature files or a live comparison.
pub fn cmd_analyze(cfg: &AnalyzeConfig) -> Result<DistanceReport, Failure> {
    let report = match cfg.compare {
        Some(Compare::SingleMulti) => {
            if !cfg.inputs.is_empty() {
                return Err(config(Error::InvalidParameter(
                    "--compare takes no input directories".into(),
                )));
            }
            if let Some(p) = &cfg.corpus {
                if !p.is_file() {
                    return Err(config(Error::InvalidParameter(format!("corpus {} does not exist", p.display()))));
                }
            }
            let corpus = load_corpus(cfg.corpus.as_deref())?;
            let encoder = cfg.encoder.open(cfg.seed)?;
            single_vs_multi_report(&corpus, encoder.as_ref(), cfg.pooling).map_err(runtime)?
        }
        None => {
            if cfg.inputs.is_empty() {
                return Err(config(Error::InvalidParameter("analyze needs at least one input".into())));
            }
            let mut groups = Vec::new();
            for input in &cfg.inputs {
                groups.extend(load_groups(input)?);
            }
            frame_feature_distance_report(&groups).map_err(runtime)?
        }
    };
    match &cfg.out {
        Some(path) => {
            let json = path.extension().is_some_and(|e| e == "json");
            write_text(path, &if json { report.to_json() } else { report.to_csv() })?;
        }
        None => print!("{}", report.to_csv()),
    }
    Ok(report)
}

/// Feature groups stored under `input`: a run directory yields one group per
/// story; a feature directory yields one group whose rows are the frames.
pub fn load_groups(input: &Path) -> Result<Vec<FeatureGroup>, Failure> {
    if !input.is_dir() {
        return Err(config(Error::InvalidParameter(format!(
            "input {} is not a directory",
            input.display()
        ))));
    }
    let run_file = input.join(RUN_FILE);
    if run_file.is_file() {
        let text = fs::read_to_string(&run_file).map_err(|e| config(Error::io(&run_file, e)))?;
        let run: RunConfig = serde_json::from_str(&text).map_err(|e| config(Error::json(&run_file, e)))?;
        return load_run(input, &run.mode.to_string());
    }
    let manifest = read_manifest(input).map_err(config)?;
    if manifest.kind != PayloadKind::Features {
        return Err(config(Error::Format(format!(
            "{} holds an embedding, not features",
            input.display()
        ))));
    }
    let fm = read_features(input).map_err(runtime)?;
    Ok(vec![FeatureGroup {
        set_id: dir_label(input),
        method: fm.tag,
        frames: fm.data.rows().into_iter().map(|r| r.to_vec()).collect(),
    }])
}

fn load_run(dir: &Path, method: &str) -> Result<Vec<FeatureGroup>, Failure> {
    let mut stories: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| config(Error::io(dir, e)))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(STORY_MANIFEST).is_file())
        .collect();
    stories.sort();
    let mut groups = Vec::with_capacity(stories.len());
    for story in stories {
        let mut frames = Vec::new();
        for j in 1.. {
            let frame_dir = story.join(frame_dir_name(j));
            if !frame_dir.is_dir() {
                break;
            }
            let fm = read_features(&frame_dir).map_err(runtime)?;
            frames.push(fm.data.iter().copied().collect());
        }
        groups.push(FeatureGroup {
            set_id: dir_label(&story),
            method: method.to_string(),
            frames,
        });
    }
    Ok(groups)
}

fn dir_label(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

/// Subset of [`RunConfig`] accepted in a `--config` TOML file.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: Option<PathBuf>,
    pub mode: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub alpha_prime: Option<f64>,
    pub beta_prime: Option<f64>,
    pub npr_up: Option<f64>,
    pub npr_down: Option<f64>,
    pub suppress: Option<SuppressMode>,
    pub window: Option<usize>,
    pub seed: Option<u64>,
    pub dropout: Option<f64>,
    pub encoder: Option<String>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn read(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Parser)]
#[command(name = "prompt-story", version, about = "Identity-consistent story conditioning at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate frame features for every story in a corpus.
    Run(RunArgs),
    /// Report mean pairwise frame distances.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuppressArg {
    Iterative,
    Joint,
}

impl From<SuppressArg> for SuppressMode {
    fn from(s: SuppressArg) -> Self {
        match s {
            SuppressArg::Iterative => SuppressMode::Iterative,
            SuppressArg::Joint => SuppressMode::Joint,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PoolingArg {
    Mean,
    Tokens,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML file with default values; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSONL corpus (defaults to the bundled toy corpus).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// pcon, npr, svr, svr+ipca or multi-prompt-baseline.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    alpha_prime: Option<f64>,
    #[arg(long)]
    beta_prime: Option<f64>,
    #[arg(long)]
    npr_up: Option<f64>,
    #[arg(long)]
    npr_down: Option<f64>,
    #[arg(long, value_enum)]
    suppress: Option<SuppressArg>,
    /// Sliding-window size in frames.
    #[arg(long)]
    window: Option<usize>,
    /// Root seed for every random stream.
    #[arg(long)]
    seed: Option<u64>,
    /// Identity-token dropout rate for the appended attention keys.
    #[arg(long)]
    dropout: Option<f64>,
    /// `toy` or a directory of exported embeddings.
    #[arg(long)]
    encoder: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Run directories or feature interchange directories.
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    compare: Option<Compare>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value = "toy")]
    encoder: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "mean")]
    pooling: PoolingArg,
    /// Report path; `.json` writes JSON, otherwise CSV. Prints CSV when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, Error> {
        let file = match &self.config {
            Some(p) => FileConfig::read(p)?,
            None => FileConfig::default(),
        };
        let mut cfg = RunConfig::default();
        let d = cfg.params;
        cfg.params = SvrParams {
            alpha: self.alpha.or(file.alpha).unwrap_or(d.alpha),
            beta: self.beta.or(file.beta).unwrap_or(d.beta),
            alpha_prime: self.alpha_prime.or(file.alpha_prime).unwrap_or(d.alpha_prime),
            beta_prime: self.beta_prime.or(file.beta_prime).unwrap_or(d.beta_prime),
            npr_up: self.npr_up.or(file.npr_up).unwrap_or(d.npr_up),
            npr_down: self.npr_down.or(file.npr_down).unwrap_or(d.npr_down),
        };
        if let Some(m) = self.mode.or(file.mode) {
            cfg.mode = m.parse()?;
        }
        cfg.corpus = self.corpus.or(file.corpus);
        cfg.suppress = self.suppress.map(Into::into).or(file.suppress).unwrap_or(cfg.suppress);
        cfg.window = self.window.or(file.window);
        cfg.seed = self.seed.or(file.seed).unwrap_or(cfg.seed);
        cfg.dropout = self.dropout.or(file.dropout).unwrap_or(cfg.dropout);
        cfg.encoder = self.encoder.or(file.encoder).map(EncoderChoice::from).unwrap_or_default();
        cfg.out = self.out.or(file.out).unwrap_or(cfg.out);
        Ok(cfg)
    }
}

impl From<AnalyzeArgs> for AnalyzeConfig {
    fn from(a: AnalyzeArgs) -> Self {
        Self {
            inputs: a.inputs,
            compare: a.compare,
            corpus: a.corpus,
            encoder: EncoderChoice::from(a.encoder),
            seed: a.seed,
            pooling: match a.pooling {
                PoolingArg::Mean => Pooling::Mean,
                PoolingArg::Tokens => Pooling::Tokens,
            },
            out: a.out,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Run(args) => args.resolve().map_err(Failure::Config).and_then(|cfg| {
            let s = cmd_run(&cfg)?;
            eprintln!("wrote {} stories ({} frames) to {}", s.stories, s.frames, cfg.out.display());
            Ok(())
        }),
        Command::Analyze(args) => cmd_analyze(&args.into()).map(|_| ()),
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("prompt-story: {f}");
            f.exit_code()
        }
    }
}

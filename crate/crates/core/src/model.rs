//! Domain types shared by every stage of the pipeline.
//!
//! All types are immutable once constructed and validate their invariants
//! at construction time, so a value that exists is a value that is valid.

use std::fmt;
use std::ops::Range;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Benchmark category of a prompt set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Superclass {
    Humans,
    Animals,
    Fantasy,
    Inanimate,
    #[serde(alias = "fairy tales", alias = "fairy-tales")]
    FairyTales,
    Nature,
    Technology,
    Foods,
}

impl Superclass {
    pub const ALL: [Superclass; 8] = [
        Superclass::Humans,
        Superclass::Animals,
        Superclass::Fantasy,
        Superclass::Inanimate,
        Superclass::FairyTales,
        Superclass::Nature,
        Superclass::Technology,
        Superclass::Foods,
    ];
}

#[derive(Deserialize)]
struct RawPromptSet {
    id: String,
    superclass: Superclass,
    identity_prompt: String,
    frame_prompts: Vec<String>,
}

/// An identity prompt followed by the ordered frame prompts of one story.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPromptSet")]
pub struct PromptSet {
    id: String,
    superclass: Superclass,
    identity_prompt: String,
    frame_prompts: Vec<String>,
}

impl TryFrom<RawPromptSet> for PromptSet {
    type Error = Error;

    fn try_from(raw: RawPromptSet) -> Result<Self> {
        PromptSet::new(raw.id, raw.superclass, raw.identity_prompt, raw.frame_prompts)
    }
}

impl PromptSet {
    pub fn new(
        id: impl Into<String>,
        superclass: Superclass,
        identity_prompt: impl Into<String>,
        frame_prompts: Vec<String>,
    ) -> Result<Self> {
        let id = id.into();
        let identity_prompt = identity_prompt.into();
        if identity_prompt.trim().is_empty() {
            return Err(Error::EmptyPrompt(format!("set {id:?}: identity prompt")));
        }
        if frame_prompts.is_empty() {
            return Err(Error::EmptyPrompt(format!("set {id:?}: no frame prompts")));
        }
        if let Some(i) = frame_prompts.iter().position(|p| p.trim().is_empty()) {
            return Err(Error::EmptyPrompt(format!("set {id:?}: frame prompt {}", i + 1)));
        }
        Ok(Self {
            id,
            superclass,
            identity_prompt,
            frame_prompts,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn superclass(&self) -> Superclass {
        self.superclass
    }

    pub fn identity_prompt(&self) -> &str {
        &self.identity_prompt
    }

    pub fn frame_prompts(&self) -> &[String] {
        &self.frame_prompts
    }

    /// Number of frames N.
    pub fn len(&self) -> usize {
        self.frame_prompts.len()
    }

    /// Always false; a valid set has at least one frame.
    pub fn is_empty(&self) -> bool {
        self.frame_prompts.is_empty()
    }

    /// 1-based frame prompt lookup.
    pub fn frame(&self, i: usize) -> Result<&str> {
        check_frame_index(i, self.len())?;
        Ok(&self.frame_prompts[i - 1])
    }

    /// The same identity with a different list of frames.
    pub fn with_frames(&self, frame_prompts: Vec<String>) -> Result<Self> {
        Self::new(
            self.id.clone(),
            self.superclass,
            self.identity_prompt.clone(),
            frame_prompts,
        )
    }
}

pub(crate) fn check_frame_index(i: usize, n: usize) -> Result<()> {
    if i == 0 || i > n {
        Err(Error::IndexOutOfRange { index: i, max: n })
    } else {
        Ok(())
    }
}

/// Half-open token range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "[usize; 2]", try_from = "[usize; 2]")]
pub struct TokenSpan {
    start: usize,
    end: usize,
}

impl TokenSpan {
    pub fn new(start: usize, end: usize) -> Result<Self> {
        if start > end {
            return Err(Error::SpanError(format!("span [{start}, {end}) is reversed")));
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.range().contains(&idx)
    }
}

impl fmt::Display for TokenSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

impl From<TokenSpan> for [usize; 2] {
    fn from(s: TokenSpan) -> Self {
        [s.start, s.end]
    }
}

impl TryFrom<[usize; 2]> for TokenSpan {
    type Error = Error;

    fn try_from(v: [usize; 2]) -> Result<Self> {
        TokenSpan::new(v[0], v[1])
    }
}

/// Token-span map over a consolidated sequence: `SOT | identity | frame_1..N | EOT`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PromptLayout {
    total_tokens: usize,
    sot: TokenSpan,
    identity: TokenSpan,
    frames: Vec<TokenSpan>,
    eot: TokenSpan,
}

impl PromptLayout {
    /// Checks that the spans are contiguous, ordered and cover `[0, total_tokens)`,
    /// with a single SOT token and at least one EOT token.
    pub fn new(
        total_tokens: usize,
        sot: TokenSpan,
        identity: TokenSpan,
        frames: Vec<TokenSpan>,
        eot: TokenSpan,
    ) -> Result<Self> {
        if sot.len() != 1 {
            return Err(Error::SpanError(format!("SOT span {sot} must hold exactly one token")));
        }
        if eot.is_empty() {
            return Err(Error::SpanError(format!("EOT span {eot} is empty")));
        }
        let mut cursor = 0;
        let ordered = std::iter::once(("SOT".to_string(), sot))
            .chain(std::iter::once(("identity".to_string(), identity)))
            .chain(frames.iter().enumerate().map(|(i, s)| (format!("frame {}", i + 1), *s)))
            .chain(std::iter::once(("EOT".to_string(), eot)));
        for (name, span) in ordered {
            if span.start() < cursor {
                return Err(Error::SpanError(format!(
                    "{name} span {span} overlaps the previous span ending at {cursor}"
                )));
            }
            if span.start() > cursor {
                return Err(Error::SpanError(format!(
                    "gap before {name} span {span}: tokens [{cursor}, {}) uncovered",
                    span.start()
                )));
            }
            cursor = span.end();
        }
        if cursor != total_tokens {
            return Err(Error::SpanError(format!(
                "spans cover [0, {cursor}) but the layout claims {total_tokens} tokens"
            )));
        }
        Ok(Self {
            total_tokens,
            sot,
            identity,
            frames,
            eot,
        })
    }

    /// Builds the layout from segment token counts, padding with EOT up to `max_tokens`.
    pub fn from_segment_lengths(
        identity_len: usize,
        frame_lens: &[usize],
        max_tokens: usize,
    ) -> Result<Self> {
        let content = identity_len + frame_lens.iter().sum::<usize>();
        let available = max_tokens.saturating_sub(2);
        if content > available {
            return Err(Error::Overflow {
                needed: content,
                available,
            });
        }
        let sot = TokenSpan::new(0, 1)?;
        let identity = TokenSpan::new(1, 1 + identity_len)?;
        let mut cursor = identity.end();
        let mut frames = Vec::with_capacity(frame_lens.len());
        for &len in frame_lens {
            frames.push(TokenSpan::new(cursor, cursor + len)?);
            cursor += len;
        }
        let eot = TokenSpan::new(cursor, max_tokens)?;
        Self::new(max_tokens, sot, identity, frames, eot)
    }

    pub fn total_tokens(&self) -> usize {
        self.total_tokens
    }

    pub fn sot(&self) -> TokenSpan {
        self.sot
    }

    pub fn identity(&self) -> TokenSpan {
        self.identity
    }

    pub fn frames(&self) -> &[TokenSpan] {
        &self.frames
    }

    pub fn eot(&self) -> TokenSpan {
        self.eot
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    /// 1-based frame span lookup.
    pub fn frame(&self, i: usize) -> Result<TokenSpan> {
        check_frame_index(i, self.frames.len())?;
        Ok(self.frames[i - 1])
    }

    /// Number of non-padding tokens: SOT, identity, frames and the first EOT.
    pub fn live_tokens(&self) -> usize {
        self.eot.start() + 1
    }
}

/// An M×D matrix of token embeddings from one encoder stream.
///
/// Values are held as `f64`; the interchange format stores them as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: Array2<f64>,
    layout: PromptLayout,
    encoder_tag: String,
}

impl EmbeddingMatrix {
    pub fn new(data: Array2<f64>, layout: PromptLayout, encoder_tag: impl Into<String>) -> Result<Self> {
        validate(data.view(), &layout)?;
        Ok(Self {
            data,
            layout,
            encoder_tag: encoder_tag.into(),
        })
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn layout(&self) -> &PromptLayout {
        &self.layout
    }

    pub fn encoder_tag(&self) -> &str {
        &self.encoder_tag
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn rows(&self, span: TokenSpan) -> ArrayView2<'_, f64> {
        self.data.slice(ndarray::s![span.range(), ..])
    }

    /// Same layout and tag, new values.
    pub fn with_data(&self, data: Array2<f64>) -> Result<Self> {
        Self::new(data, self.layout.clone(), self.encoder_tag.clone())
    }

    /// Re-checks every invariant.
    pub fn validate(&self) -> Result<()> {
        validate(self.data.view(), &self.layout)
    }

    pub fn into_parts(self) -> (Array2<f64>, PromptLayout, String) {
        (self.data, self.layout, self.encoder_tag)
    }
}

/// Checks that `data` matches `layout` and holds only finite values.
pub fn validate(data: ArrayView2<'_, f64>, layout: &PromptLayout) -> Result<()> {
    if data.nrows() != layout.total_tokens() {
        return Err(Error::ShapeMismatch(format!(
            "matrix has {} rows but the layout claims {} tokens",
            data.nrows(),
            layout.total_tokens()
        )));
    }
    if data.ncols() == 0 {
        return Err(Error::ShapeMismatch("embedding dimension is zero".into()));
    }
    check_finite(data)
}

pub(crate) fn check_finite(data: ArrayView2<'_, f64>) -> Result<()> {
    for ((row, col), v) in data.indexed_iter() {
        if !v.is_finite() {
            return Err(Error::NonFinite { row, col });
        }
    }
    Ok(())
}

/// Reweighting scalars for SVR+ (`alpha`, `beta`), SVR- (`alpha_prime`, `beta_prime`)
/// and naive prompt reweighting (`npr_up`, `npr_down`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_prime: f64,
    pub beta_prime: f64,
    pub npr_up: f64,
    pub npr_down: f64,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            beta: 0.05,
            alpha_prime: 0.01,
            beta_prime: 1.0,
            npr_up: 2.0,
            npr_down: 0.5,
        }
    }
}

impl SvrParams {
    /// Parameters under which every reweighting is the identity map.
    pub fn identity() -> Self {
        Self {
            alpha: 0.0,
            beta: 1.0,
            alpha_prime: 0.0,
            beta_prime: 1.0,
            npr_up: 1.0,
            npr_down: 1.0,
        }
    }

    /// Exponents must be finite and non-negative; scales must be finite and positive.
    pub fn validate(&self) -> Result<()> {
        let exponents = [("alpha", self.alpha), ("alpha_prime", self.alpha_prime)];
        for (name, v) in exponents {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {v}")));
            }
        }
        let scales = [
            ("beta", self.beta),
            ("beta_prime", self.beta_prime),
            ("npr_up", self.npr_up),
            ("npr_down", self.npr_down),
        ];
        for (name, v) in scales {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Query/key/value matrices for one cross-attention call.
#[derive(Debug, Clone)]
pub struct AttentionBundle {
    queries: Array2<f64>,
    keys: Array2<f64>,
    values: Array2<f64>,
    layout: PromptLayout,
    scale: f64,
}

impl AttentionBundle {
    pub fn new(
        queries: Array2<f64>,
        keys: Array2<f64>,
        values: Array2<f64>,
        layout: PromptLayout,
    ) -> Result<Self> {
        if keys.nrows() != layout.total_tokens() || values.nrows() != layout.total_tokens() {
            return Err(Error::ShapeMismatch(format!(
                "keys ({}) and values ({}) must have {} rows",
                keys.nrows(),
                values.nrows(),
                layout.total_tokens()
            )));
        }
        if queries.ncols() != keys.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "query width {} != key width {}",
                queries.ncols(),
                keys.ncols()
            )));
        }
        if queries.ncols() == 0 {
            return Err(Error::ShapeMismatch("attention width is zero".into()));
        }
        let scale = 1.0 / (queries.ncols() as f64).sqrt();
        Ok(Self {
            queries,
            keys,
            values,
            layout,
            scale,
        })
    }

    pub fn queries(&self) -> &Array2<f64> {
        &self.queries
    }

    pub fn keys(&self) -> &Array2<f64> {
        &self.keys
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn layout(&self) -> &PromptLayout {
        &self.layout
    }

    /// `1/sqrt(d)`.
    pub fn scale(&self) -> f64 {
        self.scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout_77() -> PromptLayout {
        PromptLayout::from_segment_lengths(6, &[5, 7, 4], 77).unwrap()
    }

    #[test]
    fn valid_embedding_passes() {
        let emb = EmbeddingMatrix::new(Array2::zeros((77, 64)), layout_77(), "toy");
        assert!(emb.is_ok());
        assert!(emb.unwrap().validate().is_ok());
    }

    #[test]
    fn row_count_mismatch() {
        let layout = PromptLayout::from_segment_lengths(6, &[5, 7, 4], 76).unwrap();
        let err = EmbeddingMatrix::new(Array2::zeros((77, 64)), layout, "toy").unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)), "{err}");
    }

    #[test]
    fn nan_is_rejected() {
        let mut data = Array2::zeros((77, 64));
        data[[10, 3]] = f64::NAN;
        let err = EmbeddingMatrix::new(data, layout_77(), "toy").unwrap_err();
        assert!(matches!(err, Error::NonFinite { row: 10, col: 3 }));
    }

    #[test]
    fn gaps_and_overlaps_are_span_errors() {
        let s = |a, b| TokenSpan::new(a, b).unwrap();
        let gap = PromptLayout::new(10, s(0, 1), s(1, 3), vec![s(4, 6)], s(6, 10));
        assert!(matches!(gap, Err(Error::SpanError(_))));
        let overlap = PromptLayout::new(10, s(0, 1), s(1, 4), vec![s(3, 6)], s(6, 10));
        assert!(matches!(overlap, Err(Error::SpanError(_))));
        let short = PromptLayout::new(10, s(0, 1), s(1, 4), vec![s(4, 6)], s(6, 9));
        assert!(matches!(short, Err(Error::SpanError(_))));
        let no_eot = PromptLayout::new(6, s(0, 1), s(1, 4), vec![s(4, 6)], s(6, 6));
        assert!(matches!(no_eot, Err(Error::SpanError(_))));
    }

    #[test]
    fn prompt_set_invariants() {
        let ok = PromptSet::new("a", Superclass::Animals, "a fox", vec!["running".into()]);
        assert!(ok.is_ok());
        assert!(PromptSet::new("a", Superclass::Animals, "  ", vec!["x".into()]).is_err());
        assert!(PromptSet::new("a", Superclass::Animals, "a fox", vec![]).is_err());
        assert!(PromptSet::new("a", Superclass::Animals, "a fox", vec!["x".into(), " ".into()]).is_err());
    }

    #[test]
    fn prompt_set_json_is_validated() {
        let good = r#"{"id":"s","superclass":"fairy tales","identity_prompt":"a gnome","frame_prompts":["in a cave"]}"#;
        let set: PromptSet = serde_json::from_str(good).unwrap();
        assert_eq!(set.superclass(), Superclass::FairyTales);
        let bad = r#"{"id":"s","superclass":"foods","identity_prompt":"a pie","frame_prompts":[]}"#;
        assert!(serde_json::from_str::<PromptSet>(bad).is_err());
    }

    #[test]
    fn svr_params_validation() {
        assert!(SvrParams::default().validate().is_ok());
        assert!(SvrParams::identity().validate().is_ok());
        let bad = SvrParams {
            beta: 0.0,
            ..SvrParams::default()
        };
        assert!(bad.validate().is_err());
        let neg = SvrParams {
            alpha: -0.1,
            ..SvrParams::default()
        };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn attention_bundle_shapes() {
        let layout = PromptLayout::from_segment_lengths(2, &[2], 8).unwrap();
        let ok = AttentionBundle::new(
            Array2::zeros((4, 16)),
            Array2::zeros((8, 16)),
            Array2::zeros((8, 3)),
            layout.clone(),
        )
        .unwrap();
        assert!((ok.scale() - 0.25).abs() < 1e-15);
        let bad = AttentionBundle::new(
            Array2::zeros((4, 16)),
            Array2::zeros((7, 16)),
            Array2::zeros((8, 3)),
            layout,
        );
        assert!(matches!(bad, Err(Error::ShapeMismatch(_))));
    }
}

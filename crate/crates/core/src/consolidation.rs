//! Prompt consolidation: one prompt carrying the identity and every frame.

use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::model::{check_frame_index, PromptLayout, PromptSet};

/// Splits text into token ids.
///
/// Implemented for any `Fn(&str) -> Vec<u32>`, so closures can be passed directly.
pub trait Tokenizer {
    fn tokenize(&self, text: &str) -> Vec<u32>;
}

impl<F> Tokenizer for F
where
    F: Fn(&str) -> Vec<u32>,
{
    fn tokenize(&self, text: &str) -> Vec<u32> {
        self(text)
    }
}

/// `identity frame_1 ... frame_N`, joined with single spaces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsolidatedPrompt {
    text: String,
    segments: Vec<String>,
    source: PromptSet,
}

impl ConsolidatedPrompt {
    pub fn text(&self) -> &str {
        &self.text
    }

    /// Identity segment first, then one segment per frame.
    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn source(&self) -> &PromptSet {
        &self.source
    }

    pub fn n_frames(&self) -> usize {
        self.segments.len() - 1
    }

    /// Token count of each segment, identity first.
    pub fn segment_token_counts<T: Tokenizer + ?Sized>(&self, tokenizer: &T) -> Vec<usize> {
        self.segments.iter().map(|s| tokenizer.tokenize(s).len()).collect()
    }

    /// Tokens of all segments in order (no SOT/EOT).
    pub fn content_tokens<T: Tokenizer + ?Sized>(&self, tokenizer: &T) -> Vec<u32> {
        self.segments.iter().flat_map(|s| tokenizer.tokenize(s)).collect()
    }
}

pub fn consolidate(set: &PromptSet) -> Result<ConsolidatedPrompt> {
    let segments: Vec<String> = std::iter::once(set.identity_prompt())
        .chain(set.frame_prompts().iter().map(String::as_str))
        .map(|s| s.trim().to_string())
        .collect();
    if let Some(i) = segments.iter().position(String::is_empty) {
        let what = if i == 0 {
            "identity prompt".to_string()
        } else {
            format!("frame prompt {i}")
        };
        return Err(Error::EmptyPrompt(format!("set {:?}: {what}", set.id())));
    }
    Ok(ConsolidatedPrompt {
        text: segments.join(" "),
        segments,
        source: set.clone(),
    })
}

/// Lays out `SOT | identity | frames | EOT...` over `max_tokens` positions,
/// tokenizing each segment on its own.
pub fn compute_layout<T: Tokenizer + ?Sized>(
    cp: &ConsolidatedPrompt,
    tokenizer: &T,
    max_tokens: usize,
) -> Result<PromptLayout> {
    let counts = cp.segment_token_counts(tokenizer);
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyPrompt(format!(
            "segment {i} of set {:?} produced no tokens",
            cp.source().id()
        )));
    }
    PromptLayout::from_segment_lengths(counts[0], &counts[1..], max_tokens)
}

/// Which frames of an `n`-frame story are visible when generating frame `i`
/// with a window of `t` frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowView {
    pub window_size: usize,
    pub frame_index: usize,
    /// 1-based, inclusive.
    pub selected_frames: RangeInclusive<usize>,
    /// 1-based position of `frame_index` inside the window.
    pub express_index: usize,
}

impl WindowView {
    pub fn len(&self) -> usize {
        self.selected_frames.end() + 1 - self.selected_frames.start()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The windowed story `[P0; P_first..P_last]`.
    pub fn apply(&self, set: &PromptSet) -> Result<PromptSet> {
        check_frame_index(*self.selected_frames.end(), set.len())?;
        let frames = set.frame_prompts()[self.selected_frames.start() - 1..*self.selected_frames.end()].to_vec();
        set.with_frames(frames)
    }
}

pub fn sliding_window_view(n: usize, t: usize, i: usize) -> Result<WindowView> {
    if t == 0 {
        return Err(Error::InvalidParameter("window size must be >= 1".into()));
    }
    check_frame_index(i, n)?;
    let (selected_frames, express_index) = if i <= t {
        (1..=t.min(n), i)
    } else {
        (i + 1 - t..=i, t)
    };
    Ok(WindowView {
        window_size: t,
        frame_index: i,
        selected_frames,
        express_index,
    })
}

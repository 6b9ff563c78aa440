//! Prompt-set corpora: one JSON document per line.
//!
//! ```json
//! {"id":"fox-photo","superclass":"animals","identity_prompt":"a photo of a fox","frame_prompts":["wearing a scarf","playing in snow"]}
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::PromptSet;

const TOY20: &str = include_str!("../data/toy20.jsonl");

/// The 20-set toy corpus shipped with the crate.
pub fn bundled_corpus() -> Vec<PromptSet> {
    parse_corpus(TOY20).expect("bundled corpus is valid")
}

pub fn read_corpus(path: &Path) -> Result<Vec<PromptSet>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_corpus(text: &str) -> Result<Vec<PromptSet>> {
    let mut sets = Vec::new();
    let mut ids = BTreeSet::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let set: PromptSet =
            serde_json::from_str(line).map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
        if !ids.insert(set.id().to_string()) {
            return Err(Error::Format(format!("line {}: duplicate set id {:?}", n + 1, set.id())));
        }
        sets.push(set);
    }
    if sets.is_empty() {
        return Err(Error::Format("corpus holds no prompt sets".into()));
    }
    Ok(sets)
}

pub fn write_corpus(path: &Path, sets: &[PromptSet]) -> Result<()> {
    let mut out = String::new();
    for s in sets {
        out.push_str(&serde_json::to_string(s).map_err(|e| Error::json(path, e))?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

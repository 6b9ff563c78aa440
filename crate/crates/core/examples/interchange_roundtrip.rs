//! Writes an embedding in the interchange format, reads it back, and serves
//! it to the pipeline through an `index.json` lookup.

use prompt_story::consolidation::consolidate;
use prompt_story::encoder::{write_index, InterchangeEncoder, InterchangeIndex, StoryEncoder};
use prompt_story::interchange::{read_interchange, read_manifest, write_interchange};
use prompt_story::toy::{seeded_encoder_config, ToyEncoder};
use prompt_story::{PromptSet, Superclass};

fn main() -> prompt_story::Result<()> {
    let root = std::env::temp_dir().join(format!("prompt-story-interchange-{}", std::process::id()));
    let set = PromptSet::new(
        "teapot",
        Superclass::Inanimate,
        "a blue porcelain teapot",
        vec!["on a table".into(), "pouring tea".into()],
    )?;
    let embedding = ToyEncoder::new(seeded_encoder_config(0))?.encode_set(&set)?;

    let dir = root.join("teapot/single");
    write_interchange(&embedding, &dir)?;
    let manifest = read_manifest(&dir)?;
    println!("{}: {}x{} {} from {:?}", dir.display(), manifest.rows, manifest.cols, manifest.dtype, manifest.encoder_tag);

    let back = read_interchange(&dir)?;
    let max_err = (back.data() - embedding.data()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    println!("max f32 rounding error {max_err:.2e}");

    let mut index = InterchangeIndex::default();
    index.entries.insert(consolidate(&set)?.text().to_string(), "teapot/single".into());
    write_index(&root, &index)?;
    let served = InterchangeEncoder::open(&root)?.encode(&set)?;
    println!("served layout matches: {}", served.layout() == embedding.layout());

    std::fs::remove_dir_all(&root).map_err(|e| prompt_story::Error::Io { path: root.clone(), source: e })?;
    Ok(())
}

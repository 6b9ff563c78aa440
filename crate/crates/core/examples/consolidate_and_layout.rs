//! Joins an identity prompt and its frame prompts into one prompt and shows
//! which token rows each segment occupies.

use prompt_story::consolidation::{compute_layout, consolidate};
use prompt_story::toy::HashTokenizer;
use prompt_story::{PromptSet, Superclass};

fn main() -> prompt_story::Result<()> {
    let set = PromptSet::new(
        "kitten",
        Superclass::Animals,
        "A watercolor of a cute kitten",
        vec![
            "in a garden".into(),
            "in a superhero cape".into(),
            "wearing a bell".into(),
        ],
    )?;
    let cp = consolidate(&set)?;
    println!("prompt: {:?}", cp.text());

    let layout = compute_layout(&cp, &HashTokenizer::new(4096), 32)?;
    println!("sot      {}", layout.sot());
    println!("identity {}", layout.identity());
    for (i, span) in layout.frames().iter().enumerate() {
        println!("frame {}  {span}  {:?}", i + 1, set.frame(i + 1)?);
    }
    println!("eot      {}", layout.eot());
    Ok(())
}

//! Frame-embedding spread with one consolidated prompt versus one prompt per
//! frame, and frame-feature spread with and without the attention copy.

use prompt_story::analysis::{
    frame_feature_distance_report, single_vs_multi_report, FeatureGroup, Pooling, MULTI_PROMPT, SINGLE_PROMPT,
};
use prompt_story::corpus::bundled_corpus;
use prompt_story::toy::{run_story, seeded_encoder_config, Mode, StoryConfig, ToyEncoder};

fn main() -> prompt_story::Result<()> {
    let corpus = bundled_corpus();
    let encoder = ToyEncoder::new(seeded_encoder_config(0))?;

    let report = single_vs_multi_report(&corpus, &encoder, Pooling::Mean)?;
    println!(
        "embedding spread: single {:.4}, multi {:.4}, single wins on {:.0}% of sets",
        report.method_mean(SINGLE_PROMPT).unwrap(),
        report.method_mean(MULTI_PROMPT).unwrap(),
        100.0 * report.win_rate.as_ref().unwrap().rate
    );

    let mut groups = Vec::new();
    for set in &corpus {
        for mode in [Mode::MultiPromptBaseline, Mode::Svr, Mode::SvrIpca] {
            let run = run_story(set, &encoder, &StoryConfig::seeded(mode, 0))?;
            groups.push(FeatureGroup {
                set_id: set.id().to_string(),
                method: mode.to_string(),
                frames: run.frames.iter().map(|f| f.flatten()).collect(),
            });
        }
    }
    let report = frame_feature_distance_report(&groups)?;
    println!("\nframe-feature spread, most consistent first:");
    for m in &report.ranking {
        println!("  {:<22} {:.4}", m.method, m.mean_distance);
    }
    println!(
        "svr+ipca <= svr on {:.0}% of sets",
        100.0 * report.win_rate_between("svr+ipca", "svr", true)?
    );
    Ok(())
}

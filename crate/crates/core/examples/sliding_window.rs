//! Which frames share a prompt when a long story is split into windows.

use prompt_story::consolidation::sliding_window_view;

fn main() -> prompt_story::Result<()> {
    let (n, t) = (14, 5);
    println!("{n} frames, window {t}");
    for i in 1..=n {
        let v = sliding_window_view(n, t, i)?;
        println!(
            "frame {i:>2}: prompt frames {:>2}..={:<2} express position {}",
            v.selected_frames.start(),
            v.selected_frames.end(),
            v.express_index
        );
    }
    Ok(())
}

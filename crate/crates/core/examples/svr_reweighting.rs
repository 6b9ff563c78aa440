//! Expresses one frame and suppresses the others, with singular-value
//! reweighting and with plain row scaling for comparison.

use ndarray::s;
use prompt_story::reweighting::{npr_reweight, svr_pipeline, svr_plus_value, svr_minus_value};
use prompt_story::toy::{seeded_encoder_config, ToyEncoder};
use prompt_story::{PromptSet, Superclass, SvrParams};

fn norm(rows: ndarray::ArrayView2<'_, f64>) -> f64 {
    rows.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn main() -> prompt_story::Result<()> {
    let params = SvrParams::default();
    println!("sigma 3.0 expressed  -> {:.6}", svr_plus_value(3.0, &params));
    println!("sigma 2.0 suppressed -> {:.6}", svr_minus_value(2.0, &params));

    let set = PromptSet::new(
        "fox",
        Superclass::Animals,
        "a photo of a fox",
        vec!["wearing a scarf".into(), "playing in snow".into(), "at the river".into()],
    )?;
    let encoder = ToyEncoder::new(seeded_encoder_config(0))?;
    let c = encoder.encode_set(&set)?;
    let express = 2;

    let svr = svr_pipeline(&c, express, &params)?;
    let npr = npr_reweight(&c, express, &params)?;
    println!("\nrow-block norms (original / svr / npr):");
    let mut spans: Vec<(String, _)> = vec![("identity".into(), c.layout().identity())];
    for (k, span) in c.layout().frames().iter().enumerate() {
        spans.push((format!("frame {}", k + 1), *span));
    }
    spans.push(("eot".into(), c.layout().eot()));
    for (name, span) in spans {
        let r = s![span.range(), ..];
        println!(
            "{name:<9} {:>8.3} {:>8.3} {:>8.3}",
            norm(c.data().slice(r)),
            norm(svr.data().slice(r)),
            norm(npr.data().slice(r))
        );
    }
    Ok(())
}

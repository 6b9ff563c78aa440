//! Cross-attention with an appended, frame-masked copy of the keys and values.

use ndarray::array;
use prompt_story::ipca::{attention, ipca_attention, FilteredKv};

fn main() -> prompt_story::Result<()> {
    let q = array![[1.0]];
    let k = array![[0.0], [1.0], [2.0]];
    // Token 2 is a frame token: zeroed in the copy and masked out.
    let filtered = FilteredKv {
        keys: array![[0.0], [1.0], [0.0]],
        values: array![[0.0], [1.0], [0.0]],
        column_mask: array![1.0, 1.0, 0.0],
    };
    let plain = attention(q.view(), k.view(), k.view(), 1.0)?;
    let ipca = ipca_attention(q.view(), k.view(), k.view(), &filtered, 1.0, -1e9)?;
    println!("plain weights: {:.5}", plain.weights.row(0));
    println!("ipca weights:  {:.5}", ipca.weights.row(0));
    println!("plain output {:.5}, ipca output {:.5}", plain.output[[0, 0]], ipca.output[[0, 0]]);
    Ok(())
}

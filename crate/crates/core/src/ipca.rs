//! Identity-preserving cross-attention.
//!
//! The key/value matrices are extended with a second copy built from the
//! embedding *before* singular-value reweighting, in which every frame token
//! is zeroed and identity tokens are randomly dropped. Columns of that copy
//! that belong to frame tokens are additionally masked out of the softmax, so
//! the appended half carries identity semantics only.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PromptLayout;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpcaConfig {
    /// Probability of zeroing each identity-token row of the filtered copy.
    pub dropout_rate: f64,
    /// Stand-in for `ln(0)` in the additive attention mask.
    pub neg_inf_substitute: f64,
    pub rng_seed: u64,
}

impl Default for IpcaConfig {
    fn default() -> Self {
        Self {
            dropout_rate: 0.5,
            neg_inf_substitute: -1e9,
            rng_seed: 0,
        }
    }
}

impl IpcaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidParameter(format!(
                "dropout_rate must be in [0, 1], got {}",
                self.dropout_rate
            )));
        }
        if !self.neg_inf_substitute.is_finite() || self.neg_inf_substitute >= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "neg_inf_substitute must be a finite negative number, got {}",
                self.neg_inf_substitute
            )));
        }
        Ok(())
    }
}

/// The identity-filtered key/value copy and its column mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredKv {
    pub keys: Array2<f64>,
    pub values: Array2<f64>,
    /// 0 at frame-token columns, 1 elsewhere.
    pub column_mask: Array1<f64>,
}

/// 0 at every frame-token position, 1 at SOT, identity and EOT positions.
pub fn frame_column_mask(layout: &PromptLayout) -> Array1<f64> {
    let mut mask = Array1::ones(layout.total_tokens());
    for span in layout.frames() {
        mask.slice_mut(s![span.range()]).fill(0.0);
    }
    mask
}

/// Builds `K̄`/`V̄` from keys and values projected from the pre-reweighting embedding.
///
/// Frame rows are zeroed; each identity row is zeroed with probability
/// `cfg.dropout_rate`, drawing one uniform sample per identity token from `rng`.
pub fn build_filtered_kv<R: Rng + ?Sized>(
    pre_svr_keys: ArrayView2<'_, f64>,
    pre_svr_values: ArrayView2<'_, f64>,
    layout: &PromptLayout,
    cfg: &IpcaConfig,
    rng: &mut R,
) -> Result<FilteredKv> {
    cfg.validate()?;
    let m = layout.total_tokens();
    if pre_svr_keys.nrows() != m || pre_svr_values.nrows() != m {
        return Err(Error::ShapeMismatch(format!(
            "keys ({}) and values ({}) must have {m} rows",
            pre_svr_keys.nrows(),
            pre_svr_values.nrows()
        )));
    }
    let mut keys = pre_svr_keys.to_owned();
    let mut values = pre_svr_values.to_owned();
    for span in layout.frames() {
        keys.slice_mut(s![span.range(), ..]).fill(0.0);
        values.slice_mut(s![span.range(), ..]).fill(0.0);
    }
    for row in layout.identity().range() {
        if rng.random::<f64>() < cfg.dropout_rate {
            keys.row_mut(row).fill(0.0);
            values.row_mut(row).fill(0.0);
        }
    }
    Ok(FilteredKv {
        keys,
        values,
        column_mask: frame_column_mask(layout),
    })
}

/// Attention weights (H×columns) and the output features (H×d_v).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub weights: Array2<f64>,
    pub output: Array2<f64>,
}

/// Plain scaled dot-product attention.
pub fn attention(
    queries: ArrayView2<'_, f64>,
    keys: ArrayView2<'_, f64>,
    values: ArrayView2<'_, f64>,
    scale: f64,
) -> Result<AttentionOutput> {
    check_qkv(queries, keys, values)?;
    let mut logits = queries.dot(&keys.t()) * scale;
    softmax_rows(&mut logits)?;
    let output = logits.dot(&values);
    Ok(AttentionOutput {
        weights: logits,
        output,
    })
}

/// Attention over `[K̃; K̄]` and `[Ṽ; V̄]`, with `ln(column_mask)` added to the
/// logits of the appended half (`ln 0` replaced by `neg_inf`).
pub fn ipca_attention(
    queries: ArrayView2<'_, f64>,
    keys: ArrayView2<'_, f64>,
    values: ArrayView2<'_, f64>,
    filtered: &FilteredKv,
    scale: f64,
    neg_inf: f64,
) -> Result<AttentionOutput> {
    check_qkv(queries, keys, values)?;
    check_qkv(queries, filtered.keys.view(), filtered.values.view())?;
    let m = keys.nrows();
    if filtered.keys.nrows() != m || filtered.column_mask.len() != m || filtered.values.ncols() != values.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "filtered copy is {}x{} with a {}-entry mask; expected {m} rows and {} value columns",
            filtered.keys.nrows(),
            filtered.values.ncols(),
            filtered.column_mask.len(),
            values.ncols()
        )));
    }
    let k_cat = concatenate(Axis(0), &[keys, filtered.keys.view()]).expect("same key width");
    let v_cat = concatenate(Axis(0), &[values, filtered.values.view()]).expect("same value width");

    let mut logits = queries.dot(&k_cat.t()) * scale;
    let penalty = filtered
        .column_mask
        .mapv(|w| if w > 0.0 { w.ln() } else { neg_inf });
    logits
        .slice_mut(s![.., m..])
        .zip_mut_with(&penalty.view().insert_axis(Axis(0)), |l, p| *l += p);
    softmax_rows(&mut logits)?;
    let output = logits.dot(&v_cat);
    Ok(AttentionOutput {
        weights: logits,
        output,
    })
}

fn check_qkv(q: ArrayView2<'_, f64>, k: ArrayView2<'_, f64>, v: ArrayView2<'_, f64>) -> Result<()> {
    if q.ncols() != k.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "query width {} != key width {}",
            q.ncols(),
            k.ncols()
        )));
    }
    if k.nrows() != v.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} keys but {} values",
            k.nrows(),
            v.nrows()
        )));
    }
    if k.nrows() == 0 {
        return Err(Error::ShapeMismatch("attention over zero keys".into()));
    }
    Ok(())
}

fn softmax_rows(logits: &mut Array2<f64>) -> Result<()> {
    for (i, mut row) in logits.rows_mut().into_iter().enumerate() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        if !max.is_finite() {
            return Err(Error::NonFinite { row: i, col: 0 });
        }
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout16() -> PromptLayout {
        PromptLayout::from_segment_lengths(5, &[3, 4], 16).unwrap()
    }

    fn ramp(m: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_fn((m, d), |(i, j)| 1.0 + i as f64 + 0.1 * j as f64)
    }

    #[test]
    fn no_dropout_keeps_identity() {
        let cfg = IpcaConfig {
            dropout_rate: 0.0,
            ..Default::default()
        };
        let k = ramp(16, 4);
        let f = build_filtered_kv(k.view(), k.view(), &layout16(), &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(f.keys.slice(s![1..6, ..]), k.slice(s![1..6, ..]));
        assert!(f.keys.slice(s![6..13, ..]).iter().all(|&v| v == 0.0));
        assert_eq!(f.keys.slice(s![13.., ..]), k.slice(s![13.., ..]));
        assert_eq!(f.values.row(0), k.row(0));
    }

    #[test]
    fn full_dropout_zeroes_identity() {
        let cfg = IpcaConfig {
            dropout_rate: 1.0,
            ..Default::default()
        };
        let k = ramp(16, 4);
        let f = build_filtered_kv(k.view(), k.view(), &layout16(), &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(f.keys.slice(s![1..13, ..]).iter().all(|&v| v == 0.0));
        assert!(f.values.slice(s![1..13, ..]).iter().all(|&v| v == 0.0));
        assert_eq!(f.keys.row(0), k.row(0));
    }

    #[test]
    fn mask_zeros_at_frame_columns() {
        let mask = frame_column_mask(&layout16());
        let zeros: Vec<usize> = mask.iter().enumerate().filter(|(_, &v)| v == 0.0).map(|(i, _)| i).collect();
        assert_eq!(zeros, (6..13).collect::<Vec<_>>());
    }

    #[test]
    fn dropout_is_seeded() {
        let cfg = IpcaConfig::default();
        let k = ramp(16, 4);
        let a = build_filtered_kv(k.view(), k.view(), &layout16(), &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = build_filtered_kv(k.view(), k.view(), &layout16(), &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_mismatch() {
        let k = ramp(15, 4);
        let res = build_filtered_kv(k.view(), k.view(), &layout16(), &IpcaConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(res, Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn hand_computed_six_columns() {
        let q = array![[1.0]];
        let k = array![[0.0], [1.0], [2.0]];
        let filtered = FilteredKv {
            keys: array![[0.0], [1.0], [0.0]],
            values: array![[0.0], [1.0], [0.0]],
            column_mask: array![1.0, 1.0, 0.0],
        };
        let out = ipca_attention(q.view(), k.view(), k.view(), &filtered, 1.0, -1e9).unwrap();
        let e = std::f64::consts::E;
        let z = 2.0 + 2.0 * e + e * e;
        let expected = [1.0 / z, e / z, e * e / z, 1.0 / z, e / z, 0.0];
        for (w, x) in out.weights.row(0).iter().zip(expected) {
            assert!((w - x).abs() < 1e-12, "{w} vs {x}");
        }
    }

    #[test]
    fn duplicated_keys_reduce_to_plain_attention() {
        let q = ramp(3, 4) * 0.1;
        let k = ramp(5, 4) * 0.2;
        let v = ramp(5, 2);
        let filtered = FilteredKv {
            keys: k.clone(),
            values: v.clone(),
            column_mask: Array1::ones(5),
        };
        let a = ipca_attention(q.view(), k.view(), v.view(), &filtered, 0.5, -1e9).unwrap();
        let b = attention(q.view(), k.view(), v.view(), 0.5).unwrap();
        assert!((&a.output - &b.output).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn zero_queries_give_uniform_unmasked_weights() {
        let q = Array2::zeros((2, 3));
        let k = ramp(4, 3);
        let filtered = FilteredKv {
            keys: k.clone(),
            values: k.clone(),
            column_mask: array![1.0, 0.0, 1.0, 1.0],
        };
        let out = ipca_attention(q.view(), k.view(), k.view(), &filtered, 1.0, -1e9).unwrap();
        for row in out.weights.rows() {
            for (c, &w) in row.iter().enumerate() {
                let expected = if c == 5 { 0.0 } else { 1.0 / 7.0 };
                assert!((w - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(IpcaConfig::default().validate().is_ok());
        let bad = IpcaConfig {
            dropout_rate: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}

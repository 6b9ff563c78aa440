//! Singular-value reweighting (SVR+ / SVR-) and naive prompt reweighting.
//!
//! Given the consolidated embedding `[sot, identity, frame_1..frame_N, eot]`
//! and an express frame `j`, SVR+ amplifies the singular values of the stack
//! `[frame_j; eot]` and SVR- attenuates those of `[frame_k; eot]` for every
//! other frame `k`, carrying the rewritten EOT rows from one step to the next.

mod svd;

use std::collections::BTreeSet;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

pub use svd::{thin_svd, SvdFactors};

use crate::error::{Error, Result};
use crate::model::{check_frame_index, EmbeddingMatrix, SvrParams, TokenSpan};

/// How the frames that are not being expressed get attenuated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuppressMode {
    /// One SVR- pass per suppressed frame, in ascending frame order,
    /// each consuming the EOT rows produced by the previous pass.
    #[default]
    Iterative,
    /// A single SVR- pass over all suppressed frames stacked with the EOT rows.
    Joint,
}

/// Maps every singular value of `x` through `f` and rebuilds the matrix.
pub fn reweight_singular_values(x: ArrayView2<'_, f64>, f: impl Fn(f64) -> f64) -> Result<Array2<f64>> {
    let factors = thin_svd(x)?;
    let sigma: Array1<f64> = factors.sigma.mapv(f);
    if let Some(bad) = sigma.iter().find(|v| !v.is_finite()) {
        return Err(Error::NumericFailure(format!("reweighted singular value is {bad}")));
    }
    Ok(factors.reconstruct_with(&sigma))
}

/// `σ ↦ β·exp(α·σ)·σ`
pub fn svr_plus_value(sigma: f64, params: &SvrParams) -> f64 {
    params.beta * (params.alpha * sigma).exp() * sigma
}

/// `σ ↦ β′·exp(−α′·σ)·σ`
pub fn svr_minus_value(sigma: f64, params: &SvrParams) -> f64 {
    params.beta_prime * (-params.alpha_prime * sigma).exp() * sigma
}

/// SVR+: amplify the stack `[frame_j rows; eot rows]`.
pub fn svr_plus(x_exp: ArrayView2<'_, f64>, params: &SvrParams) -> Result<Array2<f64>> {
    reweight_singular_values(x_exp, |s| svr_plus_value(s, params))
}

/// SVR-: attenuate the stack `[frame_k rows; eot rows]`.
pub fn svr_minus(x_sup: ArrayView2<'_, f64>, params: &SvrParams) -> Result<Array2<f64>> {
    reweight_singular_values(x_sup, |s| svr_minus_value(s, params))
}

pub fn svr_pipeline(c: &EmbeddingMatrix, j: usize, params: &SvrParams) -> Result<EmbeddingMatrix> {
    svr_pipeline_with(c, j, params, SuppressMode::Iterative)
}

/// Expresses frame `j` (1-based) and suppresses every other frame.
///
/// SOT and identity rows are copied through untouched.
pub fn svr_pipeline_with(
    c: &EmbeddingMatrix,
    j: usize,
    params: &SvrParams,
    mode: SuppressMode,
) -> Result<EmbeddingMatrix> {
    params.validate()?;
    let layout = c.layout();
    check_frame_index(j, layout.n_frames())?;
    let eot = layout.eot();
    let express = layout.frame(j)?;

    let mut out = c.data().clone();

    let expressed = svr_plus(stack(c, &[express], eot.range()).view(), params)?;
    write_rows(&mut out, &[express], eot, expressed.view());

    let suppressed: Vec<TokenSpan> = (1..=layout.n_frames())
        .filter(|&k| k != j)
        .map(|k| layout.frame(k))
        .collect::<Result<_>>()?;

    match mode {
        SuppressMode::Iterative => {
            for span in suppressed {
                let x = concatenate(Axis(0), &[c.rows(span), out.slice(s![eot.range(), ..])])
                    .expect("row stack shares column count");
                let y = svr_minus(x.view(), params)?;
                write_rows(&mut out, &[span], eot, y.view());
            }
        }
        SuppressMode::Joint => {
            if !suppressed.is_empty() {
                let mut parts: Vec<ArrayView2<'_, f64>> = suppressed.iter().map(|s| c.rows(*s)).collect();
                let current_eot = out.slice(s![eot.range(), ..]).to_owned();
                parts.push(current_eot.view());
                let x = concatenate(Axis(0), &parts).expect("row stack shares column count");
                let y = svr_minus(x.view(), params)?;
                write_rows(&mut out, &suppressed, eot, y.view());
            }
        }
    }
    c.with_data(out)
}

/// Naive prompt reweighting: frame `j` scaled by `npr_up`, every other frame by
/// `npr_down`. SOT, identity and EOT rows are copied through untouched.
pub fn npr_reweight(c: &EmbeddingMatrix, j: usize, params: &SvrParams) -> Result<EmbeddingMatrix> {
    params.validate()?;
    let layout = c.layout();
    check_frame_index(j, layout.n_frames())?;
    let mut out = c.data().clone();
    for (k, span) in layout.frames().iter().enumerate() {
        let factor = if k + 1 == j { params.npr_up } else { params.npr_down };
        if factor != 1.0 {
            out.slice_mut(s![span.range(), ..]).mapv_inplace(|v| v * factor);
        }
    }
    c.with_data(out)
}

/// Runs `f` on every encoder stream independently. Stream tags must be unique.
pub fn per_stream<F>(streams: &[EmbeddingMatrix], f: F) -> Result<Vec<EmbeddingMatrix>>
where
    F: Fn(&EmbeddingMatrix) -> Result<EmbeddingMatrix>,
{
    let mut seen = BTreeSet::new();
    for s in streams {
        if !seen.insert(s.encoder_tag()) {
            return Err(Error::InvalidParameter(format!(
                "duplicate encoder stream {:?}",
                s.encoder_tag()
            )));
        }
    }
    streams.iter().map(f).collect()
}

fn stack(c: &EmbeddingMatrix, spans: &[TokenSpan], eot: std::ops::Range<usize>) -> Array2<f64> {
    let mut parts: Vec<ArrayView2<'_, f64>> = spans.iter().map(|s| c.rows(*s)).collect();
    parts.push(c.data().slice(s![eot, ..]));
    concatenate(Axis(0), &parts).expect("row stack shares column count")
}

/// Scatters a reweighted stack `[spans...; eot]` back into `out`.
fn write_rows(out: &mut Array2<f64>, spans: &[TokenSpan], eot: TokenSpan, stacked: ArrayView2<'_, f64>) {
    let mut cursor = 0;
    for span in spans.iter().chain(std::iter::once(&eot)) {
        let rows = stacked.slice(s![cursor..cursor + span.len(), ..]);
        out.slice_mut(s![span.range(), ..]).assign(&rows);
        cursor += span.len();
    }
    debug_assert_eq!(cursor, stacked.nrows());
}

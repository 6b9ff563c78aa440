mod common;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use prompt_story::reweighting::{thin_svd, svr_minus, svr_pipeline, svr_pipeline_with, svr_plus, SuppressMode};
use prompt_story::{EmbeddingMatrix, PromptLayout, SvrParams};

use common::{rng, singular_values, uniform};

/// `U f(Σ) Vᵀ` computed with nalgebra.
fn oracle_reweight(x: ArrayView2<'_, f64>, f: impl Fn(f64) -> f64) -> Array2<f64> {
    let m = nalgebra::DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[[i, j]]);
    let svd = m.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut sigma = svd.singular_values.clone();
    sigma.iter_mut().for_each(|v| *v = f(*v));
    let y = u * nalgebra::DMatrix::from_diagonal(&sigma) * vt;
    Array2::from_shape_fn((x.nrows(), x.ncols()), |(i, j)| y[(i, j)])
}

fn max_abs_diff(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn thin_svd_matches_nalgebra() {
    for seed in 0..40 {
        let mut r = rng(seed);
        let rows = 1 + (seed as usize % 13);
        let cols = 1 + (seed as usize * 7 % 40);
        let x = uniform(&mut r, rows, cols, 3.0);
        let f = thin_svd(x.view()).unwrap();
        let want = singular_values(x.view());
        for (a, b) in f.sigma.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10, "seed {seed}: {a} vs {b}");
        }
        assert!(max_abs_diff(f.reconstruct().view(), x.view()) < 1e-10);
    }
}

#[test]
fn svr_maps_match_oracle() {
    let p = SvrParams::default();
    for seed in 0..30 {
        let mut r = rng(100 + seed);
        let x = uniform(&mut r, 2 + seed as usize % 9, 48, 2.0);
        let plus = svr_plus(x.view(), &p).unwrap();
        let minus = svr_minus(x.view(), &p).unwrap();
        let want_plus = oracle_reweight(x.view(), |s| p.beta * (p.alpha * s).exp() * s);
        let want_minus = oracle_reweight(x.view(), |s| p.beta_prime * (-p.alpha_prime * s).exp() * s);
        assert!(max_abs_diff(plus.view(), want_plus.view()) < 1e-9);
        assert!(max_abs_diff(minus.view(), want_minus.view()) < 1e-9);
    }
}

fn three_frame_embedding(seed: u64) -> EmbeddingMatrix {
    let layout = PromptLayout::from_segment_lengths(4, &[3, 2, 4], 20).unwrap();
    let data = uniform(&mut rng(seed), 20, 24, 1.5);
    EmbeddingMatrix::new(data, layout, "oracle").unwrap()
}

#[test]
fn chained_suppression_matches_brute_force() {
    let p = SvrParams {
        alpha: 0.3,
        beta: 0.8,
        alpha_prime: 0.2,
        beta_prime: 0.9,
        ..SvrParams::default()
    };
    let plus = |s: f64| p.beta * (p.alpha * s).exp() * s;
    let minus = |s: f64| p.beta_prime * (-p.alpha_prime * s).exp() * s;
    for seed in 0..10 {
        let c = three_frame_embedding(seed);
        let d = c.data();
        let l = c.layout();
        let rows = |span: prompt_story::TokenSpan| d.slice(s![span.range(), ..]).to_owned();
        let (f1, f2, f3, eot) = (l.frame(1).unwrap(), l.frame(2).unwrap(), l.frame(3).unwrap(), l.eot());

        let y = oracle_reweight(concatenate![Axis(0), rows(f2), rows(eot)].view(), plus);
        let (new_f2, eot1) = y.view().split_at(Axis(0), f2.len());
        let y = oracle_reweight(concatenate![Axis(0), rows(f1), eot1].view(), minus);
        let (new_f1, eot2) = y.view().split_at(Axis(0), f1.len());
        let y = oracle_reweight(concatenate![Axis(0), rows(f3), eot2].view(), minus);
        let (new_f3, eot3) = y.view().split_at(Axis(0), f3.len());

        let mut want = d.clone();
        want.slice_mut(s![f1.range(), ..]).assign(&new_f1);
        want.slice_mut(s![f2.range(), ..]).assign(&new_f2);
        want.slice_mut(s![f3.range(), ..]).assign(&new_f3);
        want.slice_mut(s![eot.range(), ..]).assign(&eot3);

        let got = svr_pipeline(&c, 2, &p).unwrap();
        assert!(max_abs_diff(got.data().view(), want.view()) < 1e-9, "seed {seed}");
    }
}

#[test]
fn joint_suppression_matches_brute_force() {
    let p = SvrParams {
        alpha_prime: 0.2,
        beta_prime: 0.9,
        ..SvrParams::default()
    };
    let plus = |s: f64| p.beta * (p.alpha * s).exp() * s;
    let minus = |s: f64| p.beta_prime * (-p.alpha_prime * s).exp() * s;
    let c = three_frame_embedding(77);
    let d = c.data();
    let l = c.layout();
    let rows = |span: prompt_story::TokenSpan| d.slice(s![span.range(), ..]).to_owned();
    let (f1, f2, f3, eot) = (l.frame(1).unwrap(), l.frame(2).unwrap(), l.frame(3).unwrap(), l.eot());

    let y = oracle_reweight(concatenate![Axis(0), rows(f1), rows(eot)].view(), plus);
    let (new_f1, eot1) = y.view().split_at(Axis(0), f1.len());
    let y = oracle_reweight(concatenate![Axis(0), rows(f2), rows(f3), eot1].view(), minus);
    let mut want = d.clone();
    want.slice_mut(s![f1.range(), ..]).assign(&new_f1);
    want.slice_mut(s![f2.start()..eot.end(), ..]).assign(&y);

    let got = svr_pipeline_with(&c, 1, &p, SuppressMode::Joint).unwrap();
    assert!(max_abs_diff(got.data().view(), want.view()) < 1e-9);
}

mod common;

use ndarray::{s, Array2};
use proptest::prelude::*;
use prompt_story::analysis::pairwise_mean_distance;
use prompt_story::consolidation::sliding_window_view;
use prompt_story::interchange::{read_interchange, write_interchange};
use prompt_story::reweighting::{svr_minus, svr_pipeline, svr_plus, thin_svd};
use prompt_story::{EmbeddingMatrix, SvrParams};

use common::{frobenius, random_embedding, rng, singular_values, uniform};

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Array2<f64>> {
    (1..=max_rows, 1..=max_cols, any::<u64>()).prop_map(|(r, c, seed)| uniform(&mut rng(seed), r, c, 2.0))
}

fn params() -> impl Strategy<Value = SvrParams> {
    (0.0..0.5f64, 0.1..2.0f64, 0.0..0.5f64, 0.1..2.0f64).prop_map(|(alpha, beta, alpha_prime, beta_prime)| SvrParams {
        alpha,
        beta,
        alpha_prime,
        beta_prime,
        ..SvrParams::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reweighting_keeps_row_and_column_spaces(x in matrix(8, 24), p in params()) {
        let f = thin_svd(x.view()).unwrap();
        let tol = 1e-8 * (1.0 + frobenius(x.view()));
        for y in [svr_plus(x.view(), &p).unwrap(), svr_minus(x.view(), &p).unwrap()] {
            let onto_rows = y.dot(&f.vt.t()).dot(&f.vt);
            let onto_cols = f.u.dot(&f.u.t()).dot(&y);
            prop_assert!(frobenius((&y - &onto_rows).view()) < tol);
            prop_assert!(frobenius((&y - &onto_cols).view()) < tol);
        }
    }

    #[test]
    fn expression_grows_and_suppression_shrinks(x in matrix(8, 24), a in 0.001..0.5f64) {
        let p = SvrParams { alpha: a, beta: 1.0, alpha_prime: a, beta_prime: 1.0, ..SvrParams::default() };
        let before = singular_values(x.view());
        let up = singular_values(svr_plus(x.view(), &p).unwrap().view());
        let down = singular_values(svr_minus(x.view(), &p).unwrap().view());
        let tol = 1e-9 * before[0].max(1.0);
        for ((b, u), d) in before.iter().zip(&up).zip(&down) {
            prop_assert!(*u >= b - tol);
            prop_assert!(*d <= b + tol);
        }
    }

    #[test]
    fn pipeline_only_touches_frames_and_eot(seed in any::<u64>(), pick in any::<usize>(), p in params()) {
        let c = random_embedding(seed, 32, 16);
        let l = c.layout();
        let j = 1 + pick % l.n_frames();
        let out = svr_pipeline(&c, j, &p).unwrap();
        let fixed = l.sot().start()..l.identity().end();
        prop_assert_eq!(out.data().slice(s![fixed.clone(), ..]), c.data().slice(s![fixed, ..]));
        prop_assert_eq!(out.layout(), l);
    }

    #[test]
    fn distance_ignores_order_and_translation(
        seed in any::<u64>(),
        n in 2usize..8,
        shift in prop::collection::vec(-10.0..10.0f64, 5),
        perm_seed in any::<u64>(),
    ) {
        let pts: Vec<Vec<f64>> = uniform(&mut rng(seed), n, 5, 3.0).rows().into_iter().map(|r| r.to_vec()).collect();
        let base = pairwise_mean_distance(&pts).unwrap();
        prop_assert!(base >= 0.0);

        let mut shuffled = pts.clone();
        let mut r = rng(perm_seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rand::Rng::random_range(&mut r, 0..=i));
        }
        prop_assert!((pairwise_mean_distance(&shuffled).unwrap() - base).abs() < 1e-9);

        let moved: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect();
        prop_assert!((pairwise_mean_distance(&moved).unwrap() - base).abs() < 1e-9);
    }

    #[test]
    fn window_invariants(n in 1usize..80, t in 1usize..20, pick in any::<usize>()) {
        let i = 1 + pick % n;
        let v = sliding_window_view(n, t, i).unwrap();
        prop_assert_eq!(v.len(), t.min(n));
        prop_assert!(*v.selected_frames.start() >= 1 && *v.selected_frames.end() <= n);
        prop_assert!(v.selected_frames.contains(&i));
        prop_assert_eq!(v.selected_frames.start() + v.express_index - 1, i);
    }

    #[test]
    fn interchange_roundtrip(seed in any::<u64>(), d in 1usize..40) {
        let c = random_embedding(seed, 32, d);
        let rounded = c.data().mapv(|v| v as f32 as f64);
        let c = c.with_data(rounded).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_interchange(&c, dir.path()).unwrap();
        let back: EmbeddingMatrix = read_interchange(dir.path()).unwrap();
        prop_assert_eq!(&back, &c);
        let again = tempfile::tempdir().unwrap();
        write_interchange(&back, again.path()).unwrap();
        for f in ["manifest.json", "data.bin"] {
            prop_assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(again.path().join(f)).unwrap());
        }
    }
}

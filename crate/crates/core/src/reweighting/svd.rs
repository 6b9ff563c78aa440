//! Thin SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! The matrices decomposed here are short and wide (a few dozen token rows,
//! hundreds to thousands of columns), so the rotations run over the short
//! side: the input is transposed when it has fewer rows than columns.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

/// `x = u · diag(sigma) · vt`, with `sigma` sorted non-increasing.
///
/// `u` is k×r and `vt` is r×D for r = min(k, D). Columns of `u` (and rows of
/// `vt`) that belong to a zero singular value are left as zero vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: Array2<f64>,
    pub sigma: Array1<f64>,
    pub vt: Array2<f64>,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> Array2<f64> {
        self.reconstruct_with(&self.sigma)
    }

    /// `u · diag(sigma) · vt` with replacement singular values.
    pub fn reconstruct_with(&self, sigma: &Array1<f64>) -> Array2<f64> {
        assert_eq!(sigma.len(), self.sigma.len(), "singular value count");
        let scaled = &self.u * &sigma.view().insert_axis(Axis(0));
        scaled.dot(&self.vt)
    }
}

pub fn thin_svd(x: ArrayView2<'_, f64>) -> Result<SvdFactors> {
    let (k, d) = x.dim();
    if k == 0 || d == 0 {
        return Err(Error::ShapeMismatch(format!("cannot decompose a {k}x{d} matrix")));
    }
    crate::model::check_finite(x)?;

    // Rotate the columns of `b` (tall, m >= n): b = ub · diag(s) · vbᵀ.
    let transposed = k < d;
    let b = if transposed { x.t() } else { x.view() };
    let (m, n) = b.dim();

    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| b.column(j).to_vec()).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let tol = f64::EPSILON * m as f64;
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = gram(&cols[p], &cols[q]);
                if gamma == 0.0 || alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NumericFailure(format!(
            "Jacobi SVD of a {k}x{d} matrix did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));

    // Left factor of `b` is m×n (normalized columns), right factor n×n.
    let mut ub = Array2::<f64>::zeros((m, n));
    let mut vb = Array2::<f64>::zeros((n, n));
    let mut sigma = Array1::<f64>::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        sigma[dst] = s;
        if s > 0.0 {
            for i in 0..m {
                ub[[i, dst]] = cols[src][i] / s;
            }
        }
        for i in 0..n {
            vb[[i, dst]] = vcols[src][i];
        }
    }

    // Map back to x = u · diag(sigma) · vt.
    let (mut u, mut vt) = if transposed {
        (vb, ub.reversed_axes())
    } else {
        (ub, vb.reversed_axes())
    };
    for (j, &s) in sigma.iter().enumerate() {
        if s == 0.0 {
            u.column_mut(j).fill(0.0);
            vt.row_mut(j).fill(0.0);
            continue;
        }
        if needs_flip(u.column(j).iter().copied()) {
            u.column_mut(j).mapv_inplace(|v| -v);
            vt.row_mut(j).mapv_inplace(|v| -v);
        }
    }
    Ok(SvdFactors { u, sigma, vt })
}

fn gram(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let mut aa = 0.0;
    let mut bb = 0.0;
    let mut ab = 0.0;
    for (x, y) in a.iter().zip(b) {
        aa += x * x;
        bb += y * y;
        ab += x * y;
    }
    (aa, bb, ab)
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// True when the first largest-magnitude entry is negative.
fn needs_flip(values: impl Iterator<Item = f64>) -> bool {
    let mut best = 0.0f64;
    for v in values {
        if v.abs() > best.abs() {
            best = v;
        }
    }
    best < 0.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(k: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((k, d), |_| rng.random_range(-1.0..1.0))
    }

    fn rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let num = (a - b).mapv(|v| v * v).sum().sqrt();
        let den = b.mapv(|v| v * v).sum().sqrt();
        num / den
    }

    #[test]
    fn scalar() {
        let f = thin_svd(array![[3.0]].view()).unwrap();
        assert_eq!(f.u, array![[1.0]]);
        assert_eq!(f.sigma, array![3.0]);
        assert_eq!(f.vt, array![[1.0]]);
        let f = thin_svd(array![[-3.0]].view()).unwrap();
        assert_eq!(f.sigma, array![3.0]);
        assert_eq!(f.reconstruct(), array![[-3.0]]);
    }

    #[test]
    fn diagonal() {
        let f = thin_svd(array![[1.0, 0.0], [0.0, 2.0]].view()).unwrap();
        assert_eq!(f.sigma, array![2.0, 1.0]);
    }

    #[test]
    fn random_wide_reconstructs() {
        let x = random(6, 32, 5);
        let f = thin_svd(x.view()).unwrap();
        assert_eq!(f.u.dim(), (6, 6));
        assert_eq!(f.vt.dim(), (6, 32));
        assert!(rel_err(&f.reconstruct(), &x) < 1e-10);
        assert!(f.sigma.windows(2).into_iter().all(|w| w[0] >= w[1]));
    }

    #[test]
    fn random_tall_reconstructs() {
        let x = random(40, 7, 6);
        let f = thin_svd(x.view()).unwrap();
        assert_eq!(f.u.dim(), (40, 7));
        assert_eq!(f.vt.dim(), (7, 7));
        assert!(rel_err(&f.reconstruct(), &x) < 1e-10);
    }

    #[test]
    fn factors_are_orthonormal() {
        let x = random(9, 20, 8);
        let f = thin_svd(x.view()).unwrap();
        let utu = f.u.t().dot(&f.u);
        let vvt = f.vt.dot(&f.vt.t());
        let eye = Array2::<f64>::eye(9);
        assert!((&utu - &eye).iter().all(|v| v.abs() < 1e-12));
        assert!((&vvt - &eye).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_matrix() {
        let f = thin_svd(Array2::<f64>::zeros((3, 5)).view()).unwrap();
        assert!(f.sigma.iter().all(|&s| s == 0.0));
        assert_eq!(f.reconstruct(), Array2::<f64>::zeros((3, 5)));
    }

    #[test]
    fn rank_deficient() {
        let row = random(1, 12, 9);
        let x = ndarray::concatenate![Axis(0), row, row.mapv(|v| 2.0 * v), row.mapv(|v| -v)];
        let f = thin_svd(x.view()).unwrap();
        assert!(f.sigma[1] < 1e-12 && f.sigma[2] < 1e-12);
        assert!(rel_err(&f.reconstruct(), &x) < 1e-12);
    }

    #[test]
    fn sign_convention() {
        let f = thin_svd(random(5, 11, 10).view()).unwrap();
        for j in 0..f.rank() {
            assert!(!needs_flip(f.u.column(j).iter().copied()));
        }
    }

    #[test]
    fn deterministic() {
        let x = random(8, 30, 12);
        assert_eq!(thin_svd(x.view()).unwrap(), thin_svd(x.view()).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(thin_svd(Array2::<f64>::zeros((0, 3)).view()).is_err());
        assert!(matches!(
            thin_svd(array![[1.0, f64::INFINITY]].view()),
            Err(Error::NonFinite { .. })
        ));
    }
}

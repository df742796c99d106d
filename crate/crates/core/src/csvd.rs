//! Classical truncated SVD baseline and the identity-kernel equivalence check.

use nalgebra::{DMatrix, SVD};

use crate::error::{Error, Result};
use crate::sampler::PosteriorChain;

/// First `k` singular triplets, `d` descending.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub d: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut ud = self.u.clone();
        for (j, &dj) in self.d.iter().enumerate() {
            ud.column_mut(j).scale_mut(dj);
        }
        ud * self.v.transpose()
    }
}

/// Rank-`k` SVD of `z`. Each `u_i` is signed so its largest-magnitude entry
/// is positive (first such entry on ties), with `v_i` flipped to match.
pub fn classical_svd(z: &DMatrix<f64>, k: usize) -> Result<TruncatedSvd> {
    let (n, m) = z.shape();
    if k == 0 || k > n.min(m) {
        return Err(Error::input(format!("k = {k} must be in 1..={}", n.min(m))));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("matrix has non-finite entries"));
    }
    let svd = SVD::new(z.clone(), true, true);
    let u_full = svd.u.expect("left vectors requested");
    let vt_full = svd.v_t.expect("right vectors requested");
    let mut u = u_full.columns(0, k).into_owned();
    let mut v = vt_full.rows(0, k).transpose();
    let d: Vec<f64> = svd.singular_values.iter().take(k).copied().collect();
    for j in 0..k {
        let col = u.column(j);
        let mut best = 0;
        for i in 1..n {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    Ok(TruncatedSvd { u, d, v })
}

/// `|cos ∠(a_j, b_j)|` for each column pair. Zero columns give 0.
pub fn column_cosines(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    (0..a.ncols().min(b.ncols()))
        .map(|j| {
            let (x, y) = (a.column(j), b.column(j));
            let denom = x.norm() * y.norm();
            if denom == 0.0 {
                0.0
            } else {
                (x.dot(&y) / denom).abs()
            }
        })
        .collect()
}

/// Per-column similarity between the posterior-mean basis and the C-SVD basis.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceGap {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Compare the posterior mean of `U` and `V` with the rank-`k` SVD of `z`.
pub fn csvd_equivalence_gap(chain: &PosteriorChain, z: &DMatrix<f64>) -> Result<EquivalenceGap> {
    let k = chain.k();
    let (mu, mv) = chain.basis_means()?;
    let svd = classical_svd(z, k)?;
    Ok(EquivalenceGap { u: column_cosines(&mu, &svd.u), v: column_cosines(&mv, &svd.v) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn diagonal_matrix() {
        let z = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let s = classical_svd(&z, 2).unwrap();
        assert!((s.d[0] - 3.0).abs() < 1e-14 && (s.d[1] - 1.0).abs() < 1e-14);
        assert!((s.u.clone() - DMatrix::identity(2, 2)).amax() < 1e-14);
        assert!((s.v.clone() - DMatrix::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn rank_one() {
        let a = nalgebra::DVector::from_vec(vec![0.6, -0.8, 0.0]);
        let b = nalgebra::DVector::from_vec(vec![0.0, 1.0]);
        let z = &a * b.transpose() * 2.0;
        let s = classical_svd(&z, 1).unwrap();
        assert!((s.d[0] - 2.0).abs() < 1e-12);
        // largest-magnitude entry of a is -0.8, so u₁ = -a
        assert!((s.u.column(0) + &a).amax() < 1e-12);
        assert!((s.v.column(0) + &b).amax() < 1e-12);
    }

    #[test]
    fn eckart_young_and_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = DMatrix::from_fn(10, 8, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = classical_svd(&z, 4).unwrap();
        let full = classical_svd(&z, 8).unwrap();
        let discarded: f64 = full.d[4..].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(((&z - s.reconstruct()).norm() - discarded).abs() < 1e-10);
        assert!(s.d.windows(2).all(|w| w[0] >= w[1]));
        assert!(crate::linalg::orthonormality_error(&s.u) < 1e-10);
        assert!(crate::linalg::orthonormality_error(&s.v) < 1e-10);
        let mut ud = s.u.clone();
        for j in 0..4 {
            ud.column_mut(j).scale_mut(s.d[j]);
        }
        assert!((&z * &s.v - ud).amax() < 1e-8);
        assert_eq!(s, classical_svd(&z, 4).unwrap());
    }

    #[test]
    fn rejects_bad_rank() {
        let z = DMatrix::zeros(3, 2);
        assert!(matches!(classical_svd(&z, 3), Err(Error::Input(_))));
        assert!(matches!(classical_svd(&z, 0), Err(Error::Input(_))));
    }

    #[test]
    fn cosines() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, 0.0]);
        assert_eq!(column_cosines(&a, &b), vec![1.0, 0.0]);
    }
}

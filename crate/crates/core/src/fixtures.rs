//! Seeded dataset generators used by the tests, the scaling experiment and
//! the CLI's example files.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::engine::rng;
use crate::error::{Error, Result};
use crate::pca::DataMatrix;

fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Orthonormal columns spanning a random `k`-dimensional subspace of `R^n`.
fn orthonormal(n: usize, k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    gaussian(n, k, rng).qr().q().columns(0, k).into_owned()
}

fn to_data(m: &DMatrix<f64>) -> Result<DataMatrix> {
    let (r, c) = m.shape();
    DataMatrix::new(r, c, m.transpose().as_slice().to_vec())
}

fn check_shape(rows: usize, cols: usize, rank: usize) -> Result<()> {
    if rank == 0 || rank > rows.min(cols) {
        return Err(Error::InvalidInput(format!(
            "rank {rank} impossible for a {rows}×{cols} matrix"
        )));
    }
    Ok(())
}

/// I.i.d. standard normal entries.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Result<DataMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidInput(format!("empty {rows}×{cols} matrix")));
    }
    to_data(&gaussian(rows, cols, &mut rng(seed)))
}

/// `A B` with Gaussian factors of inner dimension `rank`.
pub fn rank_k(rows: usize, cols: usize, rank: usize, seed: u64) -> Result<DataMatrix> {
    check_shape(rows, cols, rank)?;
    let mut r = rng(seed);
    let a = gaussian(rows, rank, &mut r);
    let b = gaussian(rank, cols, &mut r);
    to_data(&(a * b))
}

/// A rank-`rank` matrix plus Gaussian noise scaled so that
/// `‖E‖_F = noise · ‖L‖_F`.
pub fn rank_k_plus_noise(rows: usize, cols: usize, rank: usize, noise: f64, seed: u64) -> Result<DataMatrix> {
    check_shape(rows, cols, rank)?;
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise level {noise} is not a finite non-negative number"
        )));
    }
    let mut r = rng(seed);
    let low = gaussian(rows, rank, &mut r) * gaussian(rank, cols, &mut r);
    let e = gaussian(rows, cols, &mut r);
    let scale = noise * low.norm() / e.norm();
    to_data(&(low + e * scale))
}

/// Two Gaussian clouds of `per_class` points each, centred at `±mean`, with
/// unit per-coordinate spread. Labels are `+1` then `-1`.
pub fn gaussian_classes(per_class: usize, mean: &[f64], seed: u64) -> Result<(DataMatrix, Vec<f64>)> {
    if per_class == 0 || mean.is_empty() {
        return Err(Error::InvalidInput("empty class specification".into()));
    }
    let mut r = rng(seed);
    let dim = mean.len();
    let mut data = Vec::with_capacity(2 * per_class * dim);
    let mut labels = Vec::with_capacity(2 * per_class);
    for (sign, label) in [(1.0, 1.0), (-1.0, -1.0)] {
        for _ in 0..per_class {
            data.extend(mean.iter().map(|m| sign * m + r.sample::<f64, _>(StandardNormal)));
            labels.push(label);
        }
    }
    Ok((DataMatrix::new(2 * per_class, dim, data)?, labels))
}

/// Exact rank-`rank` data whose row 0 has equal coefficients
/// `β_j = 1/sqrt(rank)` on every principal component, with distinct
/// singular values.
///
/// Built as `X = Q diag(s) Vᵀ` with orthonormal `Q`. Row 0 of `Q` is
/// `t_j = κ / s_j` with `‖t‖ = 1/2`; the remaining rows are
/// `W (I − t tᵀ)^{1/2}` for orthonormal `W`, so that `QᵀQ = I`.
pub fn anchored_rank_d(rows: usize, cols: usize, rank: usize, seed: u64) -> Result<DataMatrix> {
    check_shape(rows.saturating_sub(1), cols, rank)?;
    let mut r = rng(seed);
    let s: Vec<f64> = (0..rank)
        .map(|j| (rank - j) as f64 + 0.25 + 0.5 * r.random::<f64>())
        .collect();
    let inv_norm = s.iter().map(|v| v.powi(-2)).sum::<f64>().sqrt();
    let kappa = 0.5 / inv_norm;
    let t = DMatrix::from_fn(rank, 1, |j, _| kappa / s[j]);
    let t_hat = &t / t.norm();
    let shrink = 1.0 - (1.0 - t.norm_squared()).sqrt();
    let root = DMatrix::identity(rank, rank) - &t_hat * t_hat.transpose() * shrink;
    let w = orthonormal(rows - 1, rank, &mut r);
    let mut q = DMatrix::zeros(rows, rank);
    q.row_mut(0).copy_from(&t.transpose());
    q.rows_mut(1, rows - 1).copy_from(&(w * root));
    let v = orthonormal(cols, rank, &mut r);
    let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(s));
    to_data(&(q * sigma * v.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pca::svd_decompose;

    #[test]
    fn rank_k_has_rank_k() {
        let x = rank_k(16, 8, 2, 7).unwrap();
        let m = svd_decompose(&x, 0.95, 0).unwrap();
        assert_eq!(m.rank(), 2);
        assert_eq!(m.selected_dim(), 2);
    }

    #[test]
    fn noise_level_is_relative() {
        let clean = rank_k_plus_noise(16, 8, 2, 0.0, 3).unwrap();
        let m = svd_decompose(&clean, 0.95, 0).unwrap();
        assert_eq!(m.rank(), 2);
        let noisy = rank_k_plus_noise(16, 8, 2, 0.1, 3).unwrap();
        let m = svd_decompose(&noisy, 0.95, 0).unwrap();
        assert_eq!(m.rank(), 8);
        assert!(m.variance_proportions()[2..].iter().sum::<f64>() < 0.02);
    }

    #[test]
    fn anchored_fixture_has_flat_coefficients() {
        for seed in 0..5 {
            let x = anchored_rank_d(16, 8, 4, seed).unwrap();
            let m = svd_decompose(&x, 1.0, 0).unwrap();
            assert_eq!(m.rank(), 4);
            for b in &m.anchor_coefficients(&x)[..4] {
                assert!((b - 0.5).abs() < 1e-12, "{b}");
            }
        }
    }

    #[test]
    fn class_pairs_are_labelled() {
        let (x, z) = gaussian_classes(20, &[4.0, 4.0], 29).unwrap();
        assert_eq!((x.rows(), x.cols()), (40, 2));
        assert_eq!(z.iter().filter(|&&l| l > 0.0).count(), 20);
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(rank_k(8, 4, 2, 1).unwrap(), rank_k(8, 4, 2, 1).unwrap());
        assert_ne!(rank_k(8, 4, 2, 1).unwrap(), rank_k(8, 4, 2, 2).unwrap());
    }
}

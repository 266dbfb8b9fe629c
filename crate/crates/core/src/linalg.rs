//! Dense linear algebra for the small SPD systems that show up in the
//! estimator: a design matrix kept together with its inverse.
//!
//! Matrices are row-major `Vec<f64>` of length `dim * dim`. Dimensions stay
//! in the tens, so nothing here tries to be cache-clever.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure_finite, invalid, Error, Result};

/// Number of Sherman–Morrison updates between full re-factorizations.
pub const REFRESH_PERIOD: usize = 1024;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `m * v` for a row-major `dim x dim` matrix.
pub fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let dim = v.len();
    debug_assert_eq!(m.len(), dim * dim);
    m.chunks_exact(dim).map(|row| dot(row, v)).collect()
}

/// `vᵀ m v`.
pub fn quad_form(m: &[f64], v: &[f64]) -> f64 {
    let dim = v.len();
    let mut acc = 0.0;
    for (i, row) in m.chunks_exact(dim).enumerate() {
        acc += v[i] * dot(row, v);
    }
    acc
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = a`.
pub fn cholesky(a: &[f64], dim: usize) -> Result<Vec<f64>> {
    if a.len() != dim * dim {
        return Err(invalid("matrix size does not match dimension"));
    }
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = a[i * dim + j];
            for k in 0..j {
                sum -= l[i * dim + k] * l[j * dim + k];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return Err(Error::Numeric(format!(
                        "matrix is not positive definite (pivot {i} = {sum:e})"
                    )));
                }
                l[i * dim + i] = sum.sqrt();
            } else {
                l[i * dim + j] = sum / l[j * dim + j];
            }
        }
    }
    Ok(l)
}

/// Inverse of an SPD matrix through its Cholesky factor. The result is
/// symmetrized exactly.
pub fn spd_inverse(a: &[f64], dim: usize) -> Result<Vec<f64>> {
    let l = cholesky(a, dim)?;
    Ok(inverse_from_cholesky(&l, dim))
}

fn inverse_from_cholesky(l: &[f64], dim: usize) -> Vec<f64> {
    // L^{-1} by forward substitution, then inv = L^{-T} L^{-1}.
    let mut linv = vec![0.0; dim * dim];
    for col in 0..dim {
        for i in col..dim {
            let mut sum = if i == col { 1.0 } else { 0.0 };
            for k in col..i {
                sum -= l[i * dim + k] * linv[k * dim + col];
            }
            linv[i * dim + col] = sum / l[i * dim + i];
        }
    }
    let mut inv = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = 0.0;
            for k in i..dim {
                sum += linv[k * dim + i] * linv[k * dim + j];
            }
            inv[i * dim + j] = sum;
            inv[j * dim + i] = sum;
        }
    }
    inv
}

fn log_det_from_cholesky(l: &[f64], dim: usize) -> f64 {
    (0..dim).map(|i| 2.0 * l[i * dim + i].ln()).sum()
}

/// Numerical rank of a set of row vectors (Gaussian elimination with partial
/// pivoting; pivots below `tol` count as zero).
pub fn rank(rows: &[Vec<f64>], dim: usize, tol: f64) -> usize {
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let mut rank = 0;
    for col in 0..dim {
        if rank == m.len() {
            break;
        }
        let pivot = (rank..m.len())
            .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
            .unwrap();
        if m[pivot][col].abs() <= tol {
            continue;
        }
        m.swap(rank, pivot);
        let head = m[rank].clone();
        for row in m.iter_mut().skip(rank + 1) {
            let factor = row[col] / head[col];
            if factor != 0.0 {
                for (x, h) in row.iter_mut().zip(&head).skip(col) {
                    *x -= factor * h;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// A symmetric positive-definite matrix together with its inverse.
///
/// The inverse is maintained through Sherman–Morrison rank-one updates and
/// recomputed from a Cholesky factorization every [`REFRESH_PERIOD`] updates
/// so that `mat * inv` stays within `1e-8` of the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct PdMatrix {
    dim: usize,
    mat: Vec<f64>,
    inv: Vec<f64>,
    log_det: f64,
    update_count: usize,
}

impl PdMatrix {
    /// `nu * I`.
    pub fn scaled_identity(dim: usize, nu: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(invalid(format!("regularizer must be positive, got {nu}")));
        }
        let mut mat = vec![0.0; dim * dim];
        let mut inv = vec![0.0; dim * dim];
        for i in 0..dim {
            mat[i * dim + i] = nu;
            inv[i * dim + i] = 1.0 / nu;
        }
        Ok(Self {
            dim,
            mat,
            inv,
            log_det: dim as f64 * nu.ln(),
            update_count: 0,
        })
    }

    /// Wraps an arbitrary SPD matrix, factorizing it once.
    pub fn from_matrix(dim: usize, mat: Vec<f64>) -> Result<Self> {
        if mat.len() != dim * dim || dim == 0 {
            return Err(invalid("matrix size does not match dimension"));
        }
        ensure_finite(&mat, "matrix")?;
        for i in 0..dim {
            for j in 0..i {
                if (mat[i * dim + j] - mat[j * dim + i]).abs() > 1e-10 {
                    return Err(invalid("matrix is not symmetric"));
                }
            }
        }
        let l = cholesky(&mat, dim)?;
        Ok(Self {
            dim,
            inv: inverse_from_cholesky(&l, dim),
            log_det: log_det_from_cholesky(&l, dim),
            mat,
            update_count: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mat(&self) -> &[f64] {
        &self.mat
    }

    pub fn inv(&self) -> &[f64] {
        &self.inv
    }

    /// `log det(mat)`, tracked incrementally through the matrix determinant lemma.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn update_count(&self) -> usize {
        self.update_count
    }

    /// `mat += v vᵀ`, with the inverse updated by Sherman–Morrison.
    pub fn rank_one_update(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(invalid("update vector has wrong dimension"));
        }
        ensure_finite(v, "update vector")?;
        let dim = self.dim;
        let w = mat_vec(&self.inv, v);
        let denom = 1.0 + dot(v, &w);
        for i in 0..dim {
            for j in 0..dim {
                self.mat[i * dim + j] += v[i] * v[j];
                self.inv[i * dim + j] -= w[i] * w[j] / denom;
            }
        }
        self.log_det += denom.ln();
        self.update_count += 1;
        if self.update_count >= REFRESH_PERIOD {
            self.refresh()?;
        }
        Ok(())
    }

    /// Recomputes the inverse and log-determinant from scratch.
    pub fn refresh(&mut self) -> Result<()> {
        let l = cholesky(&self.mat, self.dim)?;
        self.inv = inverse_from_cholesky(&l, self.dim);
        self.log_det = log_det_from_cholesky(&l, self.dim);
        self.update_count = 0;
        Ok(())
    }

    /// `vᵀ inv v`, the squared norm of `v` weighted by the inverse.
    pub fn quad_form_inv(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.dim);
        quad_form(&self.inv, v).max(0.0)
    }

    /// `uᵀ mat u`.
    pub fn mahalanobis_sq(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.dim);
        quad_form(&self.mat, u).max(0.0)
    }

    /// `inv * v`.
    pub fn inv_mul(&self, v: &[f64]) -> Vec<f64> {
        mat_vec(&self.inv, v)
    }

    /// `mean + scale * C z` with `C Cᵀ = inv` and `z` standard normal.
    pub fn sample_gaussian<R: Rng + ?Sized>(
        &self,
        mean: &[f64],
        scale: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if !(scale >= 0.0) {
            return Err(invalid(format!("scale must be nonnegative, got {scale}")));
        }
        if mean.len() != self.dim {
            return Err(invalid("mean has wrong dimension"));
        }
        if scale == 0.0 {
            return Ok(mean.to_vec());
        }
        let c = cholesky(&self.inv, self.dim)?;
        let z: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        let dim = self.dim;
        Ok((0..dim)
            .map(|i| mean[i] + scale * dot(&c[i * dim..i * dim + i + 1], &z[..=i]))
            .collect())
    }

    /// Largest entry of `|mat * inv - I|`.
    pub fn inverse_residual(&self) -> f64 {
        let dim = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let mut s = 0.0;
                for k in 0..dim {
                    s += self.mat[i * dim + k] * self.inv[k * dim + j];
                }
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }
}

//! Least-squares building blocks shared by the regression and graph code.

use nalgebra::{DMatrix, DVector};

use crate::error::{CrnError, Result};

/// Minimal-norm solution of `a x ≈ b` via the SVD, discarding singular
/// values below `cutoff * σ_max`. Returns the solution and the rank used.
pub fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>, cutoff: f64) -> Result<(DVector<f64>, usize)> {
    if a.ncols() == 0 {
        return Ok((DVector::zeros(0), 0));
    }
    if a.nrows() != b.len() {
        return Err(CrnError::invalid("sparse_recovery", "right-hand side length mismatch"));
    }
    let svd = a.clone().svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(CrnError::numerical("sparse_recovery", "SVD did not converge")),
    };
    let smax = svd.singular_values.max();
    let mut x = DVector::zeros(a.ncols());
    let mut rank = 0;
    if smax > 0.0 && smax.is_finite() {
        for (i, &s) in svd.singular_values.iter().enumerate() {
            if s > cutoff * smax {
                rank += 1;
                let coef = u.column(i).dot(b) / s;
                x.axpy(coef, &vt.row(i).transpose(), 1.0);
            }
        }
    } else if !smax.is_finite() {
        return Err(CrnError::numerical("sparse_recovery", "non-finite regression matrix"));
    }
    Ok((x, rank))
}

/// Singular values in decreasing order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    singular_values(a).first().copied().unwrap_or(0.0)
}

/// A row-wise regression `y_r ≈ c_r A` (targets `Y`: `rows x T`, regression
/// matrix `A`: `N x T`) compressed through a thin QR factorisation of `Aᵀ`.
///
/// With `Aᵀ = Q R`, every restricted problem on a column subset `S` reduces
/// to the `N x |S|` system `R[:, S] c_Sᵀ ≈ (y Q)ᵀ`; the part of `y`
/// orthogonal to the range of `Q` is a constant residual contribution.
#[derive(Debug, Clone)]
pub struct CompressedLs {
    r: DMatrix<f64>,
    projected: DMatrix<f64>,
    orth_residual: Vec<f64>,
    pub cutoff: f64,
}

impl CompressedLs {
    pub fn new(targets: &DMatrix<f64>, regression: &DMatrix<f64>, cutoff: f64) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff < 1.0) {
            return Err(CrnError::invalid("sparse_recovery", format!("svd cutoff {cutoff} outside (0, 1)")));
        }
        if targets.ncols() != regression.ncols() {
            return Err(CrnError::invalid(
                "sparse_recovery",
                format!("targets have {} columns, regression matrix {}", targets.ncols(), regression.ncols()),
            ));
        }
        if regression.iter().any(|v| !v.is_finite()) || targets.iter().any(|v| !v.is_finite()) {
            return Err(CrnError::numerical("sparse_recovery", "non-finite regression data"));
        }
        let (n, t) = regression.shape();
        if t >= n {
            let qr = regression.transpose().qr();
            let q = qr.q();
            let r = qr.r();
            let projected = targets * &q;
            let fitted = &projected * q.transpose();
            let orth_residual = (0..targets.nrows())
                .map(|i| (targets.row(i) - fitted.row(i)).norm_squared())
                .collect();
            Ok(CompressedLs { r, projected, orth_residual, cutoff })
        } else {
            // fewer samples than unknowns: keep the problem as is
            Ok(CompressedLs {
                r: regression.transpose(),
                projected: targets.clone(),
                orth_residual: vec![0.0; targets.nrows()],
                cutoff,
            })
        }
    }

    pub fn unknowns(&self) -> usize {
        self.r.ncols()
    }

    pub fn rows(&self) -> usize {
        self.projected.nrows()
    }

    /// Singular values of the full regression matrix.
    pub fn singular_values(&self) -> Vec<f64> {
        singular_values(&self.r)
    }

    /// Least-squares coefficients of row `row` restricted to `support`
    /// (all other entries zero) and the squared residual.
    pub fn solve_row(&self, row: usize, support: &[usize]) -> Result<(Vec<f64>, f64)> {
        let mut coeffs = vec![0.0; self.unknowns()];
        let rhs = self.projected.row(row).transpose();
        if support.is_empty() {
            return Ok((coeffs, self.orth_residual[row] + rhs.norm_squared()));
        }
        let sub = self.r.select_columns(support);
        let (x, _) = pinv_solve(&sub, &rhs, self.cutoff)?;
        let res = (&rhs - &sub * &x).norm_squared() + self.orth_residual[row];
        for (&j, &v) in support.iter().zip(x.iter()) {
            coeffs[j] = v;
        }
        Ok((coeffs, res))
    }

    /// Unrestricted minimal-norm solution for every row and the total
    /// squared residual.
    pub fn solve_all(&self) -> Result<(DMatrix<f64>, f64)> {
        let all: Vec<usize> = (0..self.unknowns()).collect();
        let mut c = DMatrix::zeros(self.rows(), self.unknowns());
        let mut total = 0.0;
        for i in 0..self.rows() {
            let (coeffs, res) = self.solve_row(i, &all)?;
            c.row_mut(i).copy_from_slice(&coeffs);
            total += res;
        }
        Ok((c, total))
    }
}

/// Number of singular values above `cutoff * σ_max`.
pub fn numerical_rank(singular_values: &[f64], cutoff: f64) -> usize {
    let smax = singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    singular_values.iter().filter(|&&s| s > cutoff * smax).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_minimal_norm() {
        // x1 + x2 = 2 has minimal-norm solution (1, 1)
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let (x, rank) = pinv_solve(&a, &DVector::from_vec(vec![2.0]), 1e-10).unwrap();
        assert_eq!(rank, 1);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn compressed_matches_direct_solution() {
        let a = DMatrix::from_fn(4, 40, |r, c| ((r + 1) as f64 * (c as f64 * 0.1 + 0.3)).cos());
        let c_true = DMatrix::from_row_slice(2, 4, &[1.0, -2.0, 0.0, 0.5, 0.0, 0.0, 3.0, -1.0]);
        let y = &c_true * &a;
        let ls = CompressedLs::new(&y, &a, 1e-10).unwrap();
        let (c, res) = ls.solve_all().unwrap();
        assert!((&c - &c_true).amax() < 1e-10);
        assert!(res < 1e-18);
        let (row, _) = ls.solve_row(1, &[2, 3]).unwrap();
        assert!((row[2] - 3.0).abs() < 1e-10 && row[0] == 0.0);
    }

    #[test]
    fn rank_counting() {
        assert_eq!(numerical_rank(&[3.0, 1.0, 1e-12], 1e-10), 2);
        assert_eq!(numerical_rank(&[0.0, 0.0], 1e-10), 0);
    }

    #[test]
    fn cutoff_is_validated() {
        let a = DMatrix::from_element(2, 3, 1.0);
        assert!(CompressedLs::new(&DMatrix::zeros(1, 3), &a, 0.0).is_err());
        assert!(CompressedLs::new(&DMatrix::zeros(1, 3), &a, 1.0).is_err());
        assert!(CompressedLs::new(&DMatrix::zeros(1, 4), &a, 1e-10).is_err());
    }
}

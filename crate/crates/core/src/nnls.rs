//! Nonnegative least squares `min ||A x - b||, x >= 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::pinv_solve;

#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Lawson–Hanson active-set method up to 50 unknowns, projected gradient
/// beyond.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<NnlsSolution> {
    if a.ncols() > 50 {
        Ok(projected_gradient(a, b, 100_000, 1e-14))
    } else {
        lawson_hanson(a, b)
    }
}

pub fn lawson_hanson(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<NnlsSolution> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    if n == 0 {
        return Ok(NnlsSolution { residual: b.norm(), x, iterations: 0 });
    }
    let scale = a.amax().max(f64::MIN_POSITIVE) * b.amax().max(a.amax()).max(f64::MIN_POSITIVE);
    let tol = 10.0 * f64::EPSILON * scale * (a.nrows().max(n) as f64);
    let mut passive = vec![false; n];
    let mut iterations = 0;
    let max_outer = 3 * n + 10;

    loop {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        if iterations >= max_outer {
            break;
        }
        iterations += 1;
        passive[j] = true;

        loop {
            let idx: Vec<usize> = (0..n).filter(|&k| passive[k]).collect();
            let sub = a.select_columns(&idx);
            let (z_sub, _) = pinv_solve(&sub, b, 1e-12)?;
            if z_sub.iter().all(|&v| v > 0.0) {
                for (&k, &v) in idx.iter().zip(z_sub.iter()) {
                    x[k] = v;
                }
                for k in (0..n).filter(|k| !passive[*k]) {
                    x[k] = 0.0;
                }
                break;
            }
            // step back towards the feasible region until a variable hits zero
            let mut alpha = f64::INFINITY;
            for (&k, &z) in idx.iter().zip(z_sub.iter()) {
                if z <= 0.0 {
                    let denom = x[k] - z;
                    if denom > 0.0 {
                        alpha = alpha.min(x[k] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            let alpha = alpha.clamp(0.0, 1.0);
            for (&k, &z) in idx.iter().zip(z_sub.iter()) {
                x[k] += alpha * (z - x[k]);
            }
            let floor = 1e-14 * x.amax();
            for &k in &idx {
                if x[k] <= floor {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
            // guard against an emptied set stalling the loop
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    let residual = (b - a * &x).norm();
    Ok(NnlsSolution { x, residual, iterations })
}

/// Accelerated projected gradient (FISTA with adaptive restart) stopped on
/// the projected-gradient optimality measure; used for large problems where
/// the active-set subproblems become costly.
pub fn projected_gradient(a: &DMatrix<f64>, b: &DVector<f64>, max_iter: usize, tol: f64) -> NnlsSolution {
    let n = a.ncols();
    let ata = a.transpose() * a;
    let atb = a.transpose() * b;
    let lip = crate::linalg::spectral_norm(&ata).max(f64::MIN_POSITIVE);
    let scale = atb.amax().max(f64::MIN_POSITIVE);
    let mut x = DVector::zeros(n);
    let mut y = x.clone();
    let mut momentum = 1.0f64;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let grad = &ata * &y - &atb;
        let next = (&y - grad / lip).map(|v| v.max(0.0));
        let m_next = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let step = &next - &x;
        // restart when the momentum points uphill
        let g_next = &ata * &next - &atb;
        if g_next.dot(&step) > 0.0 {
            y = next.clone();
            momentum = 1.0;
        } else {
            y = &next + step * ((momentum - 1.0) / m_next);
            momentum = m_next;
        }
        x = next;
        let kkt = x
            .iter()
            .zip(g_next.iter())
            .map(|(&xi, &gi)| if xi > 0.0 { gi.abs() } else { (-gi).max(0.0) })
            .fold(0.0, f64::max);
        if kkt <= tol * scale {
            break;
        }
    }
    let residual = (b - a * &x).norm();
    NnlsSolution { x, residual, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_optimum_already_feasible() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let x_true = DVector::from_vec(vec![0.5, 2.0]);
        let b = &a * &x_true;
        let s = lawson_hanson(&a, &b).unwrap();
        assert!((s.x - x_true).amax() < 1e-12);
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn clamps_negative_direction() {
        // b points along -e1: the best nonnegative fit keeps x1 = 0
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![-1.0, 3.0]);
        let s = lawson_hanson(&a, &b).unwrap();
        assert_eq!(s.x[0], 0.0);
        assert!((s.x[1] - 3.0).abs() < 1e-14);
        assert!((s.residual - 1.0).abs() < 1e-14);
    }

    #[test]
    fn kkt_conditions_on_random_problem() {
        let a = DMatrix::from_fn(8, 5, |r, c| (((r * 5 + c) as f64).powi(2) * 0.37).sin());
        let b = DVector::from_fn(8, |r, _| ((r as f64) * 0.7).cos());
        let s = lawson_hanson(&a, &b).unwrap();
        let grad = -(a.transpose() * (&b - &a * &s.x));
        for j in 0..5 {
            assert!(s.x[j] >= 0.0);
            if s.x[j] > 0.0 {
                assert!(grad[j].abs() < 1e-10);
            } else {
                assert!(grad[j] > -1e-10);
            }
        }
        let pg = projected_gradient(&a, &b, 200_000, 1e-15);
        assert!((pg.x - s.x).amax() < 1e-6);
    }

    #[test]
    fn zero_right_hand_side() {
        let a = DMatrix::from_fn(4, 3, |r, c| (r + c) as f64);
        let s = nnls(&a, &DVector::zeros(4)).unwrap();
        assert!(s.x.iter().all(|&v| v == 0.0));
    }
}

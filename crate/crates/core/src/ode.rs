//! Adaptive Dormand–Prince 5(4) integration with output on a fixed grid.
//!
//! Steps are shortened so that every output time is hit exactly, which
//! keeps the sampled values independent of how dense the grid is.

use nalgebra::DMatrix;

use crate::error::{CrnError, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_steps: 5_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OdeSolution {
    /// One column per output time.
    pub states: DMatrix<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Smallest state component seen at any accepted step.
    pub min_value: f64,
    /// `min_value < -abs_tol`.
    pub negative_excursion: bool,
}

/// Integrates `y' = f(t, y)` from `y(times[0]) = y0` and records the state
/// at every entry of `times` (which must be strictly increasing).
pub fn integrate<F>(f: F, y0: &[f64], times: &[f64], opts: &OdeOptions) -> Result<OdeSolution>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    if !(opts.rel_tol > 0.0 && opts.rel_tol <= 1e-3 && opts.abs_tol > 0.0 && opts.abs_tol <= 1e-3) {
        return Err(CrnError::invalid(
            "trajectory_sim",
            format!("tolerances must lie in (0, 1e-3], got rel {} abs {}", opts.rel_tol, opts.abs_tol),
        ));
    }
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CrnError::invalid("trajectory_sim", "output times must be strictly increasing"));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(CrnError::invalid("trajectory_sim", "initial state is not finite"));
    }
    let dim = y0.len();
    let mut states = DMatrix::zeros(dim, times.len());
    states.column_mut(0).copy_from_slice(y0);

    let mut y = y0.to_vec();
    let mut t = times[0];
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    let mut tmp = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    f(t, &y, &mut k[0]);

    let span = times[times.len() - 1] - times[0];
    let mut h = initial_step(&y, &k[0], span, opts);
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut min_value = y0.iter().copied().fold(f64::INFINITY, f64::min);

    for (out_idx, &t_out) in times.iter().enumerate().skip(1) {
        while t < t_out {
            if accepted + rejected >= opts.max_steps {
                return Err(CrnError::numerical("trajectory_sim", format!("step budget exhausted at t = {t}")));
            }
            let remaining = t_out - t;
            let landing = h >= remaining * (1.0 - 1e-12);
            let step = if landing { remaining } else { h };
            if step <= 1e-14 * t.abs().max(span) {
                return Err(CrnError::numerical("trajectory_sim", format!("step size underflow at t = {t}")));
            }

            stage(&y, step, &[(A21, 0)], &k, &mut tmp);
            f(t + C2 * step, &tmp, &mut k[1]);
            stage(&y, step, &[(A31, 0), (A32, 1)], &k, &mut tmp);
            f(t + C3 * step, &tmp, &mut k[2]);
            stage(&y, step, &[(A41, 0), (A42, 1), (A43, 2)], &k, &mut tmp);
            f(t + C4 * step, &tmp, &mut k[3]);
            stage(&y, step, &[(A51, 0), (A52, 1), (A53, 2), (A54, 3)], &k, &mut tmp);
            f(t + C5 * step, &tmp, &mut k[4]);
            stage(&y, step, &[(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)], &k, &mut tmp);
            f(t + step, &tmp, &mut k[5]);
            stage(&y, step, &[(B1, 0), (B3, 2), (B4, 3), (B5, 4), (B6, 5)], &k, &mut y_new);
            f(t + step, &y_new, &mut k[6]);

            let mut err = 0.0;
            for i in 0..dim {
                let e = step
                    * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
                let sc = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
                err += (e / sc) * (e / sc);
            }
            let err = (err / dim.max(1) as f64).sqrt();
            if !err.is_finite() {
                h = step * 0.1;
                rejected += 1;
                continue;
            }

            if err <= 1.0 {
                t = if landing { t_out } else { t + step };
                std::mem::swap(&mut y, &mut y_new);
                k.swap(0, 6);
                accepted += 1;
                min_value = y.iter().copied().fold(min_value, f64::min);
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                // a landing step is artificially short; do not let it shrink h
                h = if landing { h.max(step * factor) } else { step * factor };
            } else {
                rejected += 1;
                h = step * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            }
        }
        states.column_mut(out_idx).copy_from_slice(&y);
    }

    Ok(OdeSolution {
        states,
        accepted_steps: accepted,
        rejected_steps: rejected,
        min_value,
        negative_excursion: min_value < -opts.abs_tol,
    })
}

fn stage(y: &[f64], h: f64, coeffs: &[(f64, usize)], k: &[Vec<f64>], out: &mut [f64]) {
    for i in 0..y.len() {
        let mut acc = 0.0;
        for &(a, j) in coeffs {
            acc += a * k[j][i];
        }
        out[i] = y[i] + h * acc;
    }
}

fn initial_step(y: &[f64], dy: &[f64], span: f64, opts: &OdeOptions) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for (&yi, &fi) in y.iter().zip(dy) {
        let sc = opts.abs_tol + opts.rel_tol * yi.abs();
        d0 += (yi / sc).powi(2);
        d1 += (fi / sc).powi(2);
    }
    let h = if d0 < 1e-10 || d1 < 1e-10 {
        1e-6
    } else {
        0.01 * (d0 / d1).sqrt()
    };
    h.min(span).max(1e-12 * span)
}

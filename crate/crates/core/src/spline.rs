//! Not-a-knot cubic splines on uniform grids and the differentiation and
//! integration matrices built from their cardinal functions.
//!
//! Row `i` of `L` holds the derivative of the `i`-th cardinal spline at
//! every knot and row `i` of `J` its running integral from the first knot,
//! so for a data row vector `v` the products `vL` and `vJ` approximate the
//! derivative and the cumulative integral of the underlying signal.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CrnError, Result};

/// Equispaced knots `t0 + k h`, `k = 0..points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t0: f64,
    pub tn: f64,
    pub points: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, tn: f64, points: usize) -> Result<Self> {
        if !(t0.is_finite() && tn.is_finite() && tn > t0) {
            return Err(CrnError::invalid("spline_operators", format!("invalid interval [{t0}, {tn}]")));
        }
        if points < 2 {
            return Err(CrnError::invalid("spline_operators", "a grid needs at least two points"));
        }
        Ok(TimeGrid { t0, tn, points })
    }

    /// Number of intervals `n`.
    pub fn intervals(&self) -> usize {
        self.points - 1
    }

    pub fn step(&self) -> f64 {
        (self.tn - self.t0) / self.intervals() as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.intervals() {
            self.tn
        } else {
            self.t0 + k as f64 * self.step()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.points).map(|k| self.time(k)).collect()
    }

    /// Same interval refined by an integer factor.
    pub fn refined(&self, factor: usize) -> TimeGrid {
        TimeGrid {
            points: self.intervals() * factor.max(1) + 1,
            ..*self
        }
    }

    fn check_spline(&self) -> Result<()> {
        if self.points < 4 {
            return Err(CrnError::invalid(
                "spline_operators",
                format!("not-a-knot splines need at least 4 knots, got {}", self.points),
            ));
        }
        Ok(())
    }
}

/// Tridiagonal system for the interior second derivatives `M_1..M_{n-1}`
/// after the not-a-knot conditions have eliminated `M_0` and `M_n`.
#[derive(Debug, Clone)]
struct MomentSystem {
    n: usize,
    // Thomas factors: modified super-diagonal and pivots
    upper: Vec<f64>,
    pivot: Vec<f64>,
    lower: Vec<f64>,
}

impl MomentSystem {
    fn new(n: usize) -> Self {
        let m = n - 1;
        let mut diag = vec![4.0; m];
        let mut sup = vec![1.0; m];
        let mut sub = vec![1.0; m];
        diag[0] = 6.0;
        sup[0] = 0.0;
        diag[m - 1] = 6.0;
        sub[m - 1] = 0.0;
        let mut pivot = vec![0.0; m];
        let mut upper = vec![0.0; m];
        pivot[0] = diag[0];
        upper[0] = sup[0] / pivot[0];
        for i in 1..m {
            pivot[i] = diag[i] - sub[i] * upper[i - 1];
            upper[i] = sup[i] / pivot[i];
        }
        MomentSystem { n, upper, pivot, lower: sub }
    }

    /// Second derivatives at all `n + 1` knots for data `y`.
    fn moments(&self, y: &[f64], h: f64) -> Vec<f64> {
        let n = self.n;
        let m = n - 1;
        let scale = 6.0 / (h * h);
        let mut z = vec![0.0; m];
        for i in 0..m {
            let k = i + 1;
            let r = scale * (y[k - 1] - 2.0 * y[k] + y[k + 1]);
            z[i] = if i == 0 { r / self.pivot[0] } else { (r - self.lower[i] * z[i - 1]) / self.pivot[i] };
        }
        for i in (0..m.saturating_sub(1)).rev() {
            z[i] -= self.upper[i] * z[i + 1];
        }
        let mut out = vec![0.0; n + 1];
        out[1..n].copy_from_slice(&z);
        out[0] = 2.0 * out[1] - out[2];
        out[n] = 2.0 * out[n - 1] - out[n - 2];
        out
    }
}

/// Piecewise cubic stored by knot values and knot second derivatives.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    grid: TimeGrid,
    values: Vec<f64>,
    moments: Vec<f64>,
}

/// Fits the not-a-knot interpolant through `values` sampled on `grid`.
pub fn build_notaknot_spline(values: &[f64], grid: &TimeGrid) -> Result<CubicSpline> {
    grid.check_spline()?;
    if values.len() != grid.points {
        return Err(CrnError::invalid(
            "spline_operators",
            format!("{} values for a grid of {} knots", values.len(), grid.points),
        ));
    }
    let system = MomentSystem::new(grid.intervals());
    Ok(CubicSpline {
        grid: *grid,
        values: values.to_vec(),
        moments: system.moments(values, grid.step()),
    })
}

impl CubicSpline {
    fn locate(&self, t: f64) -> (usize, f64) {
        let h = self.grid.step();
        let n = self.grid.intervals();
        let k = (((t - self.grid.t0) / h).floor().max(0.0) as usize).min(n - 1);
        (k, t - self.grid.time(k))
    }

    fn slope(&self, k: usize) -> f64 {
        let h = self.grid.step();
        (self.values[k + 1] - self.values[k]) / h - h * (2.0 * self.moments[k] + self.moments[k + 1]) / 6.0
    }

    pub fn value(&self, t: f64) -> f64 {
        let h = self.grid.step();
        let (k, u) = self.locate(t);
        let (mk, mk1) = (self.moments[k], self.moments[k + 1]);
        self.values[k] + self.slope(k) * u + mk * u * u / 2.0 + (mk1 - mk) * u * u * u / (6.0 * h)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let h = self.grid.step();
        let (k, u) = self.locate(t);
        let (mk, mk1) = (self.moments[k], self.moments[k + 1]);
        self.slope(k) + mk * u + (mk1 - mk) * u * u / (2.0 * h)
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        let h = self.grid.step();
        let (k, u) = self.locate(t);
        self.moments[k] + (self.moments[k + 1] - self.moments[k]) * u / h
    }

    /// Third derivative on the interval containing `t` (piecewise constant).
    pub fn third_derivative(&self, t: f64) -> f64 {
        let (k, _) = self.locate(t);
        (self.moments[k + 1] - self.moments[k]) / self.grid.step()
    }

    /// Derivatives at every knot.
    pub fn knot_derivatives(&self) -> Vec<f64> {
        let n = self.grid.intervals();
        let h = self.grid.step();
        let mut out: Vec<f64> = (0..n).map(|k| self.slope(k)).collect();
        let last = self.slope(n - 1) + self.moments[n - 1] * h + (self.moments[n] - self.moments[n - 1]) * h / 2.0;
        out.push(last);
        out
    }

    /// Running integrals `int_{t0}^{t_k} s`, one per knot.
    pub fn knot_integrals(&self) -> Vec<f64> {
        let h = self.grid.step();
        let mut out = Vec::with_capacity(self.grid.points);
        let mut acc = 0.0;
        out.push(0.0);
        for k in 0..self.grid.intervals() {
            acc += h * (self.values[k] + self.values[k + 1]) / 2.0
                - h * h * h * (self.moments[k] + self.moments[k + 1]) / 24.0;
            out.push(acc);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SplineOperators {
    pub grid: TimeGrid,
    pub l: DMatrix<f64>,
    pub j: DMatrix<f64>,
}

/// Builds `L` and `J` from the `n + 1` cardinal splines, sharing a single
/// factorisation of the moment system.
pub fn build_operators(grid: &TimeGrid) -> Result<SplineOperators> {
    grid.check_spline()?;
    let np = grid.points;
    let system = MomentSystem::new(grid.intervals());
    let mut l = DMatrix::zeros(np, np);
    let mut j = DMatrix::zeros(np, np);
    let mut e = vec![0.0; np];
    for i in 0..np {
        e[i] = 1.0;
        let spline = CubicSpline {
            grid: *grid,
            values: e.clone(),
            moments: system.moments(&e, grid.step()),
        };
        for (k, d) in spline.knot_derivatives().into_iter().enumerate() {
            l[(i, k)] = d;
        }
        for (k, s) in spline.knot_integrals().into_iter().enumerate() {
            j[(i, k)] = s;
        }
        e[i] = 0.0;
    }
    Ok(SplineOperators { grid: *grid, l, j })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatorNorms {
    /// Induced infinity norm (largest absolute row sum) of `L`.
    pub l_inf: f64,
    pub j_inf: f64,
    /// Absolute column sums.
    pub l_col_max: f64,
    pub j_col_max: f64,
}

impl SplineOperators {
    pub fn norms(&self) -> OperatorNormsDetail {
        OperatorNormsDetail::of(self)
    }
}

/// Row and column absolute sums of both operators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorNormsDetail {
    pub summary: OperatorNorms,
    pub l_col_norms: Vec<f64>,
    pub j_col_norms: Vec<f64>,
}

impl OperatorNormsDetail {
    fn of(ops: &SplineOperators) -> Self {
        let row_max = |m: &DMatrix<f64>| {
            m.row_iter()
                .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let cols = |m: &DMatrix<f64>| -> Vec<f64> {
            m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum()).collect()
        };
        let l_col_norms = cols(&ops.l);
        let j_col_norms = cols(&ops.j);
        OperatorNormsDetail {
            summary: OperatorNorms {
                l_inf: row_max(&ops.l),
                j_inf: row_max(&ops.j),
                l_col_max: l_col_norms.iter().copied().fold(0.0, f64::max),
                j_col_max: j_col_norms.iter().copied().fold(0.0, f64::max),
            },
            l_col_norms,
            j_col_norms,
        }
    }
}

pub fn operator_norms(ops: &SplineOperators) -> OperatorNormsDetail {
    ops.norms()
}

/// `I_w ⊗ L` and `I_w ⊗ J`, kept implicit: applying them to data works
/// block by block and never materialises the zero blocks.
#[derive(Debug, Clone)]
pub struct StackedOperators {
    pub ops: SplineOperators,
    pub experiments: usize,
}

pub fn stack_operators(ops: SplineOperators, experiments: usize) -> Result<StackedOperators> {
    if experiments == 0 {
        return Err(CrnError::invalid("spline_operators", "experiment count must be positive"));
    }
    Ok(StackedOperators { ops, experiments })
}

impl StackedOperators {
    pub fn block_len(&self) -> usize {
        self.ops.grid.points
    }

    pub fn dim(&self) -> usize {
        self.block_len() * self.experiments
    }

    fn apply(&self, data: &DMatrix<f64>, op: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if data.ncols() != self.dim() {
            return Err(CrnError::invalid(
                "spline_operators",
                format!("data has {} columns, stacked operator expects {}", data.ncols(), self.dim()),
            ));
        }
        let b = self.block_len();
        let mut out = DMatrix::zeros(data.nrows(), data.ncols());
        for e in 0..self.experiments {
            let block = data.columns(e * b, b) * op;
            out.columns_mut(e * b, b).copy_from(&block);
        }
        Ok(out)
    }

    /// `data · (I_w ⊗ L)`.
    pub fn apply_l(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.apply(data, &self.ops.l)
    }

    /// `data · (I_w ⊗ J)`.
    pub fn apply_j(&self, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.apply(data, &self.ops.j)
    }

    /// Explicit block-diagonal matrices; only sensible for small sizes.
    pub fn to_dense(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let b = self.block_len();
        let mut l = DMatrix::zeros(self.dim(), self.dim());
        let mut j = DMatrix::zeros(self.dim(), self.dim());
        for e in 0..self.experiments {
            l.view_mut((e * b, e * b), (b, b)).copy_from(&self.ops.l);
            j.view_mut((e * b, e * b), (b, b)).copy_from(&self.ops.j);
        }
        (l, j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, grid.points, &grid.times().iter().map(|&t| f(t)).collect::<Vec<_>>())
    }

    #[test]
    fn endpoint_derivative_error_exceeds_interior_constant() {
        // cos'''' does not vanish at the ends; the endpoint rows carry an
        // error constant about 3.6 times the interior one
        let pi = std::f64::consts::PI;
        for n in [50usize, 200] {
            let grid = TimeGrid::new(0.0, pi, n + 1).unwrap();
            let ops = build_operators(&grid).unwrap();
            let err = row(&grid, f64::cos) * &ops.l + row(&grid, f64::sin);
            let unit = (9.0 + 3f64.sqrt()) / 216.0 * pi.powi(3) / (n as f64).powi(3);
            let ends = err[0].abs().max(err[n].abs()) / unit;
            let inner = err.columns(5, n - 9).amax() / unit;
            assert!((3.55..3.65).contains(&ends), "{ends}");
            assert!(inner < 0.01, "{inner}");
        }
    }

    #[test]
    fn sine_derivative_within_cubed_step_bound() {
        let pi = std::f64::consts::PI;
        let grid = TimeGrid::new(0.0, pi, 101).unwrap();
        let ops = build_operators(&grid).unwrap();
        let d = row(&grid, f64::sin) * &ops.l;
        let bound = (9.0 + 3f64.sqrt()) / 216.0 * pi.powi(3) / 100f64.powi(3);
        let err = (d - row(&grid, f64::cos)).amax();
        assert!(err <= bound, "{err:e} > {bound:e}");
        // integral: |∫ sin - J| ≤ max|sin''''| T^4 / (120 n^4)
        let i = row(&grid, f64::sin) * &ops.j;
        let err = (i - row(&grid, |t| 1.0 - t.cos())).amax();
        assert!(err <= pi.powi(4) / 120.0 / 100f64.powi(4), "{err:e}");
    }

    #[test]
    fn grid_basics() {
        let g = TimeGrid::new(0.0, 1.0, 11).unwrap();
        assert_eq!(g.intervals(), 10);
        assert!((g.step() - 0.1).abs() < 1e-15);
        assert_eq!(g.time(10), 1.0);
        assert!(TimeGrid::new(1.0, 1.0, 5).is_err());
        assert!(build_operators(&TimeGrid::new(0.0, 1.0, 3).unwrap()).is_err());
    }

    #[test]
    fn cubic_reproduction() {
        let g = TimeGrid::new(-1.0, 2.0, 9).unwrap();
        let q = |t: f64| t * t * t - 2.0 * t * t + 1.0;
        let vals: Vec<f64> = g.times().iter().map(|&t| q(t)).collect();
        let s = build_notaknot_spline(&vals, &g).unwrap();
        for i in 0..=100 {
            let t = -1.0 + 3.0 * i as f64 / 100.0;
            assert!((s.value(t) - q(t)).abs() < 1e-12);
            assert!((s.derivative(t) - (3.0 * t * t - 4.0 * t)).abs() < 1e-11);
        }
    }

    #[test]
    fn cardinal_interpolation_and_constant() {
        let g = TimeGrid::new(0.0, 2.0, 7).unwrap();
        let c = build_notaknot_spline(&[3.5; 7], &g).unwrap();
        assert!((c.value(0.77) - 3.5).abs() < 1e-14);
        let mut e = vec![0.0; 7];
        e[2] = 1.0;
        let s = build_notaknot_spline(&e, &g).unwrap();
        for (k, &t) in g.times().iter().enumerate() {
            let want = if k == 2 { 1.0 } else { 0.0 };
            assert!((s.value(t) - want).abs() < 1e-13);
        }
    }

    #[test]
    fn not_a_knot_third_derivative_continuity() {
        let g = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let vals: Vec<f64> = g.times().iter().map(|t| (3.0 * t).sin()).collect();
        let s = build_notaknot_spline(&vals, &g).unwrap();
        let h = g.step();
        let jump1 = s.third_derivative(h * 0.5) - s.third_derivative(h * 1.5);
        let jump2 = s.third_derivative(1.0 - h * 0.5) - s.third_derivative(1.0 - h * 1.5);
        assert!(jump1.abs() < 1e-9 && jump2.abs() < 1e-9);
    }

    #[test]
    fn linear_and_cubic_operator_examples() {
        let g = TimeGrid::new(0.0, 1.0, 11).unwrap();
        let ops = build_operators(&g).unwrap();
        let d = row(&g, |t| t) * &ops.l;
        assert!(d.iter().all(|v| (v - 1.0).abs() < 1e-12));
        let i = row(&g, |t| t * t * t) * &ops.j;
        for (k, &t) in g.times().iter().enumerate() {
            assert!((i[k] - t.powi(4) / 4.0).abs() < 1e-12);
        }
        assert!(ops.j.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn partition_of_unity() {
        let g = TimeGrid::new(0.0, 20.0, 41).unwrap();
        let ops = build_operators(&g).unwrap();
        let ones = DMatrix::from_element(1, g.points, 1.0);
        let dl = &ones * &ops.l;
        let dj = &ones * &ops.j;
        for (k, &t) in g.times().iter().enumerate() {
            assert!(dl[k].abs() < 1e-10 * g.points as f64);
            assert!((dj[k] - t).abs() < 1e-10 * 20.0);
        }
    }

    #[test]
    fn stacking() {
        let g = TimeGrid::new(0.0, 1.0, 6).unwrap();
        let ops = build_operators(&g).unwrap();
        let single = stack_operators(ops.clone(), 1).unwrap();
        let (l1, j1) = single.to_dense();
        assert_eq!(l1, ops.l);
        assert_eq!(j1, ops.j);

        let stacked = stack_operators(ops.clone(), 2).unwrap();
        let v = DMatrix::from_fn(3, 12, |r, c| ((r * 12 + c) as f64 * 0.37).sin());
        let via_blocks = stacked.apply_l(&v).unwrap();
        let (ld, jd) = stacked.to_dense();
        assert_eq!(via_blocks, &v * &ld);
        assert_eq!(stacked.apply_j(&v).unwrap(), &v * &jd);
        assert!(stack_operators(ops, 0).is_err());
    }
}

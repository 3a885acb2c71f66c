//! Dictionary assembly, least-squares recovery in both formulations and
//! sequentially thresholded least squares.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::MonomialBasis;
use crate::error::{CrnError, Result};
use crate::linalg::{numerical_rank, CompressedLs};
use crate::simulate::TrajectoryBundle;
use crate::spline::StackedOperators;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    /// `X L ≈ C D`
    Differential,
    /// `X - X_IVP ≈ C D J`
    Integral,
}

impl Formulation {
    pub const BOTH: [Formulation; 2] = [Formulation::Differential, Formulation::Integral];

    pub fn short(&self) -> &'static str {
        match self {
            Formulation::Differential => "dif",
            Formulation::Integral => "int",
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Formulation::Differential => "differential",
            Formulation::Integral => "integral",
        })
    }
}

impl FromStr for Formulation {
    type Err = CrnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "differential" | "dif" => Ok(Formulation::Differential),
            "integral" | "int" => Ok(Formulation::Integral),
            other => Err(CrnError::invalid("sparse_recovery", format!("unknown formulation '{other}'"))),
        }
    }
}

/// `N x T` matrix of monomials evaluated at every data column.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryMatrix {
    pub d: DMatrix<f64>,
    pub block_len: usize,
}

pub fn build_dictionary(basis: &MonomialBasis, x: &DMatrix<f64>, block_len: usize) -> Result<DictionaryMatrix> {
    if x.nrows() != basis.species_count() {
        return Err(CrnError::invalid(
            "sparse_recovery",
            format!("data has {} rows, basis has {} species", x.nrows(), basis.species_count()),
        ));
    }
    if block_len == 0 || x.ncols() % block_len != 0 {
        return Err(CrnError::invalid("sparse_recovery", "data columns are not a whole number of blocks"));
    }
    let mut d = DMatrix::zeros(basis.len(), x.ncols());
    let mut buf = vec![0.0; basis.len()];
    for c in 0..x.ncols() {
        basis.evaluate_into(x.column(c).as_slice(), &mut buf);
        d.column_mut(c).copy_from_slice(&buf);
    }
    Ok(DictionaryMatrix { d, block_len })
}

/// Targets and regression matrix of one formulation.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    pub formulation: Formulation,
    pub targets: DMatrix<f64>,
    pub regression: DMatrix<f64>,
}

pub fn regression_problem(
    formulation: Formulation,
    bundle: &TrajectoryBundle,
    dict: &DictionaryMatrix,
    ops: &StackedOperators,
) -> Result<RegressionProblem> {
    if ops.experiments != bundle.experiments || ops.block_len() != bundle.block_len() {
        return Err(CrnError::invalid(
            "sparse_recovery",
            format!(
                "operators built for {} x {} points, data has {} x {}",
                ops.experiments,
                ops.block_len(),
                bundle.experiments,
                bundle.block_len()
            ),
        ));
    }
    if dict.d.ncols() != bundle.x.ncols() {
        return Err(CrnError::invalid("sparse_recovery", "dictionary and data sizes differ"));
    }
    let (targets, regression) = match formulation {
        Formulation::Differential => (ops.apply_l(&bundle.x)?, dict.d.clone()),
        Formulation::Integral => (bundle.x0(), ops.apply_j(&dict.d)?),
    };
    Ok(RegressionProblem { formulation, targets, regression })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StlsOptions {
    pub tau: f64,
    pub max_iter: usize,
    pub svd_cutoff: f64,
}

impl Default for StlsOptions {
    fn default() -> Self {
        StlsOptions {
            tau: 1e-2,
            max_iter: 20,
            svd_cutoff: 1e-10,
        }
    }
}

/// Per-row STLS diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowReport {
    /// Number of restricted least-squares solves.
    pub iterations: usize,
    pub converged: bool,
    /// Every coefficient was thresholded away.
    pub empty: bool,
    /// Support before each solve; each entry is a subset of the previous.
    pub supports: Vec<Vec<usize>>,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct StlsOutcome {
    pub coefficients: DMatrix<f64>,
    pub support: Vec<Vec<bool>>,
    pub rows: Vec<RowReport>,
}

pub fn stls(targets: &DMatrix<f64>, regression: &DMatrix<f64>, opts: &StlsOptions) -> Result<StlsOutcome> {
    let ls = CompressedLs::new(targets, regression, opts.svd_cutoff)?;
    stls_compressed(&ls, opts)
}

fn stls_compressed(ls: &CompressedLs, opts: &StlsOptions) -> Result<StlsOutcome> {
    if !(opts.tau > 0.0) {
        return Err(CrnError::invalid("sparse_recovery", "threshold tau must be positive"));
    }
    if opts.max_iter == 0 {
        return Err(CrnError::invalid("sparse_recovery", "max_iter must be at least 1"));
    }
    let n = ls.unknowns();
    let mut coefficients = DMatrix::zeros(ls.rows(), n);
    let mut rows = Vec::with_capacity(ls.rows());
    for r in 0..ls.rows() {
        let mut support: Vec<usize> = (0..n).collect();
        let mut visited: Vec<(Vec<usize>, Vec<f64>, f64)> = Vec::new();
        let mut converged = false;
        while visited.len() < opts.max_iter {
            let (c, res) = ls.solve_row(r, &support)?;
            let next: Vec<usize> = support.iter().copied().filter(|&j| c[j].abs() > opts.tau).collect();
            let fixed = next == support;
            visited.push((support.clone(), c, res));
            if fixed {
                converged = true;
                break;
            }
            if next.is_empty() {
                let (c, res) = ls.solve_row(r, &[])?;
                visited.push((Vec::new(), c, res));
                converged = true;
                break;
            }
            support = next;
        }
        let pick = if converged {
            visited.len() - 1
        } else {
            log::warn!("sparse_recovery: STLS row {r} did not settle within {} iterations", opts.max_iter);
            (0..visited.len())
                .min_by(|&a, &b| visited[a].2.total_cmp(&visited[b].2))
                .unwrap_or(0)
        };
        let (ref chosen_support, ref c, res) = visited[pick];
        coefficients.row_mut(r).copy_from_slice(c);
        rows.push(RowReport {
            iterations: visited.len(),
            converged,
            empty: chosen_support.is_empty(),
            supports: visited.iter().map(|v| v.0.clone()).collect(),
            residual: res,
        });
    }
    let support = (0..coefficients.nrows())
        .map(|r| coefficients.row(r).iter().map(|&v| v != 0.0).collect())
        .collect();
    Ok(StlsOutcome { coefficients, support, rows })
}

#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub formulation: Formulation,
    pub c_ls: DMatrix<f64>,
    pub c_stls: Option<DMatrix<f64>>,
    pub support: Option<Vec<Vec<bool>>>,
    pub residual_ls: f64,
    pub residual_stls: Option<f64>,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub options: StlsOptions,
    pub rows: Vec<RowReport>,
}

impl RecoveryResult {
    /// STLS coefficients, or the plain least-squares ones when no
    /// thresholding was run.
    pub fn c_sparse(&self) -> &DMatrix<f64> {
        self.c_stls.as_ref().unwrap_or(&self.c_ls)
    }

    pub fn report(&self) -> RecoveryReport {
        RecoveryReport {
            formulation: self.formulation,
            tau: self.options.tau,
            max_iter: self.options.max_iter,
            svd_cutoff: self.options.svd_cutoff,
            rank: self.rank,
            residual_ls: self.residual_ls,
            residual: self.residual_stls.unwrap_or(self.residual_ls),
            singular_values: self.singular_values.clone(),
            c_ls: rows_of(&self.c_ls),
            c_stls: self.c_stls.as_ref().map(rows_of),
            support: self.support.clone(),
            rows: self.rows.clone(),
        }
    }
}

/// Serialisable view of a [`RecoveryResult`]; matrices are row-major.
#[derive(Debug, Clone, Serialize)]
pub struct RecoveryReport {
    pub formulation: Formulation,
    pub tau: f64,
    pub max_iter: usize,
    pub svd_cutoff: f64,
    pub rank: usize,
    pub residual_ls: f64,
    pub residual: f64,
    pub singular_values: Vec<f64>,
    pub c_ls: Vec<Vec<f64>>,
    pub c_stls: Option<Vec<Vec<f64>>>,
    pub support: Option<Vec<Vec<bool>>>,
    pub rows: Vec<RowReport>,
}

pub(crate) fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn solve(problem: &RegressionProblem, opts: &StlsOptions, with_stls: bool) -> Result<RecoveryResult> {
    if problem.regression.iter().all(|&v| v == 0.0) {
        return Err(CrnError::invalid("sparse_recovery", "dictionary is identically zero"));
    }
    let ls = CompressedLs::new(&problem.targets, &problem.regression, opts.svd_cutoff)?;
    let (c_ls, res_ls) = ls.solve_all()?;
    let singular_values = ls.singular_values();
    let rank = numerical_rank(&singular_values, opts.svd_cutoff);
    let (c_stls, support, residual_stls, rows) = if with_stls {
        let out = stls_compressed(&ls, opts)?;
        let res = out.rows.iter().map(|r| r.residual).sum::<f64>();
        (Some(out.coefficients), Some(out.support), Some(res.sqrt()), out.rows)
    } else {
        (None, None, None, Vec::new())
    };
    Ok(RecoveryResult {
        formulation: problem.formulation,
        c_ls,
        c_stls,
        support,
        residual_ls: res_ls.sqrt(),
        residual_stls,
        rank,
        singular_values,
        options: *opts,
        rows,
    })
}

/// Unregularised minimal-norm least squares.
pub fn recover_ls(
    formulation: Formulation,
    bundle: &TrajectoryBundle,
    dict: &DictionaryMatrix,
    ops: &StackedOperators,
    svd_cutoff: f64,
) -> Result<RecoveryResult> {
    let problem = regression_problem(formulation, bundle, dict, ops)?;
    let opts = StlsOptions { svd_cutoff, ..Default::default() };
    solve(&problem, &opts, false)
}

/// Least squares followed by STLS on the same factorisation.
pub fn recover(
    formulation: Formulation,
    bundle: &TrajectoryBundle,
    dict: &DictionaryMatrix,
    ops: &StackedOperators,
    opts: &StlsOptions,
) -> Result<RecoveryResult> {
    let problem = regression_problem(formulation, bundle, dict, ops)?;
    solve(&problem, opts, true)
}

pub fn recover_problem(problem: &RegressionProblem, opts: &StlsOptions) -> Result<RecoveryResult> {
    solve(problem, opts, true)
}

/// Rank and singular values of a dictionary.
pub fn dictionary_rank(d: &DMatrix<f64>, cutoff: f64) -> (usize, Vec<f64>) {
    let s = crate::linalg::singular_values(d);
    (numerical_rank(&s, cutoff), s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dictionary_columns() {
        let basis = MonomialBasis::new(2, 2).unwrap();
        let x = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 3.0, 1.0]);
        let d = build_dictionary(&basis, &x, 1).unwrap();
        assert_eq!(d.d.column(0).as_slice(), &[2.0, 3.0, 4.0, 6.0, 9.0]);
        assert!(d.d.column(1).iter().all(|&v| v == 1.0));
        assert!(build_dictionary(&basis, &DMatrix::zeros(3, 2), 1).is_err());
    }

    #[test]
    fn two_column_threshold_example() {
        // orthogonal columns; y = 2 d1 + 0 d2 up to a small perturbation
        let t = 8;
        let d1: Vec<f64> = (0..t).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let d2: Vec<f64> = (0..t).map(|i| if i < t / 2 { 1.0 } else { -1.0 }).collect();
        let mut a = DMatrix::zeros(2, t);
        a.row_mut(0).copy_from_slice(&d1);
        a.row_mut(1).copy_from_slice(&d2);
        let y = DMatrix::from_fn(1, t, |_, c| 2.0 * d1[c] + 0.1 * d2[c]);
        let out = stls(&y, &a, &StlsOptions { tau: 0.5, ..Default::default() }).unwrap();
        assert!((out.coefficients[(0, 0)] - 2.0).abs() < 1e-12);
        assert_eq!(out.coefficients[(0, 1)], 0.0);
        assert_eq!(out.support[0], vec![true, false]);
        assert!(out.rows[0].iterations <= 2 && out.rows[0].converged);
    }

    #[test]
    fn tiny_threshold_equals_least_squares() {
        let a = DMatrix::from_fn(3, 20, |r, c| ((r * 7 + c) as f64).sin());
        let y = DMatrix::from_fn(2, 20, |r, c| ((r + c) as f64 * 0.3).cos());
        let ls = CompressedLs::new(&y, &a, 1e-10).unwrap();
        let (c_ls, _) = ls.solve_all().unwrap();
        let out = stls(&y, &a, &StlsOptions { tau: 1e-300, ..Default::default() }).unwrap();
        assert_eq!(out.coefficients, c_ls);
    }

    #[test]
    fn zero_targets_give_empty_rows() {
        let a = DMatrix::from_fn(3, 10, |r, c| ((r + 2 * c) as f64).cos());
        let out = stls(&DMatrix::zeros(2, 10), &a, &StlsOptions::default()).unwrap();
        assert!(out.coefficients.iter().all(|&v| v == 0.0));
        assert!(out.rows.iter().all(|r| r.empty && r.converged));
    }

    #[test]
    fn invalid_options() {
        let a = DMatrix::from_element(1, 4, 1.0);
        let y = DMatrix::from_element(1, 4, 1.0);
        assert!(stls(&y, &a, &StlsOptions { tau: 0.0, ..Default::default() }).is_err());
        assert!(stls(&y, &a, &StlsOptions { max_iter: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn parse_formulation() {
        assert_eq!("int".parse::<Formulation>().unwrap(), Formulation::Integral);
        assert_eq!(Formulation::Differential.to_string(), "differential");
        assert!("both".parse::<Formulation>().is_err());
    }
}

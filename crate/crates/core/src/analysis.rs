//! Recovery errors, support mismatch, the spline error-bound constants and
//! their numerical verification, decay-rate fits and trial aggregation.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use serde::{Serialize, Serializer};

use crate::basis::MonomialBasis;
use crate::error::{CrnError, Result};
use crate::graph::{true_edge_set, EffectiveModel, KirchhoffFit};
use crate::linalg::{singular_values, spectral_norm, CompressedLs};
use crate::model::CrnModel;
use crate::ode::{integrate, OdeOptions};
use crate::recovery::{build_dictionary, Formulation, RecoveryResult};
use crate::simulate::{NoiseKind, SampledSetup, TrajectoryBundle};
use crate::spline::{build_operators, stack_operators, SplineOperators, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    DifLs,
    DifStls,
    IntLs,
    IntStls,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::DifLs, Method::DifStls, Method::IntLs, Method::IntStls];

    pub fn new(formulation: Formulation, sparse: bool) -> Method {
        match (formulation, sparse) {
            (Formulation::Differential, false) => Method::DifLs,
            (Formulation::Differential, true) => Method::DifStls,
            (Formulation::Integral, false) => Method::IntLs,
            (Formulation::Integral, true) => Method::IntStls,
        }
    }

    pub fn formulation(&self) -> Formulation {
        match self {
            Method::DifLs | Method::DifStls => Formulation::Differential,
            Method::IntLs | Method::IntStls => Formulation::Integral,
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Method::DifStls | Method::IntStls)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::DifLs => "dif_ls",
            Method::DifStls => "dif_stls",
            Method::IntLs => "int_ls",
            Method::IntStls => "int_stls",
        })
    }
}

pub type Support = Vec<Vec<bool>>;

pub fn support_of(c: &DMatrix<f64>) -> Support {
    c.row_iter().map(|r| r.iter().map(|&v| v != 0.0).collect()).collect()
}

/// Entries present in exactly one of the two patterns.
pub fn support_mismatch(a: &Support, b: &Support) -> usize {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).filter(|(x, y)| x != y).count())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MethodErrors {
    pub spectral: f64,
    pub frobenius: f64,
    pub support_mismatch: usize,
}

/// Graph comparison against the ground truth; only meaningful when the
/// recovered graph has as many complexes as the true one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KirchhoffMismatch {
    Count(usize),
    SizeMismatch,
}

impl Serialize for KirchhoffMismatch {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            KirchhoffMismatch::Count(c) => s.serialize_u64(*c as u64),
            KirchhoffMismatch::SizeMismatch => s.serialize_str("size-mismatch"),
        }
    }
}

pub fn kirchhoff_mismatch(fit: &KirchhoffFit, model: &EffectiveModel, truth: &CrnModel) -> KirchhoffMismatch {
    if model.dim() != truth.participating_complexes().len() {
        return KirchhoffMismatch::SizeMismatch;
    }
    let found = fit.edge_set(model);
    let wanted = true_edge_set(truth);
    let missing = wanted.iter().filter(|e| !found.contains(e)).count();
    let extra = found.iter().filter(|e| !wanted.contains(e)).count();
    KirchhoffMismatch::Count(missing + extra)
}

pub fn method_errors(c: &DMatrix<f64>, truth: &CrnModel) -> Result<MethodErrors> {
    let exact = truth.coefficients();
    if c.shape() != exact.shape() {
        return Err(CrnError::invalid("error_analysis", "recovered and true coefficient shapes differ"));
    }
    let diff = c - exact;
    Ok(MethodErrors {
        spectral: spectral_norm(&diff),
        frobenius: diff.norm(),
        support_mismatch: support_mismatch(&support_of(c), &support_of(exact)),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub trial: usize,
    pub seed: u64,
    /// Time points per experiment.
    pub n: usize,
    pub noise_sd: f64,
    pub methods: BTreeMap<Method, MethodErrors>,
    pub kirchhoff: BTreeMap<Method, KirchhoffMismatch>,
}

impl ErrorReport {
    pub fn new(trial: usize, seed: u64, n: usize, noise_sd: f64) -> Self {
        ErrorReport {
            trial,
            seed,
            n,
            noise_sd,
            methods: BTreeMap::new(),
            kirchhoff: BTreeMap::new(),
        }
    }
}

/// Errors of the least-squares and (if present) STLS coefficients.
pub fn compute_errors(result: &RecoveryResult, truth: &CrnModel) -> Result<Vec<(Method, MethodErrors)>> {
    let mut out = vec![(Method::new(result.formulation, false), method_errors(&result.c_ls, truth)?)];
    if let Some(c) = &result.c_stls {
        out.push((Method::new(result.formulation, true), method_errors(c, truth)?));
    }
    Ok(out)
}

const KAPPA_DIF: f64 = (9.0 + 1.732_050_807_568_877_2) / 216.0;

/// Largest absolute fourth derivative of equispaced samples, from the
/// five-point central stencil inside and second-order one-sided stencils
/// at the two outermost points on each side.
pub fn max_fourth_derivative(samples: &[f64], h: f64) -> Result<f64> {
    let m = samples.len();
    if m < 9 {
        return Err(CrnError::invalid(
            "error_analysis",
            format!("reference too coarse: {m} samples, at least 9 needed"),
        ));
    }
    let f = samples;
    let h4 = h.powi(4);
    let mut best: f64 = 0.0;
    for i in 2..m - 2 {
        let d = (f[i - 2] - 4.0 * f[i - 1] + 6.0 * f[i] - 4.0 * f[i + 1] + f[i + 2]) / h4;
        best = best.max(d.abs());
    }
    let forward = |g: &dyn Fn(usize) -> f64| {
        (3.0 * g(0) - 14.0 * g(1) + 26.0 * g(2) - 24.0 * g(3) + 11.0 * g(4) - 2.0 * g(5)) / h4
    };
    for off in 0..2 {
        best = best.max(forward(&|k| f[off + k]).abs());
        best = best.max(forward(&|k| f[m - 1 - off - k]).abs());
    }
    Ok(best)
}

/// `(9 + √3)/216 · max|x''''| · (tn - t0)^3`.
pub fn kappa_dif(samples: &[f64], grid: &TimeGrid) -> Result<f64> {
    Ok(KAPPA_DIF * max_fourth_derivative(samples, grid.step())? * (grid.tn - grid.t0).powi(3))
}

/// `max|d''''| · (tn - t0)^4 / 120`.
pub fn kappa_int(samples: &[f64], grid: &TimeGrid) -> Result<f64> {
    Ok(max_fourth_derivative(samples, grid.step())? * (grid.tn - grid.t0).powi(4) / 120.0)
}

/// Constants of a dense reference: one row per species (`dif`) or
/// dictionary row (`int`), one column per experiment.
#[derive(Debug, Clone)]
pub struct Kappas {
    pub dif: DMatrix<f64>,
    pub int: DMatrix<f64>,
}

/// `x_dense` holds `experiments` blocks sampled on `dense_grid`.
pub fn compute_kappas(basis: &MonomialBasis, x_dense: &DMatrix<f64>, dense_grid: &TimeGrid, experiments: usize) -> Result<Kappas> {
    let b = dense_grid.points;
    if x_dense.ncols() != b * experiments {
        return Err(CrnError::invalid("error_analysis", "dense reference does not match its grid"));
    }
    let d_dense = build_dictionary(basis, x_dense, b)?.d;
    let mut dif = DMatrix::zeros(x_dense.nrows(), experiments);
    let mut int = DMatrix::zeros(d_dense.nrows(), experiments);
    for e in 0..experiments {
        for a in 0..x_dense.nrows() {
            let row: Vec<f64> = x_dense.view((a, e * b), (1, b)).iter().copied().collect();
            dif[(a, e)] = kappa_dif(&row, dense_grid)?;
        }
        for beta in 0..d_dense.nrows() {
            let row: Vec<f64> = d_dense.view((beta, e * b), (1, b)).iter().copied().collect();
            int[(beta, e)] = kappa_int(&row, dense_grid)?;
        }
    }
    Ok(Kappas { dif, int })
}

/// First-order noise amplification of every dictionary row:
/// `max_i Σ_a |∂d_β/∂x_a (x(t_i))|`.
pub fn compute_c_beta(basis: &MonomialBasis, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.nrows() != basis.species_count() {
        return Err(CrnError::invalid("error_analysis", "data rows do not match basis"));
    }
    let mut out = vec![0.0f64; basis.len()];
    for col in x.column_iter() {
        for (beta, e) in basis.exponents().iter().enumerate() {
            let mut sum = 0.0;
            for a in 0..e.len() {
                if e[a] == 0 {
                    continue;
                }
                let mut term = e[a] as f64;
                for (g, &eg) in e.iter().enumerate() {
                    let power = if g == a { eg - 1 } else { eg };
                    if power > 0 {
                        term *= col[g].powi(power as i32);
                    }
                }
                sum += term.abs();
            }
            out[beta] = out[beta].max(sum);
        }
    }
    Ok(out)
}

/// One checked inequality `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`.
    pub margin: f64,
    pub pass: bool,
    /// Entrywise checks: number of failing entries and where the worst
    /// ratio occurred (row, column).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_entry: Option<(usize, usize)>,
}

impl InequalityCheck {
    fn scalar(name: &str, lhs: f64, rhs: f64) -> Self {
        InequalityCheck {
            name: name.to_string(),
            lhs,
            rhs,
            margin: rhs - lhs,
            pass: lhs <= rhs,
            violations: None,
            worst_entry: None,
        }
    }

    /// Entrywise `|e| <= bound`; `lhs`/`rhs` describe the worst-ratio entry.
    fn entrywise(name: &str, e: &DMatrix<f64>, bound: &DMatrix<f64>) -> Self {
        let mut worst = (0, 0);
        let mut worst_ratio = -1.0;
        let mut violations = 0;
        for r in 0..e.nrows() {
            for c in 0..e.ncols() {
                let lhs = e[(r, c)].abs();
                let rhs = bound[(r, c)];
                if lhs > rhs {
                    violations += 1;
                }
                let ratio = if rhs > 0.0 { lhs / rhs } else if lhs > 0.0 { f64::INFINITY } else { 0.0 };
                if ratio > worst_ratio {
                    worst_ratio = ratio;
                    worst = (r, c);
                }
            }
        }
        let (lhs, rhs) = (e[worst].abs(), bound[worst]);
        InequalityCheck {
            name: name.to_string(),
            lhs,
            rhs,
            margin: rhs - lhs,
            pass: violations == 0,
            violations: Some(violations),
            worst_entry: Some(worst),
        }
    }

    pub fn ratio(&self) -> f64 {
        if self.rhs > 0.0 {
            self.lhs / self.rhs
        } else if self.lhs > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SingularValueSummary {
    pub sigma_min_d: f64,
    pub sigma_min_d_noisy: f64,
    pub sigma_min_d_int: f64,
    pub sigma_min_dj_noisy: f64,
    pub sigma_max_xdot: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    /// Number of intervals of the working grid.
    pub n: usize,
    pub experiments: usize,
    pub epsilon: f64,
    /// Per species, maximum over experiments.
    pub kappa_dif: Vec<f64>,
    /// Per dictionary row, maximum over experiments.
    pub kappa_int: Vec<f64>,
    pub c_beta: Vec<f64>,
    pub l_inf: f64,
    pub j_inf: f64,
    pub frobenius_bounds: [f64; 2],
    /// Theorem-style right-hand sides, evaluated with measured norms.
    pub coefficient_bounds: [f64; 2],
    pub coefficient_errors: [f64; 2],
    pub singular_values: SingularValueSummary,
    pub checks: Vec<InequalityCheck>,
}

impl BoundReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&InequalityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Inputs of a bound-verification run: the sampled model and initial
/// conditions, and the (possibly noisy) data they produced.
pub struct BoundInputs<'a> {
    pub setup: &'a SampledSetup,
    pub bundle: &'a TrajectoryBundle,
    pub ops: &'a SplineOperators,
    /// Dense reference has `max(refine * n, 2000)` intervals.
    pub refine: usize,
    pub ode: OdeOptions,
    pub svd_cutoff: f64,
}

const GOLDEN: f64 = 1.618_033_988_749_895;

/// Evaluates every error-matrix and coefficient-error inequality for one
/// data set. Refuses unbounded (Gaussian) noise.
pub fn verify_bounds(inputs: &BoundInputs) -> Result<BoundReport> {
    let bundle = inputs.bundle;
    if bundle.noise_sd > 0.0 && bundle.noise_kind == NoiseKind::Gaussian {
        return Err(CrnError::invalid(
            "error_analysis",
            "bound verification needs bounded noise; rerun with --noise-kind truncated",
        ));
    }
    let eps = bundle.noise_bound();
    let model = &inputs.setup.model;
    let basis = model.basis();
    let grid = bundle.grid;
    if inputs.ops.grid != grid {
        return Err(CrnError::invalid("error_analysis", "operators built for a different grid"));
    }
    let n = grid.intervals();
    let w = bundle.experiments;
    let b = grid.points;
    let m = model.species_count();
    let nb = basis.len();

    // exact trajectories and running integrals of the dictionary
    let dim = m + nb;
    let mut x = DMatrix::zeros(m, w * b);
    let mut d_int = DMatrix::zeros(nb, w * b);
    for (e, x0) in inputs.setup.initial_states.iter().enumerate() {
        let mut y0 = x0.clone();
        y0.resize(dim, 0.0);
        let scratch = std::cell::RefCell::new(vec![0.0; nb]);
        let sol = integrate(
            |_, y, dy| {
                let mut d = scratch.borrow_mut();
                basis.evaluate_into(&y[..m], &mut d);
                crate::model::mat_vec(model.coefficients(), &d, &mut dy[..m]);
                dy[m..].copy_from_slice(&d);
            },
            &y0,
            &grid.times(),
            &inputs.ode,
        )?;
        x.columns_mut(e * b, b).copy_from(&sol.states.rows(0, m));
        d_int.columns_mut(e * b, b).copy_from(&sol.states.rows(m, nb));
    }
    // the states the data were generated from, so that noise is measured exactly
    if let Some(clean) = &bundle.clean {
        x.copy_from(clean);
    } else if bundle.noise_sd == 0.0 {
        x.copy_from(&bundle.x);
    }
    let x_noisy = &bundle.x;
    let d = build_dictionary(basis, &x, b)?.d;
    let d_noisy = build_dictionary(basis, x_noisy, b)?.d;
    let mut x_dot = DMatrix::zeros(m, w * b);
    for c in 0..w * b {
        let r = model.rhs(x.column(c).as_slice())?;
        x_dot.column_mut(c).copy_from_slice(&r);
    }

    // dense reference for the fourth derivatives
    let dense = grid.refined(inputs.refine.max(10).max(2000usize.div_ceil(n)));
    let mut x_dense = DMatrix::zeros(m, w * dense.points);
    for (e, x0) in inputs.setup.initial_states.iter().enumerate() {
        let scratch = std::cell::RefCell::new(vec![0.0; nb]);
        let sol = integrate(
            |_, y, dy| model.rhs_into(y, &mut scratch.borrow_mut(), dy),
            x0,
            &dense.times(),
            &inputs.ode,
        )?;
        x_dense.columns_mut(e * dense.points, dense.points).copy_from(&sol.states);
    }
    let kappas = compute_kappas(basis, &x_dense, &dense, w)?;
    let c_beta = compute_c_beta(basis, &x)?;
    let c_max = c_beta.iter().copied().fold(0.0, f64::max);

    let stacked = stack_operators(inputs.ops.clone(), w)?;
    let e_dif = &x_dot - stacked.apply_l(x_noisy)?;
    let dj_noisy = stacked.apply_j(&d_noisy)?;
    let e_int = &d_int - &dj_noisy;

    let norms = inputs.ops.norms();
    let l_cols = &norms.l_col_norms;
    let j_cols = &norms.j_col_norms;
    let slack = 1.0 + 10.0 * eps;
    let nf = n as f64;

    let bound_dif = DMatrix::from_fn(m, w * b, |a, c| kappas.dif[(a, c / b)] / nf.powi(3) + eps * l_cols[c % b]);
    let bound_int = DMatrix::from_fn(nb, w * b, |beta, c| {
        kappas.int[(beta, c / b)] / nf.powi(4) + slack * eps * c_beta[beta] * j_cols[c % b]
    });

    let kd_max = kappas.dif.max();
    let ki_max = kappas.int.max();
    let cols = (w * b) as f64;
    let frob_dif = (m as f64 * cols).sqrt() * (kd_max / nf.powi(3) + eps * norms.summary.l_inf);
    let frob_int = (nb as f64 * cols).sqrt() * (ki_max / nf.powi(4) + slack * eps * c_max * norms.summary.j_inf);

    let e_dif_2 = spectral_norm(&e_dif);
    let e_int_2 = spectral_norm(&e_int);

    let smin = |a: &DMatrix<f64>| singular_values(a).last().copied().unwrap_or(0.0);
    let sv = SingularValueSummary {
        sigma_min_d: smin(&d),
        sigma_min_d_noisy: smin(&d_noisy),
        sigma_min_d_int: smin(&d_int),
        sigma_min_dj_noisy: smin(&dj_noisy),
        sigma_max_xdot: spectral_norm(&x_dot),
    };

    // unregularised estimates from the noisy data
    let c_exact = model.coefficients();
    let ls_dif = CompressedLs::new(&stacked.apply_l(x_noisy)?, &d_noisy, inputs.svd_cutoff)?;
    let ls_int = CompressedLs::new(&bundle.x0(), &dj_noisy, inputs.svd_cutoff)?;
    let err_dif = spectral_norm(&(c_exact - ls_dif.solve_all()?.0));
    let err_int = spectral_norm(&(c_exact - ls_int.solve_all()?.0));

    let delta_xi = spectral_norm(&(&d_noisy - &d));
    let xi = spectral_norm(&(x_noisy - &x));
    let thm2_dif = GOLDEN * delta_xi * sv.sigma_max_xdot / (sv.sigma_min_d * sv.sigma_min_d_noisy)
        + e_dif_2 / sv.sigma_min_d_noisy;
    let thm2_int = GOLDEN * e_int_2 / (sv.sigma_min_d_int * sv.sigma_min_dj_noisy) + xi / sv.sigma_min_d_int;

    // a-priori variant: every measured perturbation norm replaced by its bound
    let delta_xi_bound = slack * eps * (nb as f64 * cols).sqrt() * c_max;
    let xi_bound = eps * (m as f64 * cols).sqrt();
    let prior_dif = GOLDEN * delta_xi_bound * sv.sigma_max_xdot / (sv.sigma_min_d * sv.sigma_min_d_noisy)
        + frob_dif / sv.sigma_min_d_noisy;
    let prior_int = GOLDEN * frob_int / (sv.sigma_min_d_int * sv.sigma_min_dj_noisy) + xi_bound / sv.sigma_min_d_int;

    let checks = vec![
        InequalityCheck::entrywise("entrywise_dif", &e_dif, &bound_dif),
        InequalityCheck::entrywise("entrywise_int", &e_int, &bound_int),
        InequalityCheck::scalar("spectral_le_frobenius_dif", e_dif_2, e_dif.norm()),
        InequalityCheck::scalar("spectral_le_frobenius_int", e_int_2, e_int.norm()),
        InequalityCheck::scalar("frobenius_dif", e_dif.norm(), frob_dif),
        InequalityCheck::scalar("frobenius_int", e_int.norm(), frob_int),
        InequalityCheck::scalar("noise_dictionary", delta_xi, delta_xi_bound),
        InequalityCheck::scalar("noise_data", xi, xi_bound),
        InequalityCheck::scalar("coefficient_dif", err_dif, thm2_dif),
        InequalityCheck::scalar("coefficient_int", err_int, thm2_int),
        InequalityCheck::scalar("coefficient_dif_apriori", err_dif, prior_dif),
        InequalityCheck::scalar("coefficient_int_apriori", err_int, prior_int),
    ];

    let row_max = |k: &DMatrix<f64>| k.row_iter().map(|r| r.max()).collect::<Vec<f64>>();
    Ok(BoundReport {
        n,
        experiments: w,
        epsilon: eps,
        kappa_dif: row_max(&kappas.dif),
        kappa_int: row_max(&kappas.int),
        c_beta,
        l_inf: norms.summary.l_inf,
        j_inf: norms.summary.j_inf,
        frobenius_bounds: [frob_dif, frob_int],
        coefficient_bounds: [thm2_dif, thm2_int],
        coefficient_errors: [err_dif, err_int],
        singular_values: sv,
        checks,
    })
}

/// Convenience wrapper building the operators for `bundle`'s grid.
pub fn verify_bounds_for(setup: &SampledSetup, bundle: &TrajectoryBundle, ode: OdeOptions) -> Result<BoundReport> {
    let ops = build_operators(&bundle.grid)?;
    verify_bounds(&BoundInputs {
        setup,
        bundle,
        ops: &ops,
        refine: 10,
        ode,
        svd_cutoff: 1e-10,
    })
}

/// Log-log least-squares fit of error against `n`.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub ns: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub excluded: usize,
    pub reference_slope: Option<f64>,
}

pub fn fit_decay(points: &[(f64, f64)], reference_slope: Option<f64>) -> Result<DecayFit> {
    let valid: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(n, e)| n > 0.0 && e > 0.0 && e.is_finite())
        .collect();
    let excluded = points.len() - valid.len();
    if excluded > 0 {
        log::warn!("error_analysis: {excluded} nonpositive sweep values excluded from the decay fit");
    }
    if valid.len() < 4 {
        return Err(CrnError::invalid(
            "error_analysis",
            format!("decay fit needs at least 4 positive points, got {}", valid.len()),
        ));
    }
    let (slope, intercept) = loglog_line(&valid);
    Ok(DecayFit {
        ns: valid.iter().map(|p| p.0).collect(),
        errors: valid.iter().map(|p| p.1).collect(),
        slope,
        intercept,
        excluded,
        reference_slope,
    })
}

fn loglog_line(points: &[(f64, f64)]) -> (f64, f64) {
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.log10()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log10()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Local slope over a window of three consecutive sweep points centred on
/// each point (two at the ends); `None` with fewer than two points.
pub fn window_slopes(points: &[(f64, f64)]) -> Vec<Option<f64>> {
    (0..points.len())
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(points.len().saturating_sub(1));
            let window: Vec<(f64, f64)> = points[lo..=hi].iter().copied().filter(|p| p.0 > 0.0 && p.1 > 0.0).collect();
            (window.len() >= 2).then(|| loglog_line(&window).0)
        })
        .collect()
}

/// Theory slopes of the Frobenius error bounds.
pub fn reference_slope(method: Method, noisy: bool) -> f64 {
    match (method.formulation(), noisy) {
        (Formulation::Differential, false) => -2.5,
        (Formulation::Integral, false) => -3.5,
        (Formulation::Differential, true) => 1.5,
        (Formulation::Integral, true) => 0.5,
    }
}

/// `None` for empty input or any negative or non-finite value.
pub fn geometric_mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return None;
    }
    if values.contains(&0.0) {
        return Some(0.0);
    }
    Some((values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp())
}

pub const HISTOGRAM_CAP: usize = 10;

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub n: usize,
    pub method: Method,
    pub trials: usize,
    pub gmean_error: f64,
    pub min_error: f64,
    pub max_error: f64,
    /// Counts of support mismatch `0..=10`, the last bin holding `>= 10`.
    pub mismatch_histogram: [usize; HISTOGRAM_CAP + 1],
    pub kirchhoff_histogram: [usize; HISTOGRAM_CAP + 1],
    pub kirchhoff_size_mismatch: usize,
}

impl MethodSummary {
    pub fn zero_mismatch_fraction(&self) -> f64 {
        self.mismatch_histogram[0] as f64 / self.trials.max(1) as f64
    }
}

/// Per `(n, method)` summaries in ascending order.
pub fn aggregate_trials(reports: &[ErrorReport]) -> Result<Vec<MethodSummary>> {
    if reports.is_empty() {
        return Err(CrnError::invalid("error_analysis", "no trial reports to aggregate"));
    }
    let mut groups: BTreeMap<(usize, Method), Vec<&ErrorReport>> = BTreeMap::new();
    for r in reports {
        for method in r.methods.keys() {
            groups.entry((r.n, *method)).or_default().push(r);
        }
    }
    let mut out = Vec::new();
    for ((n, method), group) in groups {
        let errors: Vec<f64> = group.iter().map(|r| r.methods[&method].spectral).collect();
        let mut mismatch_histogram = [0; HISTOGRAM_CAP + 1];
        let mut kirchhoff_histogram = [0; HISTOGRAM_CAP + 1];
        let mut kirchhoff_size_mismatch = 0;
        for r in &group {
            mismatch_histogram[r.methods[&method].support_mismatch.min(HISTOGRAM_CAP)] += 1;
            match r.kirchhoff.get(&method) {
                Some(KirchhoffMismatch::Count(c)) => kirchhoff_histogram[(*c).min(HISTOGRAM_CAP)] += 1,
                Some(KirchhoffMismatch::SizeMismatch) => kirchhoff_size_mismatch += 1,
                None => {}
            }
        }
        out.push(MethodSummary {
            n,
            method,
            trials: group.len(),
            gmean_error: geometric_mean(&errors).unwrap_or(f64::NAN),
            min_error: errors.iter().copied().fold(f64::INFINITY, f64::min),
            max_error: errors.iter().copied().fold(0.0, f64::max),
            mismatch_histogram,
            kirchhoff_histogram,
            kirchhoff_size_mismatch,
        });
    }
    Ok(out)
}

//! Reading a reaction graph off a sparse coefficient matrix.
//!
//! The active columns of `C` define candidate source complexes. A Kirchhoff
//! matrix over those complexes is then fitted to `C_eff ≈ Q_eff K` with
//! nonnegative off-diagonal rates; the diagonal is tied to the negative
//! column sums so the column-conservation constraint holds exactly.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{format_complex, MonomialBasis};
use crate::error::{CrnError, Result};
use crate::linalg::{numerical_rank, singular_values};
use crate::model::{CrnModel, Reaction, ReactionList};
use crate::nnls::{lawson_hanson, projected_gradient};
use crate::recovery::rows_of;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    ActiveColumns,
    ActivePlusZero,
    SpeciesAsSources,
}

impl FromStr for Scheme {
    type Err = CrnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "active_columns" => Ok(Scheme::ActiveColumns),
            "active_plus_zero" => Ok(Scheme::ActivePlusZero),
            "species_as_sources" => Ok(Scheme::SpeciesAsSources),
            other => Err(CrnError::invalid("graph_recovery", format!("unknown scheme '{other}'"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::ActiveColumns => "active_columns",
            Scheme::ActivePlusZero => "active_plus_zero",
            Scheme::SpeciesAsSources => "species_as_sources",
        })
    }
}

/// Columns of `C` kept as source complexes.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveModel {
    pub c_eff: DMatrix<f64>,
    /// Basis indices, ascending; the zero complex is not listed.
    pub source_indices: Vec<usize>,
    pub q_eff: DMatrix<f64>,
    pub scheme: Scheme,
    pub zero_complex: bool,
}

impl EffectiveModel {
    /// Number of complexes including the zero complex.
    pub fn dim(&self) -> usize {
        self.q_eff.ncols()
    }

    /// Exponent vector of node `i`; the zero complex is all zeros.
    pub fn node_exponents(&self, i: usize) -> Vec<u32> {
        self.q_eff.column(i).iter().map(|&v| v as u32).collect()
    }

    pub fn node_label(&self, i: usize, species_names: &[String]) -> String {
        format_complex(&self.node_exponents(i), species_names)
    }
}

/// Keeps the columns of `c` whose largest magnitude exceeds `tau` (plus, for
/// [`Scheme::SpeciesAsSources`], every single-species column). Under
/// [`Scheme::ActivePlusZero`] the zero complex is appended as well.
pub fn filter_effective(c: &DMatrix<f64>, basis: &MonomialBasis, tau: f64, scheme: Scheme) -> Result<EffectiveModel> {
    if !(tau > 0.0) {
        return Err(CrnError::invalid("graph_recovery", "threshold tau must be positive"));
    }
    if c.nrows() != basis.species_count() || c.ncols() != basis.len() {
        return Err(CrnError::invalid("graph_recovery", "coefficient matrix does not match basis"));
    }
    let mut active: Vec<usize> = (0..c.ncols()).filter(|&i| c.column(i).amax() > tau).collect();
    if active.is_empty() {
        return Err(CrnError::EmptyModel { tau });
    }
    if scheme == Scheme::SpeciesAsSources {
        active.extend((0..basis.species_count()).map(|a| basis.species_index(a)));
        active.sort_unstable();
        active.dedup();
    }
    let model = EffectiveModel {
        c_eff: c.select_columns(&active),
        q_eff: basis.stoichiometry().select_columns(&active),
        source_indices: active,
        scheme,
        zero_complex: false,
    };
    if scheme == Scheme::ActivePlusZero {
        append_zero_complex(model)
    } else {
        Ok(model)
    }
}

pub fn append_zero_complex(model: EffectiveModel) -> Result<EffectiveModel> {
    if model.zero_complex {
        return Err(CrnError::invalid("graph_recovery", "zero complex already appended"));
    }
    if model.source_indices.is_empty() {
        return Err(CrnError::EmptyModel { tau: f64::NAN });
    }
    let extend = |m: &DMatrix<f64>| m.clone().insert_column(m.ncols(), 0.0);
    Ok(EffectiveModel {
        c_eff: extend(&model.c_eff),
        q_eff: extend(&model.q_eff),
        zero_complex: true,
        ..model
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    /// Node positions in the effective model.
    pub source: usize,
    pub target: usize,
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct KirchhoffFit {
    /// Raw minimiser.
    pub k: DMatrix<f64>,
    /// `k` with sub-threshold rates dropped and the diagonal rebuilt.
    pub k_pruned: DMatrix<f64>,
    pub residual_fro: f64,
    pub edges: Vec<Edge>,
    pub edge_tol: f64,
    /// Some column problem had a rank-deficient design, so the minimiser
    /// need not be unique.
    pub degenerate: bool,
    /// Largest violation of the NNLS optimality conditions.
    pub kkt_residual: f64,
}

/// Relative pruning level used when no explicit edge tolerance is given.
pub const DEFAULT_EDGE_TOL_REL: f64 = 1e-4;

/// Fits `min ||C_eff - Q_eff K||_F` over Kirchhoff matrices. The problem
/// separates by column: column `i` of `K` only changes column `i` of the
/// product, through `sum_j k_ji (Q_j - Q_i)`.
pub fn fit_kirchhoff(model: &EffectiveModel, edge_tol: Option<f64>) -> Result<KirchhoffFit> {
    let r = model.dim();
    if r == 0 {
        return Err(CrnError::EmptyModel { tau: f64::NAN });
    }
    if model.c_eff.shape() != model.q_eff.shape() {
        return Err(CrnError::invalid("graph_recovery", "C_eff and Q_eff shapes differ"));
    }
    let m = model.q_eff.nrows();
    let mut k = DMatrix::zeros(r, r);
    let mut degenerate = false;
    let mut kkt: f64 = 0.0;
    for i in 0..r {
        let others: Vec<usize> = (0..r).filter(|&j| j != i).collect();
        if others.is_empty() {
            continue;
        }
        let design = DMatrix::from_fn(m, others.len(), |a, c| model.q_eff[(a, others[c])] - model.q_eff[(a, i)]);
        let b: DVector<f64> = model.c_eff.column(i).into_owned();
        let sv = singular_values(&design);
        if numerical_rank(&sv, 1e-12) < others.len() {
            degenerate = true;
        }
        let sol = if r > 50 {
            projected_gradient(&design, &b, 100_000, 1e-14)
        } else {
            lawson_hanson(&design, &b)?
        };
        let grad = -(design.transpose() * (&b - &design * &sol.x));
        for (c, &j) in others.iter().enumerate() {
            k[(j, i)] = sol.x[c];
            let violation = if sol.x[c] > 0.0 { grad[c].abs() } else { (-grad[c]).max(0.0) };
            kkt = kkt.max(violation);
        }
        k[(i, i)] = -others.iter().map(|&j| k[(j, i)]).sum::<f64>();
    }
    let residual_fro = (&model.c_eff - &model.q_eff * &k).norm();

    let max_off = (0..r)
        .flat_map(|i| (0..r).filter(move |&j| j != i).map(move |j| (j, i)))
        .map(|p| k[p])
        .fold(0.0, f64::max);
    let edge_tol = edge_tol.unwrap_or(DEFAULT_EDGE_TOL_REL * max_off);
    let mut edges = Vec::new();
    let mut k_pruned = DMatrix::zeros(r, r);
    for i in 0..r {
        for j in 0..r {
            if i != j && k[(j, i)] > edge_tol {
                edges.push(Edge { source: i, target: j, rate: k[(j, i)] });
                k_pruned[(j, i)] = k[(j, i)];
                k_pruned[(i, i)] -= k[(j, i)];
            }
        }
    }
    Ok(KirchhoffFit {
        k,
        k_pruned,
        residual_fro,
        edges,
        edge_tol,
        degenerate,
        kkt_residual: kkt,
    })
}

impl KirchhoffFit {
    /// Coefficients generated by the edge list alone.
    pub fn coefficients_from_edges(&self, model: &EffectiveModel) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(model.q_eff.nrows(), model.dim());
        for e in &self.edges {
            let delta = model.q_eff.column(e.target) - model.q_eff.column(e.source);
            let mut col = c.column_mut(e.source);
            col.axpy(e.rate, &delta, 1.0);
        }
        c
    }

    /// Edges as basis-index reactions; `None` for edges touching the zero
    /// complex, which has no basis index.
    pub fn reaction_list(&self, model: &EffectiveModel) -> Option<ReactionList> {
        let node = |i: usize| model.source_indices.get(i).copied();
        self.edges
            .iter()
            .map(|e| {
                Some(Reaction {
                    source: node(e.source)?,
                    target: node(e.target)?,
                    rate: e.rate,
                })
            })
            .collect::<Option<Vec<_>>>()
            .map(ReactionList::new)
    }

    /// Recovered edges as `(source exponents, target exponents)` pairs,
    /// sorted; useful for comparing graphs independent of node order.
    pub fn edge_set(&self, model: &EffectiveModel) -> Vec<(Vec<u32>, Vec<u32>)> {
        let mut v: Vec<_> = self
            .edges
            .iter()
            .map(|e| (model.node_exponents(e.source), model.node_exponents(e.target)))
            .collect();
        v.sort();
        v
    }

    pub fn report(&self, model: &EffectiveModel, species_names: &[String]) -> FitReport {
        FitReport {
            scheme: model.scheme,
            zero_complex: model.zero_complex,
            nodes: (0..model.dim()).map(|i| model.node_label(i, species_names)).collect(),
            source_indices: model.source_indices.clone(),
            k: rows_of(&self.k),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeReport {
                    source: model.node_label(e.source, species_names),
                    target: model.node_label(e.target, species_names),
                    rate: e.rate,
                })
                .collect(),
            residual_fro: self.residual_fro,
            edge_tol: self.edge_tol,
            degenerate: self.degenerate,
            kkt_residual: self.kkt_residual,
        }
    }
}

/// Edge set of a ground-truth model in the same form as
/// [`KirchhoffFit::edge_set`].
pub fn true_edge_set(model: &CrnModel) -> Vec<(Vec<u32>, Vec<u32>)> {
    let mut v: Vec<_> = model
        .reactions()
        .reactions
        .iter()
        .map(|r| (model.basis().exponent(r.source).to_vec(), model.basis().exponent(r.target).to_vec()))
        .collect();
    v.sort();
    v
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeReport {
    pub source: String,
    pub target: String,
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub scheme: Scheme,
    pub zero_complex: bool,
    pub nodes: Vec<String>,
    pub source_indices: Vec<usize>,
    pub k: Vec<Vec<f64>>,
    pub edges: Vec<EdgeReport>,
    pub residual_fro: f64,
    pub edge_tol: f64,
    pub degenerate: bool,
    pub kkt_residual: f64,
}

/// Three significant digits, switching to scientific notation for very
/// small or large magnitudes.
pub fn sig3(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if (-3..4).contains(&mag) {
        let decimals = (2 - mag).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.2e}")
    }
}

/// DOT digraph of the fitted network; nodes in basis order with the zero
/// complex last, edges in (source, target) order.
pub fn export_graph(fit: &KirchhoffFit, model: &EffectiveModel, species_names: &[String]) -> String {
    let node_id = |i: usize| match model.source_indices.get(i) {
        Some(idx) => format!("c{idx}"),
        None => "zero".to_string(),
    };
    let mut out = String::from("digraph crn {\n    rankdir=LR;\n");
    for i in 0..model.dim() {
        let _ = writeln!(out, "    {} [label=\"{}\"];", node_id(i), model.node_label(i, species_names));
    }
    let mut edges = fit.edges.clone();
    edges.sort_by_key(|e| (e.source, e.target));
    for e in edges {
        let _ = writeln!(
            out,
            "    {} -> {} [label=\"{}\"];",
            node_id(e.source),
            node_id(e.target),
            sig3(e.rate)
        );
    }
    out.push_str("}\n");
    out
}

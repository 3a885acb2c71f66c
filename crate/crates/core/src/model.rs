//! Reaction-network data structures and the mass-action right-hand side.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::basis::{Exponents, MonomialBasis};
use crate::error::{CrnError, Result};

/// Column-conservative rate matrix: `K[j][i]` is the rate constant of the
/// reaction `i -> j`, diagonals carry the negative total outflow.
#[derive(Debug, Clone, PartialEq)]
pub struct KirchhoffMatrix(DMatrix<f64>);

impl KirchhoffMatrix {
    /// Wraps a square matrix after checking the Kirchhoff structure: zero
    /// column sums (relative to the largest entry), nonnegative
    /// off-diagonals, nonpositive diagonal.
    pub fn new(k: DMatrix<f64>) -> Result<Self> {
        if k.nrows() != k.ncols() {
            return Err(CrnError::invalid("mass_action_core", "Kirchhoff matrix must be square"));
        }
        let scale = k.amax().max(f64::MIN_POSITIVE);
        for i in 0..k.ncols() {
            let sum: f64 = k.column(i).sum();
            if sum.abs() > 1e-12 * scale {
                return Err(CrnError::invalid(
                    "mass_action_core",
                    format!("column {i} of Kirchhoff matrix sums to {sum:e}"),
                ));
            }
            for j in 0..k.nrows() {
                let v = k[(j, i)];
                if (i == j && v > 0.0) || (i != j && v < 0.0) {
                    return Err(CrnError::invalid(
                        "mass_action_core",
                        format!("Kirchhoff sign pattern violated at ({j},{i}): {v:e}"),
                    ));
                }
            }
        }
        Ok(KirchhoffMatrix(k))
    }

    pub fn zeros(dim: usize) -> Self {
        KirchhoffMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

/// A directed reaction between two complexes (basis indices).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    pub source: usize,
    pub target: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReactionList {
    pub reactions: Vec<Reaction>,
}

impl ReactionList {
    pub fn new(reactions: Vec<Reaction>) -> Self {
        ReactionList { reactions }
    }

    pub fn validate(&self, basis: &MonomialBasis) -> Result<()> {
        for r in &self.reactions {
            if r.source >= basis.len() || r.target >= basis.len() {
                return Err(CrnError::invalid(
                    "mass_action_core",
                    format!("reaction {} -> {} references a complex outside the basis", r.source, r.target),
                ));
            }
            if r.source == r.target {
                return Err(CrnError::invalid(
                    "mass_action_core",
                    format!("self-loop on complex {}", r.source),
                ));
            }
            if !(r.rate > 0.0 && r.rate.is_finite()) {
                return Err(CrnError::invalid(
                    "mass_action_core",
                    format!("rate constant {} of {} -> {} is not positive", r.rate, r.source, r.target),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.reactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reactions.is_empty()
    }
}

/// A mass-action network: `dx/dt = Q K d(x) = C d(x)`.
#[derive(Debug, Clone)]
pub struct CrnModel {
    species_names: Vec<String>,
    basis: MonomialBasis,
    reactions: ReactionList,
    kirchhoff: KirchhoffMatrix,
    stoichiometry: DMatrix<f64>,
    coefficients: DMatrix<f64>,
}

impl CrnModel {
    /// Builds `K` from the reaction list and derives `C = Q K`.
    pub fn assemble(species_names: Vec<String>, basis: MonomialBasis, reactions: ReactionList) -> Result<Self> {
        if species_names.len() != basis.species_count() {
            return Err(CrnError::invalid(
                "mass_action_core",
                format!(
                    "{} species names for a basis over {} species",
                    species_names.len(),
                    basis.species_count()
                ),
            ));
        }
        reactions.validate(&basis)?;
        let n = basis.len();
        let mut k = DMatrix::zeros(n, n);
        for r in &reactions.reactions {
            k[(r.target, r.source)] += r.rate;
            k[(r.source, r.source)] -= r.rate;
        }
        let stoichiometry = basis.stoichiometry();
        let coefficients = &stoichiometry * &k;
        Ok(CrnModel {
            species_names,
            basis,
            reactions,
            kirchhoff: KirchhoffMatrix(k),
            stoichiometry,
            coefficients,
        })
    }

    pub fn species_names(&self) -> &[String] {
        &self.species_names
    }

    pub fn species_count(&self) -> usize {
        self.species_names.len()
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn reactions(&self) -> &ReactionList {
        &self.reactions
    }

    pub fn kirchhoff(&self) -> &KirchhoffMatrix {
        &self.kirchhoff
    }

    pub fn stoichiometry(&self) -> &DMatrix<f64> {
        &self.stoichiometry
    }

    /// Coefficient matrix `C = Q K` (species x complexes).
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    /// Same network with every rate constant replaced, in reaction order.
    pub fn with_rates(&self, rates: &[f64]) -> Result<Self> {
        if rates.len() != self.reactions.len() {
            return Err(CrnError::invalid(
                "mass_action_core",
                format!("{} rates for {} reactions", rates.len(), self.reactions.len()),
            ));
        }
        let reactions = ReactionList::new(
            self.reactions
                .reactions
                .iter()
                .zip(rates)
                .map(|(r, &rate)| Reaction { rate, ..*r })
                .collect(),
        );
        CrnModel::assemble(self.species_names.clone(), self.basis.clone(), reactions)
    }

    /// Right-hand side `C d(x)`.
    pub fn rhs(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.basis.evaluate(x)?;
        let mut out = vec![0.0; self.species_count()];
        mat_vec(&self.coefficients, &d, &mut out);
        Ok(out)
    }

    /// Allocation-light right-hand side used by the integrator; `scratch`
    /// must hold `N` entries.
    pub fn rhs_into(&self, x: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        self.basis.evaluate_into(x, scratch);
        mat_vec(&self.coefficients, scratch, out);
    }

    /// Basis indices of every complex that takes part in at least one
    /// reaction, sorted.
    pub fn participating_complexes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .reactions
            .reactions
            .iter()
            .flat_map(|r| [r.source, r.target])
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ModelFile::from_json(&text)?.into_model()
    }

    pub fn to_model_file(&self) -> ModelFile {
        ModelFile {
            species: self.species_names.clone(),
            max_degree: self.basis.max_degree(),
            reactions: self
                .reactions
                .reactions
                .iter()
                .map(|r| ReactionEntry {
                    source: self.basis.exponent(r.source).to_vec(),
                    target: self.basis.exponent(r.target).to_vec(),
                    k: r.rate,
                })
                .collect(),
        }
    }
}

pub(crate) fn mat_vec(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (j, &vj) in v.iter().enumerate() {
        if vj == 0.0 {
            continue;
        }
        let col = m.column(j);
        for (o, &c) in out.iter_mut().zip(col.iter()) {
            *o += c * vj;
        }
    }
}

/// On-disk model description. Complexes are written as exponent vectors
/// and resolved against the basis on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub species: Vec<String>,
    pub max_degree: u32,
    pub reactions: Vec<ReactionEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionEntry {
    pub source: Exponents,
    pub target: Exponents,
    pub k: f64,
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn into_model(self) -> Result<CrnModel> {
        let basis = MonomialBasis::new(self.species.len(), self.max_degree)?;
        let mut reactions = Vec::with_capacity(self.reactions.len());
        for entry in &self.reactions {
            let resolve = |e: &Exponents| {
                basis.index_of(e).ok_or_else(|| {
                    CrnError::invalid(
                        "mass_action_core",
                        format!("complex {e:?} is not in the degree-{} basis", self.max_degree),
                    )
                })
            };
            reactions.push(Reaction {
                source: resolve(&entry.source)?,
                target: resolve(&entry.target)?,
                rate: entry.k,
            });
        }
        CrnModel::assemble(self.species, basis, ReactionList::new(reactions))
    }
}

/// Outcome of the chemical-validity test on a coefficient matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassActionCheck {
    pub valid: bool,
    /// `(species, complex)` pairs where a species loses mass through a
    /// monomial that does not contain it.
    pub violations: Vec<(usize, usize)>,
}

/// A polynomial system `C d(x)` is a mass-action network iff every negative
/// coefficient in row `a` multiplies a monomial containing `x_a`.
pub fn validate_mass_action(c: &DMatrix<f64>, basis: &MonomialBasis, tol: f64) -> Result<MassActionCheck> {
    if c.nrows() != basis.species_count() || c.ncols() != basis.len() {
        return Err(CrnError::invalid(
            "mass_action_core",
            format!(
                "coefficient matrix is {}x{}, basis needs {}x{}",
                c.nrows(),
                c.ncols(),
                basis.species_count(),
                basis.len()
            ),
        ));
    }
    let mut violations = Vec::new();
    for a in 0..c.nrows() {
        for i in 0..c.ncols() {
            if c[(a, i)] < -tol && basis.exponent(i)[a] == 0 {
                violations.push((a, i));
            }
        }
    }
    Ok(MassActionCheck {
        valid: violations.is_empty(),
        violations,
    })
}

/// Largest deviation over time of the summed concentration of `moiety`
/// from its initial value. `trajectory` holds one state per column.
pub fn conservation_residual(model: &CrnModel, moiety: &[usize], trajectory: &DMatrix<f64>) -> Result<f64> {
    if moiety.is_empty() {
        return Err(CrnError::invalid("mass_action_core", "moiety index set is empty"));
    }
    if trajectory.nrows() != model.species_count() {
        return Err(CrnError::invalid(
            "mass_action_core",
            format!("trajectory has {} rows for {} species", trajectory.nrows(), model.species_count()),
        ));
    }
    if let Some(&bad) = moiety.iter().find(|&&a| a >= model.species_count()) {
        return Err(CrnError::invalid("mass_action_core", format!("species index {bad} out of range")));
    }
    if trajectory.ncols() == 0 {
        return Ok(0.0);
    }
    let total = |col: usize| moiety.iter().map(|&a| trajectory[(a, col)]).sum::<f64>();
    let start = total(0);
    Ok((0..trajectory.ncols())
        .map(|c| (total(c) - start).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn m1_unit() -> CrnModel {
        presets::m1().with_rates(&[1.0; 4]).unwrap()
    }

    #[test]
    fn m1_fixed_point_and_hand_expansion() {
        let m = m1_unit();
        assert_eq!(m.rhs(&[1.0, 1.0, 1.0, 1.0]).unwrap(), vec![0.0; 4]);
        assert_eq!(m.rhs(&[2.0, 0.0, 1.0, 0.0]).unwrap(), vec![-2.0, 0.0, -2.0, 2.0]);
    }

    #[test]
    fn empty_reaction_list_gives_zero_model() {
        let basis = MonomialBasis::new(2, 2).unwrap();
        let m = CrnModel::assemble(vec!["a".into(), "b".into()], basis, ReactionList::default()).unwrap();
        assert!(m.kirchhoff().matrix().iter().all(|&v| v == 0.0));
        assert!(m.coefficients().iter().all(|&v| v == 0.0));
        assert_eq!(m.rhs(&[3.0, 7.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_reactions() {
        let basis = MonomialBasis::new(2, 1).unwrap();
        let names = vec!["a".to_string(), "b".to_string()];
        let bad_rate = ReactionList::new(vec![Reaction { source: 0, target: 1, rate: 0.0 }]);
        assert!(CrnModel::assemble(names.clone(), basis.clone(), bad_rate).is_err());
        let bad_index = ReactionList::new(vec![Reaction { source: 0, target: 9, rate: 1.0 }]);
        assert!(CrnModel::assemble(names.clone(), basis.clone(), bad_index).is_err());
        let self_loop = ReactionList::new(vec![Reaction { source: 1, target: 1, rate: 1.0 }]);
        assert!(CrnModel::assemble(names, basis, self_loop).is_err());
    }

    #[test]
    fn m1_coefficients_are_chemically_valid() {
        let m = m1_unit();
        let check = validate_mass_action(m.coefficients(), m.basis(), 1e-12).unwrap();
        assert!(check.valid);
        let zero = DMatrix::zeros(4, 14);
        assert!(validate_mass_action(&zero, m.basis(), 1e-12).unwrap().valid);
    }

    #[test]
    fn species_losing_mass_without_consuming_is_flagged() {
        let basis = MonomialBasis::new(2, 2).unwrap();
        let mut c = DMatrix::zeros(2, 5);
        // species 0 decays through the monomial x_1 alone
        c[(0, 1)] = -1.0;
        let check = validate_mass_action(&c, &basis, 1e-12).unwrap();
        assert!(!check.valid);
        assert_eq!(check.violations, vec![(0, 1)]);
    }

    #[test]
    fn moiety_residuals() {
        let m = m1_unit();
        assert!(conservation_residual(&m, &[], &DMatrix::zeros(4, 2)).is_err());
        // decay x' = -x is not conserved
        let basis = MonomialBasis::new(1, 1).unwrap();
        let names = vec!["x".to_string()];
        let decay = CrnModel::assemble(names, basis, ReactionList::default()).unwrap();
        let traj = DMatrix::from_row_slice(1, 3, &[1.0, (-1.0f64).exp(), (-2.0f64).exp()]);
        let r = conservation_residual(&decay, &[0], &traj).unwrap();
        assert!((r - (1.0 - (-2.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn model_file_roundtrip_and_unknown_complex() {
        let m = presets::m1();
        let file = m.to_model_file();
        let text = serde_json::to_string(&file).unwrap();
        let back = ModelFile::from_json(&text).unwrap().into_model().unwrap();
        assert_eq!(back.coefficients(), m.coefficients());

        let mut bad = file.clone();
        bad.reactions[0].source = vec![3, 0, 0, 0];
        assert!(bad.into_model().is_err());
    }

    #[test]
    fn kirchhoff_validation() {
        let good = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 1.0, -2.0]);
        assert!(KirchhoffMatrix::new(good).is_ok());
        let bad_sum = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.5, -2.0]);
        assert!(KirchhoffMatrix::new(bad_sum).is_err());
        let bad_sign = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        assert!(KirchhoffMatrix::new(bad_sign).is_err());
    }
}

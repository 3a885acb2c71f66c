//! Enumeration of mass-action complexes and evaluation of the monomial
//! dictionary.
//!
//! The ordering of complexes is graded-lexicographic: all degree-1
//! complexes in species order, then every degree-2 complex in descending
//! lexicographic order of its exponent vector, and so on. For two species
//! and degree two this gives `(1,0) (0,1) (2,0) (1,1) (0,2)`. Every matrix
//! column index in the crate refers to this ordering.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CrnError, Result};

/// Exponent vector of a single complex (a monomial in the concentrations).
pub type Exponents = Vec<u32>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BasisSpec", into = "BasisSpec")]
pub struct MonomialBasis {
    species_count: usize,
    max_degree: u32,
    exponents: Vec<Exponents>,
    #[serde(skip)]
    lookup: HashMap<Exponents, usize>,
}

#[derive(Serialize, Deserialize)]
struct BasisSpec {
    species_count: usize,
    max_degree: u32,
}

impl TryFrom<BasisSpec> for MonomialBasis {
    type Error = CrnError;
    fn try_from(spec: BasisSpec) -> Result<Self> {
        MonomialBasis::new(spec.species_count, spec.max_degree)
    }
}

impl From<MonomialBasis> for BasisSpec {
    fn from(b: MonomialBasis) -> Self {
        BasisSpec {
            species_count: b.species_count,
            max_degree: b.max_degree,
        }
    }
}

/// Number of complexes for `species` species up to total degree `degree`,
/// i.e. `binom(species + degree, degree) - 1`.
pub fn complex_count(species: usize, degree: u32) -> usize {
    let mut acc: u128 = 1;
    for k in 1..=degree as u128 {
        acc = acc * (species as u128 + k) / k;
    }
    (acc - 1) as usize
}

fn push_degree(prefix: &mut Exponents, remaining_species: usize, degree: u32, out: &mut Vec<Exponents>) {
    if remaining_species == 1 {
        prefix.push(degree);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for e in (0..=degree).rev() {
        prefix.push(e);
        push_degree(prefix, remaining_species - 1, degree - e, out);
        prefix.pop();
    }
}

impl MonomialBasis {
    /// Enumerates every nonzero exponent vector with total degree at most
    /// `max_degree` over `species_count` species.
    pub fn new(species_count: usize, max_degree: u32) -> Result<Self> {
        if species_count == 0 {
            return Err(CrnError::invalid("mass_action_core", "species count must be positive"));
        }
        if max_degree == 0 {
            return Err(CrnError::invalid("mass_action_core", "maximum degree must be positive"));
        }
        let mut exponents = Vec::with_capacity(complex_count(species_count, max_degree));
        let mut prefix = Vec::with_capacity(species_count);
        for d in 1..=max_degree {
            push_degree(&mut prefix, species_count, d, &mut exponents);
        }
        let lookup = exponents
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        Ok(MonomialBasis {
            species_count,
            max_degree,
            exponents,
            lookup,
        })
    }

    pub fn species_count(&self) -> usize {
        self.species_count
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    /// Number of complexes `N`.
    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Exponents] {
        &self.exponents
    }

    pub fn exponent(&self, index: usize) -> &[u32] {
        &self.exponents[index]
    }

    pub fn degree(&self, index: usize) -> u32 {
        self.exponents[index].iter().sum()
    }

    pub fn index_of(&self, exponents: &[u32]) -> Option<usize> {
        self.lookup.get(exponents).copied()
    }

    /// Index of the degree-1 complex consisting of species `alpha` alone.
    pub fn species_index(&self, alpha: usize) -> usize {
        // degree-1 complexes come first, in species order
        alpha
    }

    /// Stoichiometry matrix `Q` (species x complexes); column `i` is the
    /// exponent vector of complex `i`.
    pub fn stoichiometry(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.species_count, self.len(), |a, i| self.exponents[i][a] as f64)
    }

    /// Dictionary vector `d(x)`: entry `i` is `prod_a x_a^{Q_{a,i}}`.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.species_count {
            return Err(CrnError::invalid(
                "mass_action_core",
                format!("state has {} entries, basis expects {}", x.len(), self.species_count),
            ));
        }
        let mut out = vec![0.0; self.len()];
        self.evaluate_into(x, &mut out);
        Ok(out)
    }

    /// Allocation-free variant of [`evaluate`](Self::evaluate); dimensions
    /// are the caller's responsibility.
    pub fn evaluate_into(&self, x: &[f64], out: &mut [f64]) {
        for (slot, e) in out.iter_mut().zip(&self.exponents) {
            let mut v = 1.0;
            for (&xa, &ea) in x.iter().zip(e) {
                if ea > 0 {
                    v *= xa.powi(ea as i32);
                }
            }
            *slot = v;
        }
    }

    /// Human readable formula of a complex, e.g. `A + cat` or `2 x1`.
    pub fn label(&self, index: usize, species_names: &[String]) -> String {
        format_complex(&self.exponents[index], species_names)
    }
}

/// Formula for an arbitrary exponent vector; the empty complex renders as `∅`.
pub fn format_complex(exponents: &[u32], species_names: &[String]) -> String {
    let parts: Vec<String> = exponents
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0)
        .map(|(a, &e)| {
            let name = species_names
                .get(a)
                .cloned()
                .unwrap_or_else(|| format!("x{}", a + 1));
            if e == 1 {
                name
            } else {
                format!("{e} {name}")
            }
        })
        .collect();
    if parts.is_empty() {
        "∅".to_string()
    } else {
        parts.join(" + ")
    }
}

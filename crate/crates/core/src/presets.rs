//! The three benchmark networks and their experimental protocols.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::basis::MonomialBasis;
use crate::error::{CrnError, Result};
use crate::model::{CrnModel, Reaction, ReactionList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    M1,
    M20,
    Vdv,
}

impl FromStr for PresetName {
    type Err = CrnError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Ok(PresetName::M1),
            "m20" => Ok(PresetName::M20),
            "vdv" | "van-de-vusse" => Ok(PresetName::Vdv),
            other => Err(CrnError::invalid("cli_driver", format!("unknown preset '{other}'"))),
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PresetName::M1 => "m1",
            PresetName::M20 => "m20",
            PresetName::Vdv => "vdv",
        })
    }
}

/// A benchmark network together with the protocol used to generate data.
#[derive(Debug, Clone)]
pub struct Preset {
    pub name: PresetName,
    /// Network with placeholder (unit) rates when `k_range` is set.
    pub model: CrnModel,
    /// Rates are resampled uniformly from this interval per trial; `None`
    /// keeps the rates of `model`.
    pub k_range: Option<(f64, f64)>,
    pub experiments: usize,
    pub t0: f64,
    pub tn: f64,
    pub tau: f64,
}

impl Preset {
    pub fn get(name: PresetName) -> Preset {
        match name {
            PresetName::M1 => Preset {
                name,
                model: m1(),
                k_range: Some((5e-2, 1.0)),
                experiments: 6,
                t0: 0.0,
                tn: 20.0,
                tau: 1e-2,
            },
            PresetName::M20 => Preset {
                name,
                model: m20(),
                k_range: Some((5e-2, 1.0)),
                experiments: 8,
                t0: 0.0,
                tn: 20.0,
                tau: 1e-2,
            },
            // rate constants are O(1e-3), so the default threshold would
            // wipe out every true coefficient
            PresetName::Vdv => Preset {
                name,
                model: van_de_vusse(),
                k_range: None,
                experiments: 4,
                t0: 0.0,
                tn: 20.0,
                tau: 1e-4,
            },
        }
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn build(species: &[&str], edges: &[(&[u32], &[u32], f64)]) -> CrnModel {
    let basis = MonomialBasis::new(species.len(), 2).expect("preset basis");
    let reactions = edges
        .iter()
        .map(|(s, t, k)| Reaction {
            source: basis.index_of(s).expect("preset complex"),
            target: basis.index_of(t).expect("preset complex"),
            rate: *k,
        })
        .collect();
    CrnModel::assemble(names(species), basis, ReactionList::new(reactions)).expect("preset model")
}

/// Reversible Michaelis–Menten scheme `A + cat <-> catA <-> P + cat`, rates
/// ordered `k1, k-1, k2, k-2` and all set to one.
pub fn m1() -> CrnModel {
    build(
        &["A", "P", "cat", "catA"],
        &[
            (&[1, 0, 1, 0], &[0, 0, 0, 1], 1.0),
            (&[0, 0, 0, 1], &[1, 0, 1, 0], 1.0),
            (&[0, 0, 0, 1], &[0, 1, 1, 0], 1.0),
            (&[0, 1, 1, 0], &[0, 0, 0, 1], 1.0),
        ],
    )
}

/// `m1` with irreversible deactivation `cat -> catI` and `catA -> catAI`
/// appended (rates `kI`, `kAI`).
pub fn m20() -> CrnModel {
    build(
        &["A", "P", "cat", "catA", "catI", "catAI"],
        &[
            (&[1, 0, 1, 0, 0, 0], &[0, 0, 0, 1, 0, 0], 1.0),
            (&[0, 0, 0, 1, 0, 0], &[1, 0, 1, 0, 0, 0], 1.0),
            (&[0, 0, 0, 1, 0, 0], &[0, 1, 1, 0, 0, 0], 1.0),
            (&[0, 1, 1, 0, 0, 0], &[0, 0, 0, 1, 0, 0], 1.0),
            (&[0, 0, 1, 0, 0, 0], &[0, 0, 0, 0, 1, 0], 1.0),
            (&[0, 0, 0, 1, 0, 0], &[0, 0, 0, 0, 0, 1], 1.0),
        ],
    )
}

/// Van de Vusse scheme `2 x1 -> x2`, `x1 -> x3`, `x3 -> x4`.
pub fn van_de_vusse() -> CrnModel {
    build(
        &["x1", "x2", "x3", "x4"],
        &[
            (&[2, 0, 0, 0], &[0, 1, 0, 0], 1e-3),
            (&[1, 0, 0, 0], &[0, 0, 1, 0], 6.85e-3),
            (&[0, 0, 1, 0], &[0, 0, 0, 1], 2.48e-3),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(m1().basis().len(), 14);
        assert_eq!(m20().basis().len(), 27);
        assert_eq!(van_de_vusse().basis().len(), 14);
        assert_eq!(Preset::get(PresetName::M1).experiments, 6);
        assert_eq!(Preset::get(PresetName::M20).experiments, 8);
        assert_eq!(Preset::get(PresetName::Vdv).experiments, 4);
    }

    #[test]
    fn vdv_rhs_by_hand() {
        let m = van_de_vusse();
        let x = [0.5, 0.2, 0.3, 0.1];
        let r = m.rhs(&x).unwrap();
        let (k1, k2, k3) = (1e-3, 6.85e-3, 2.48e-3);
        let expected = [
            -2.0 * k1 * 0.25 - k2 * 0.5,
            k1 * 0.25,
            k2 * 0.5 - k3 * 0.3,
            k3 * 0.3,
        ];
        for (a, b) in r.iter().zip(expected) {
            assert!((a - b).abs() < 1e-18);
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!("M20".parse::<PresetName>().unwrap(), PresetName::M20);
        assert!("m3".parse::<PresetName>().is_err());
        assert_eq!(PresetName::Vdv.to_string(), "vdv");
    }
}

//! Define a network in JSON, simulate it and recover its graph.

use crn_recovery::graph::{export_graph, filter_effective, fit_kirchhoff, Scheme};
use crn_recovery::model::ModelFile;
use crn_recovery::ode::OdeOptions;
use crn_recovery::recovery::{build_dictionary, recover, Formulation, StlsOptions};
use crn_recovery::simulate::simulate_experiments;
use crn_recovery::spline::{build_operators, stack_operators};
use crn_recovery::TimeGrid;

// A + B <-> C <-> 2 A
const MODEL: &str = r#"{
  "species": ["A", "B", "C"],
  "max_degree": 2,
  "reactions": [
    {"source": [1, 1, 0], "target": [0, 0, 1], "k": 0.8},
    {"source": [0, 0, 1], "target": [1, 1, 0], "k": 0.3},
    {"source": [0, 0, 1], "target": [2, 0, 0], "k": 0.5},
    {"source": [2, 0, 0], "target": [0, 0, 1], "k": 0.2}
  ]
}"#;

fn main() -> crn_recovery::Result<()> {
    let model = ModelFile::from_json(MODEL)?.into_model()?;
    let w = 5;
    let grid = TimeGrid::new(0.0, 10.0, 120)?;
    let (model, bundle) = simulate_experiments(&model, None, w, &grid, 5, &OdeOptions::default())?;

    let dict = build_dictionary(model.basis(), &bundle.x, bundle.block_len())?;
    let ops = stack_operators(build_operators(&grid)?, w)?;
    let result = recover(Formulation::Integral, &bundle, &dict, &ops, &StlsOptions::default())?;

    let eff = filter_effective(result.c_sparse(), model.basis(), 1e-2, Scheme::ActiveColumns)?;
    let fit = fit_kirchhoff(&eff, Some(1e-2))?;
    print!("{}", export_graph(&fit, &eff, model.species_names()));
    Ok(())
}

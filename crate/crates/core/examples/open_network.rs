//! Read reaction graphs off an open network (M20) with the three filtration
//! schemes and print them as DOT.

use crn_recovery::driver::Protocol;
use crn_recovery::graph::{export_graph, Scheme};
use crn_recovery::presets::PresetName;
use crn_recovery::recovery::Formulation;
use crn_recovery::spline::{build_operators, stack_operators};

fn main() -> crn_recovery::Result<()> {
    let mut protocol = Protocol::from_preset(PresetName::M20);
    protocol.formulations = vec![Formulation::Integral];
    let setup = protocol.setup(3, 0)?;
    let grid = protocol.grid(200)?;
    let bundle = protocol.data(&setup, &grid, 3, 0)?;
    let ops = stack_operators(build_operators(&grid)?, protocol.experiments)?;
    let result = protocol.recover(&setup, &bundle, &ops)?.remove(0);

    for scheme in [Scheme::ActiveColumns, Scheme::ActivePlusZero, Scheme::SpeciesAsSources] {
        protocol.scheme = scheme;
        let (eff, fit) = protocol.graph(&result)?;
        println!("// {scheme}: residual {:.2e}", fit.residual_fro);
        print!("{}", export_graph(&fit, &eff, setup.model.species_names()));
    }
    Ok(())
}

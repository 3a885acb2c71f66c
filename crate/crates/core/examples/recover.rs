//! Recover the coefficient matrix of M1 with both regression formulations.

use crn_recovery::analysis::compute_errors;
use crn_recovery::driver::Protocol;
use crn_recovery::presets::PresetName;
use crn_recovery::spline::{build_operators, stack_operators};

fn main() -> crn_recovery::Result<()> {
    let mut protocol = Protocol::from_preset(PresetName::M1);
    protocol.noise.sd = 1e-5;

    let setup = protocol.setup(1, 0)?;
    let grid = protocol.grid(200)?;
    let bundle = protocol.data(&setup, &grid, 1, 0)?;
    let ops = stack_operators(build_operators(&grid)?, protocol.experiments)?;

    let basis = setup.model.basis();
    let names = setup.model.species_names();
    for r in &setup.model.reactions().reactions {
        println!("{} -> {}  k = {:.4}", basis.label(r.source, names), basis.label(r.target, names), r.rate);
    }
    for result in protocol.recover(&setup, &bundle, &ops)? {
        println!("{} formulation, rank {}:", result.formulation, result.rank);
        for (method, e) in compute_errors(&result, &setup.model)? {
            println!("  {method:9} ||dC||2 = {:.3e}  support mismatch {}", e.spectral, e.support_mismatch);
        }
        let c = result.c_sparse();
        for (a, name) in names.iter().enumerate() {
            let terms: Vec<String> = (0..c.ncols())
                .filter(|&j| c[(a, j)] != 0.0)
                .map(|j| format!("{:+.3} {}", c[(a, j)], basis.label(j, names)))
                .collect();
            println!("  d{name}/dt = {}", terms.join(" "));
        }
    }
    Ok(())
}

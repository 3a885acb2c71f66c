//! Evaluate the a-priori error bounds on one noisy M1 instance.

use crn_recovery::analysis::verify_bounds_for;
use crn_recovery::driver::{reference_ode, Protocol};
use crn_recovery::presets::PresetName;
use crn_recovery::simulate::NoiseKind;

fn main() -> crn_recovery::Result<()> {
    let mut protocol = Protocol::from_preset(PresetName::M1);
    protocol.noise.sd = 1e-3;
    protocol.noise.kind = NoiseKind::Truncated;
    let setup = protocol.setup(0, 0)?;
    let bundle = protocol.data(&setup, &protocol.grid(101)?, 0, 0)?;

    let report = verify_bounds_for(&setup, &bundle, reference_ode())?;
    println!("epsilon = {:.1e}, ||L||inf = {:.3}, ||J||inf = {:.3}", report.epsilon, report.l_inf, report.j_inf);
    for c in &report.checks {
        println!(
            "{:28} {:>11.4e} <= {:>11.4e}  {}",
            c.name,
            c.lhs,
            c.rhs,
            if c.pass { "ok" } else { "VIOLATED" }
        );
    }
    Ok(())
}

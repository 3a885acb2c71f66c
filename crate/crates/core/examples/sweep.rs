//! Error decay of the four estimators as the grid is refined.

use crn_recovery::analysis::{aggregate_trials, fit_decay, Method};
use crn_recovery::driver::Protocol;
use crn_recovery::presets::PresetName;

fn main() -> crn_recovery::Result<()> {
    let protocol = Protocol::from_preset(PresetName::M1);
    let sizes = [50, 100, 200, 400];
    let batch = protocol.run_trials(&sizes, 10, 0, false)?;
    let summaries = aggregate_trials(&batch.reports)?;

    println!("{:>5} {:>12} {:>12} {:>12} {:>12}", "n", "dif_ls", "dif_stls", "int_ls", "int_stls");
    for &n in &sizes {
        let row: Vec<String> = Method::ALL
            .iter()
            .map(|&m| {
                let s = summaries.iter().find(|s| s.n == n && s.method == m).unwrap();
                format!("{:12.3e}", s.gmean_error)
            })
            .collect();
        println!("{n:5} {}", row.join(" "));
    }
    for m in Method::ALL {
        let points: Vec<(f64, f64)> =
            summaries.iter().filter(|s| s.method == m).map(|s| (s.n as f64, s.gmean_error)).collect();
        println!("{m}: slope {:.2}", fit_decay(&points, None)?.slope);
    }
    Ok(())
}

//! Sample an M1 setup, integrate six experiments and add measurement noise.
//!
//! cargo run --example simulate -- [output.csv]

use std::fs::File;
use std::io::BufWriter;

use crn_recovery::ode::OdeOptions;
use crn_recovery::presets::{Preset, PresetName};
use crn_recovery::simulate::{add_noise, simulate_experiments, NoiseKind, NoiseOptions};
use crn_recovery::TimeGrid;

fn main() -> crn_recovery::Result<()> {
    let preset = Preset::get(PresetName::M1);
    let grid = TimeGrid::new(preset.t0, preset.tn, 101)?;
    let (model, clean) = simulate_experiments(&preset.model, preset.k_range, preset.experiments, &grid, 42, &OdeOptions::default())?;

    for r in &model.reactions().reactions {
        let names = model.species_names();
        println!(
            "{} -> {}  k = {:.4}",
            model.basis().label(r.source, names),
            model.basis().label(r.target, names),
            r.rate
        );
    }

    let noisy = add_noise(&clean, &NoiseOptions { sd: 1e-2, kind: NoiseKind::Gaussian, clip_negative: false }, 7)?;
    let path = std::env::args().nth(1).unwrap_or_else(|| "trajectory.csv".into());
    noisy.write_csv(BufWriter::new(File::create(&path)?), model.species_names())?;
    println!("wrote {} experiments x {} points to {path}", noisy.experiments, grid.points);
    Ok(())
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crn_recovery::driver::{
    cmd_dump_operators, cmd_mismatch, cmd_recover, cmd_simulate, cmd_sweep, Command, ConfigOverrides, FormulationChoice,
    RunConfig, SweepSpec,
};
use crn_recovery::graph::Scheme;
use crn_recovery::simulate::NoiseKind;
use crn_recovery::CrnError;

#[derive(Parser)]
#[command(name = "crn-recovery", version, about = "Recover mass-action reaction networks from time series")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate noisy trajectories of a model
    Simulate(Common),
    /// Recover coefficients and a reaction graph from one simulated instance
    Recover(Common),
    /// Error decay over a range of grid sizes
    Sweep(Common),
    /// Support and graph mismatch histograms
    Mismatch(Common),
    /// Write the spline differentiation and integration matrices
    DumpOperators(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config file; command-line flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset (m1, m20, vdv) or path to a model JSON file
    #[arg(long)]
    model: Option<String>,
    /// Number of experiments
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    tn: Option<f64>,
    /// Number of time points
    #[arg(long = "n")]
    n_points: Option<usize>,
    /// Grid sizes as start:stop:step
    #[arg(long, value_parser = parse_sweep)]
    sweep: Option<SweepSpec>,
    /// Comma separated grid sizes
    #[arg(long, value_delimiter = ',')]
    resolutions: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long, value_parser = parse_with::<NoiseKind>)]
    noise_kind: Option<NoiseKind>,
    /// Clip noisy observations at zero
    #[arg(long)]
    clip_negative: bool,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    svd_cutoff: Option<f64>,
    #[arg(long)]
    edge_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, value_parser = parse_with::<Scheme>)]
    scheme: Option<Scheme>,
    /// differential, integral or both
    #[arg(long, value_parser = parse_with::<FormulationChoice>)]
    formulation: Option<FormulationChoice>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short = 'o')]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Relative tolerance of the ODE integrator
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Also check the error bounds on each grid (sweep only)
    #[arg(long)]
    with_bounds: bool,
}

fn parse_sweep(s: &str) -> Result<SweepSpec, String> {
    SweepSpec::parse(s).map_err(|e| e.to_string())
}

fn parse_with<T: std::str::FromStr<Err = CrnError>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: CrnError| e.to_string())
}

impl Common {
    fn split(self) -> (Option<PathBuf>, ConfigOverrides) {
        let o = ConfigOverrides {
            model: self.model,
            w: self.w,
            t0: self.t0,
            tn: self.tn,
            n_points: self.n_points,
            sweep: self.sweep,
            resolutions: self.resolutions,
            trials: self.trials,
            noise_sd: self.noise_sd,
            noise_kind: self.noise_kind,
            clip_negative: self.clip_negative.then_some(true),
            tau: self.tau,
            svd_cutoff: self.svd_cutoff,
            edge_tol: self.edge_tol,
            max_iter: self.max_iter,
            scheme: self.scheme,
            formulation: self.formulation,
            seed: self.seed,
            output_dir: self.output_dir,
            threads: self.threads,
            rel_tol: self.rel_tol,
            with_bounds: self.with_bounds.then_some(true),
        };
        (self.config, o)
    }
}

fn run(cli: Cli) -> crn_recovery::Result<()> {
    let (command, common) = match cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c),
        Cmd::Recover(c) => (Command::Recover, c),
        Cmd::Sweep(c) => (Command::Sweep, c),
        Cmd::Mismatch(c) => (Command::Mismatch, c),
        Cmd::DumpOperators(c) => (Command::DumpOperators, c),
    };
    let (file, overrides) = common.split();
    let file = file.map(|p| ConfigOverrides::from_file(&p)).transpose()?;
    let cfg = RunConfig::resolve(command, overrides, file)?;
    log::info!("writing to {}", cfg.output_dir.display());
    match command {
        Command::Simulate => {
            let out = cmd_simulate(&cfg)?;
            println!("{}", out.trajectory.display());
        }
        Command::Recover => {
            for s in cmd_recover(&cfg)? {
                println!("{}: {} edges", s.formulation, s.edges);
            }
        }
        Command::Sweep => {
            let out = cmd_sweep(&cfg)?;
            for (method, fit) in &out.decay {
                if let Some(fit) = fit {
                    println!("{method}: slope {:.3}", fit.slope);
                }
            }
            if out.failures > 0 {
                eprintln!("{} trials failed", out.failures);
            }
        }
        Command::Mismatch => {
            let out = cmd_mismatch(&cfg)?;
            for s in &out.summaries {
                println!("n={} {}: {:.3} exact support", s.n, s.method, s.zero_mismatch_fraction());
            }
            if out.failures > 0 {
                eprintln!("{} trials failed", out.failures);
            }
        }
        Command::DumpOperators => {
            let norms = cmd_dump_operators(&cfg)?;
            println!("||L||inf = {:.6e}, ||J||inf = {:.6e}", norms.summary.l_inf, norms.summary.j_inf);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

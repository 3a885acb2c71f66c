//! End-to-end runs: configuration, trial protocol and the file outputs of
//! the `simulate`, `recover`, `sweep`, `mismatch` and `dump-operators`
//! commands.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    aggregate_trials, compute_errors, fit_decay, kirchhoff_mismatch, reference_slope, verify_bounds, window_slopes,
    BoundInputs, BoundReport, ErrorReport, KirchhoffMismatch, Method, MethodSummary, HISTOGRAM_CAP,
};
use crate::error::{CrnError, Result};
use crate::graph::{export_graph, filter_effective, fit_kirchhoff, EffectiveModel, KirchhoffFit, Scheme};
use crate::model::CrnModel;
use crate::ode::OdeOptions;
use crate::presets::{Preset, PresetName};
use crate::recovery::{build_dictionary, recover, Formulation, RecoveryResult, StlsOptions};
use crate::simulate::{add_noise, rng_for, sample_setup, simulate_setup, NoiseKind, NoiseOptions, SampledSetup, TrajectoryBundle};
use crate::spline::{build_operators, stack_operators, StackedOperators, TimeGrid};

/// Independent seed for item `index` derived from `seed`.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    rng_for(seed, index.wrapping_add(2)).random()
}

/// Everything needed to generate and analyse one trial.
#[derive(Debug, Clone)]
pub struct Protocol {
    pub template: CrnModel,
    pub k_range: Option<(f64, f64)>,
    pub experiments: usize,
    pub t0: f64,
    pub tn: f64,
    pub noise: NoiseOptions,
    pub stls: StlsOptions,
    pub ode: OdeOptions,
    pub scheme: Scheme,
    pub edge_tol: Option<f64>,
    pub formulations: Vec<Formulation>,
}

impl Protocol {
    pub fn from_preset(name: PresetName) -> Protocol {
        let p = Preset::get(name);
        Protocol {
            template: p.model,
            k_range: p.k_range,
            experiments: p.experiments,
            t0: p.t0,
            tn: p.tn,
            noise: NoiseOptions { sd: 0.0, kind: NoiseKind::Gaussian, clip_negative: false },
            stls: StlsOptions { tau: p.tau, ..Default::default() },
            ode: reference_ode(),
            scheme: Scheme::ActiveColumns,
            edge_tol: None,
            formulations: Formulation::BOTH.to_vec(),
        }
    }

    pub fn grid(&self, points: usize) -> Result<TimeGrid> {
        TimeGrid::new(self.t0, self.tn, points)
    }

    /// Rates and initial conditions of trial `trial`; fixed across grid sizes.
    pub fn setup(&self, seed: u64, trial: usize) -> Result<SampledSetup> {
        sample_setup(&self.template, self.k_range, self.experiments, sub_seed(seed, trial as u64))
    }

    /// Data on `grid`, noise drawn from a stream specific to trial and grid.
    pub fn data(&self, setup: &SampledSetup, grid: &TimeGrid, seed: u64, trial: usize) -> Result<TrajectoryBundle> {
        let trial_seed = sub_seed(seed, trial as u64);
        let clean = simulate_setup(setup, grid, trial_seed, &self.ode)?;
        add_noise(&clean, &self.noise, sub_seed(trial_seed, grid.points as u64))
    }

    /// LS and STLS recovery for every configured formulation.
    pub fn recover(&self, setup: &SampledSetup, bundle: &TrajectoryBundle, ops: &StackedOperators) -> Result<Vec<RecoveryResult>> {
        let dict = build_dictionary(setup.model.basis(), &bundle.x, bundle.block_len())?;
        self.formulations
            .iter()
            .map(|&f| recover(f, bundle, &dict, ops, &self.stls))
            .collect()
    }

    pub fn graph(&self, result: &RecoveryResult) -> Result<(EffectiveModel, KirchhoffFit)> {
        graph_from(result, &self.template, self.stls.tau, self.scheme, Some(self.edge_tol()))
    }

    /// Rates below the coefficient threshold cannot be told apart from
    /// regression error, so edges are pruned at `tau` unless set explicitly.
    pub fn edge_tol(&self) -> f64 {
        self.edge_tol.unwrap_or(self.stls.tau)
    }

    /// Errors of all methods and, when `graphs` is set, the Kirchhoff
    /// mismatch of the graphs read off the STLS solutions.
    pub fn evaluate(
        &self,
        setup: &SampledSetup,
        bundle: &TrajectoryBundle,
        ops: &StackedOperators,
        trial: usize,
        seed: u64,
        graphs: bool,
    ) -> Result<ErrorReport> {
        let mut report = ErrorReport::new(trial, seed, bundle.grid.points, bundle.noise_sd);
        for result in self.recover(setup, bundle, ops)? {
            for (method, errors) in compute_errors(&result, &setup.model)? {
                report.methods.insert(method, errors);
            }
            if graphs {
                let mismatch = match self.graph(&result) {
                    Ok((eff, fit)) => kirchhoff_mismatch(&fit, &eff, &setup.model),
                    Err(CrnError::EmptyModel { .. }) => KirchhoffMismatch::SizeMismatch,
                    Err(e) => return Err(e),
                };
                report.kirchhoff.insert(Method::new(result.formulation, true), mismatch);
            }
        }
        Ok(report)
    }

    /// Runs `trials` trials on every grid size. Grid sizes are processed in
    /// order; trials within a size run in parallel and are returned in
    /// trial order. Failed trials are logged and skipped.
    pub fn run_trials(&self, sizes: &[usize], trials: usize, seed: u64, graphs: bool) -> Result<TrialBatch> {
        let setups: Vec<Result<SampledSetup>> = (0..trials).into_par_iter().map(|t| self.setup(seed, t)).collect();
        let mut reports = Vec::new();
        let mut failures = 0;
        for &points in sizes {
            let grid = self.grid(points)?;
            let ops = stack_operators(build_operators(&grid)?, self.experiments)?;
            let batch: Vec<Result<ErrorReport>> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let setup = setups[t].as_ref().map_err(|e| CrnError::invalid("cli_driver", e.to_string()))?;
                    let bundle = self.data(setup, &grid, seed, t)?;
                    self.evaluate(setup, &bundle, &ops, t, sub_seed(seed, t as u64), graphs)
                })
                .collect();
            for (t, r) in batch.into_iter().enumerate() {
                match r {
                    Ok(r) => reports.push(r),
                    Err(e) => {
                        failures += 1;
                        log::warn!("trial {t} at {points} points failed: {e}");
                    }
                }
            }
        }
        Ok(TrialBatch { reports, failures })
    }
}

#[derive(Debug, Clone)]
pub struct TrialBatch {
    pub reports: Vec<ErrorReport>,
    pub failures: usize,
}

/// Integrator settings used for ground-truth data.
pub fn reference_ode() -> OdeOptions {
    OdeOptions { rel_tol: 1e-12, abs_tol: 1e-14, ..Default::default() }
}

pub fn graph_from(
    result: &RecoveryResult,
    truth_like: &CrnModel,
    tau: f64,
    scheme: Scheme,
    edge_tol: Option<f64>,
) -> Result<(EffectiveModel, KirchhoffFit)> {
    let eff = filter_effective(result.c_sparse(), truth_like.basis(), tau, scheme)?;
    let fit = fit_kirchhoff(&eff, edge_tol)?;
    Ok((eff, fit))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub start: usize,
    pub stop: usize,
    pub step: usize,
}

impl SweepSpec {
    pub fn sizes(&self) -> Vec<usize> {
        (self.start..=self.stop).step_by(self.step.max(1)).collect()
    }

    pub fn parse(text: &str) -> Result<SweepSpec> {
        let parts: Vec<&str> = text.split(':').collect();
        let num = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CrnError::invalid("cli_driver", format!("bad sweep spec '{text}', expected start:stop:step")))
        };
        match parts.as_slice() {
            [a, b, c] => Ok(SweepSpec { start: num(a)?, stop: num(b)?, step: num(c)? }),
            _ => Err(CrnError::invalid("cli_driver", format!("bad sweep spec '{text}', expected start:stop:step"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FormulationChoice {
    Differential,
    Integral,
    #[default]
    Both,
}

impl FormulationChoice {
    pub fn list(&self) -> Vec<Formulation> {
        match self {
            FormulationChoice::Differential => vec![Formulation::Differential],
            FormulationChoice::Integral => vec![Formulation::Integral],
            FormulationChoice::Both => Formulation::BOTH.to_vec(),
        }
    }
}

impl std::str::FromStr for FormulationChoice {
    type Err = CrnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(FormulationChoice::Both),
            other => Ok(match other.parse::<Formulation>()? {
                Formulation::Differential => FormulationChoice::Differential,
                Formulation::Integral => FormulationChoice::Integral,
            }),
        }
    }
}

/// Partially specified configuration, as given on the command line or in a
/// JSON config file. Field names are those of [`RunConfig`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub model: Option<String>,
    pub w: Option<usize>,
    pub t0: Option<f64>,
    pub tn: Option<f64>,
    pub n_points: Option<usize>,
    pub sweep: Option<SweepSpec>,
    pub resolutions: Option<Vec<usize>>,
    pub trials: Option<usize>,
    pub noise_sd: Option<f64>,
    pub noise_kind: Option<NoiseKind>,
    pub clip_negative: Option<bool>,
    pub tau: Option<f64>,
    pub svd_cutoff: Option<f64>,
    pub edge_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub scheme: Option<Scheme>,
    pub formulation: Option<FormulationChoice>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub rel_tol: Option<f64>,
    pub with_bounds: Option<bool>,
}

macro_rules! overlay {
    ($hi:expr, $lo:expr, $($f:ident),*) => {
        ConfigOverrides { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl ConfigOverrides {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// `self` wins wherever it sets a field.
    pub fn over(self, lower: ConfigOverrides) -> ConfigOverrides {
        overlay!(
            self, lower, model, w, t0, tn, n_points, sweep, resolutions, trials, noise_sd, noise_kind, clip_negative,
            tau, svd_cutoff, edge_tol, max_iter, scheme, formulation, seed, output_dir, threads, rel_tol, with_bounds
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Recover,
    Sweep,
    Mismatch,
    DumpOperators,
}

/// Fully resolved configuration; written next to every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub model: String,
    pub w: usize,
    pub t0: f64,
    pub tn: f64,
    pub n_points: usize,
    pub sweep: SweepSpec,
    pub resolutions: Vec<usize>,
    pub trials: usize,
    pub noise_sd: f64,
    pub noise_kind: NoiseKind,
    pub clip_negative: bool,
    pub tau: f64,
    pub svd_cutoff: f64,
    pub edge_tol: f64,
    pub max_iter: usize,
    pub scheme: Scheme,
    pub formulation: FormulationChoice,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
    pub rel_tol: f64,
    pub with_bounds: bool,
    #[serde(skip)]
    pub template: Option<CrnModel>,
    #[serde(skip)]
    pub k_range: Option<(f64, f64)>,
}

impl RunConfig {
    /// CLI values override the config file, which overrides preset defaults.
    pub fn resolve(command: Command, cli: ConfigOverrides, file: Option<ConfigOverrides>) -> Result<RunConfig> {
        let merged = cli.over(file.unwrap_or_default());
        let model = merged.model.clone().unwrap_or_else(|| "m1".to_string());
        let (template, k_range, w, t0, tn, tau) = match model.parse::<PresetName>() {
            Ok(name) => {
                let p = Preset::get(name);
                (p.model, p.k_range, p.experiments, p.t0, p.tn, p.tau)
            }
            Err(_) => {
                let path = Path::new(&model);
                if !path.exists() {
                    return Err(CrnError::invalid("cli_driver", format!("'{model}' is neither a preset nor a model file")));
                }
                (CrnModel::from_file(path)?, None, 6, 0.0, 20.0, 1e-2)
            }
        };
        let default_trials = match command {
            Command::Sweep => 100,
            Command::Mismatch => 1000,
            _ => 1,
        };
        let cfg = RunConfig {
            model,
            w: merged.w.unwrap_or(w),
            t0: merged.t0.unwrap_or(t0),
            tn: merged.tn.unwrap_or(tn),
            n_points: merged.n_points.unwrap_or(100),
            sweep: merged.sweep.unwrap_or(SweepSpec { start: 50, stop: 1000, step: 50 }),
            resolutions: merged.resolutions.unwrap_or_else(|| vec![25, 50, 75, 100]),
            trials: merged.trials.unwrap_or(default_trials),
            noise_sd: merged.noise_sd.unwrap_or(0.0),
            noise_kind: merged.noise_kind.unwrap_or_default(),
            clip_negative: merged.clip_negative.unwrap_or(false),
            tau: merged.tau.unwrap_or(tau),
            svd_cutoff: merged.svd_cutoff.unwrap_or(1e-10),
            edge_tol: merged.edge_tol.unwrap_or(merged.tau.unwrap_or(tau)),
            max_iter: merged.max_iter.unwrap_or(20),
            scheme: merged.scheme.unwrap_or_default(),
            formulation: merged.formulation.unwrap_or_default(),
            seed: merged.seed.unwrap_or(0),
            output_dir: merged.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            threads: merged.threads,
            rel_tol: merged.rel_tol.unwrap_or(1e-12),
            with_bounds: merged.with_bounds.unwrap_or(false),
            template: Some(template),
            k_range,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CrnError::invalid("cli_driver", m));
        if self.w == 0 {
            return bad("w must be at least 1".into());
        }
        if !(self.tn > self.t0) {
            return bad(format!("empty time interval [{}, {}]", self.t0, self.tn));
        }
        if self.n_points < 4 {
            return bad("at least 4 time points are required".into());
        }
        let s = self.sweep;
        if s.start < 4 || s.stop < s.start || s.step == 0 {
            return bad(format!("sweep {}:{}:{} must be increasing and start at 4 or more", s.start, s.stop, s.step));
        }
        if self.resolutions.is_empty() || self.resolutions.iter().any(|&r| r < 4) {
            return bad("resolutions must be nonempty and at least 4".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.noise_sd >= 0.0) {
            return bad("noise sd must be nonnegative".into());
        }
        if !(self.tau > 0.0) {
            return bad("tau must be positive".into());
        }
        if !(self.edge_tol >= 0.0) {
            return bad("edge_tol must be nonnegative".into());
        }
        if !(self.svd_cutoff > 0.0 && self.svd_cutoff < 1.0) {
            return bad("svd cutoff must lie in (0, 1)".into());
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-3) {
            return bad("rel_tol must lie in (0, 1e-3]".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }

    pub fn protocol(&self) -> Protocol {
        Protocol {
            template: self.template.clone().expect("resolved config carries its model"),
            k_range: self.k_range,
            experiments: self.w,
            t0: self.t0,
            tn: self.tn,
            noise: NoiseOptions { sd: self.noise_sd, kind: self.noise_kind, clip_negative: self.clip_negative },
            stls: StlsOptions { tau: self.tau, max_iter: self.max_iter, svd_cutoff: self.svd_cutoff },
            ode: OdeOptions { rel_tol: self.rel_tol, abs_tol: self.rel_tol * 1e-2, ..Default::default() },
            scheme: self.scheme,
            edge_tol: Some(self.edge_tol),
            formulations: self.formulation.list(),
        }
    }

    fn prepare_output(&self) -> Result<()> {
        fs::create_dir_all(&self.output_dir)?;
        write_json(&self.output_dir.join("config.json"), self)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    fn with_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        match self.threads {
            Some(t) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .map_err(|e| CrnError::invalid("cli_driver", e.to_string()))?;
                Ok(pool.install(f))
            }
            None => Ok(f()),
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Row-major CSV with 17 significant digits.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Six significant digits for summary tables.
fn fmt6(v: f64) -> String {
    format!("{v:.5e}")
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateOutput {
    pub trajectory: PathBuf,
    pub metadata: PathBuf,
    pub model: PathBuf,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimulateOutput> {
    cfg.prepare_output()?;
    let protocol = cfg.protocol();
    let setup = protocol.setup(cfg.seed, 0)?;
    let grid = protocol.grid(cfg.n_points)?;
    let bundle = protocol.data(&setup, &grid, cfg.seed, 0)?;
    let out = SimulateOutput {
        trajectory: cfg.path("trajectory.csv"),
        metadata: cfg.path("metadata.json"),
        model: cfg.path("model.json"),
    };
    let mut w = BufWriter::new(File::create(&out.trajectory)?);
    bundle.write_csv(&mut w, setup.model.species_names())?;
    w.flush()?;
    write_json(&out.metadata, &bundle.metadata())?;
    write_json(&out.model, &setup.model.to_model_file())?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoverSummary {
    pub formulation: Formulation,
    pub errors: BTreeMap<Method, crate::analysis::MethodErrors>,
    pub edges: usize,
    pub kirchhoff_mismatch: Option<KirchhoffMismatch>,
    pub graph: Option<PathBuf>,
}

/// Single-instance pipeline: data, both regressions, graph fit.
pub fn cmd_recover(cfg: &RunConfig) -> Result<Vec<RecoverSummary>> {
    cfg.prepare_output()?;
    let protocol = cfg.protocol();
    let setup = protocol.setup(cfg.seed, 0)?;
    let grid = protocol.grid(cfg.n_points)?;
    let bundle = protocol.data(&setup, &grid, cfg.seed, 0)?;
    let ops = stack_operators(build_operators(&grid)?, cfg.w)?;
    write_json(&cfg.path("model.json"), &setup.model.to_model_file())?;

    let mut summaries = Vec::new();
    let mut empty = None;
    for result in protocol.recover(&setup, &bundle, &ops)? {
        let name = result.formulation.to_string();
        write_json(&cfg.path(&format!("recovery_{name}.json")), &result.report())?;
        let errors = compute_errors(&result, &setup.model)?.into_iter().collect();
        let mut summary = RecoverSummary {
            formulation: result.formulation,
            errors,
            edges: 0,
            kirchhoff_mismatch: None,
            graph: None,
        };
        match protocol.graph(&result) {
            Ok((eff, fit)) => {
                let names = setup.model.species_names();
                write_json(&cfg.path(&format!("fit_{name}.json")), &fit.report(&eff, names))?;
                let dot = cfg.path(&format!("graph_{name}.dot"));
                fs::write(&dot, export_graph(&fit, &eff, names))?;
                summary.edges = fit.edges.len();
                summary.kirchhoff_mismatch = Some(kirchhoff_mismatch(&fit, &eff, &setup.model));
                summary.graph = Some(dot);
            }
            Err(e @ CrnError::EmptyModel { .. }) => {
                log::error!("{name}: {e}");
                empty = Some(e);
            }
            Err(e) => return Err(e),
        }
        summaries.push(summary);
    }
    write_json(&cfg.path("summary.json"), &summaries)?;
    match empty {
        Some(e) => Err(e),
        None => Ok(summaries),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepOutput {
    pub summaries: Vec<MethodSummary>,
    pub decay: BTreeMap<Method, Option<crate::analysis::DecayFit>>,
    pub failures: usize,
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<SweepOutput> {
    if cfg.with_bounds && cfg.noise_sd > 0.0 && cfg.noise_kind == NoiseKind::Gaussian {
        return Err(CrnError::invalid("cli_driver", "--with-bounds needs --noise-kind truncated"));
    }
    cfg.prepare_output()?;
    let protocol = cfg.protocol();
    let sizes = cfg.sweep.sizes();
    let batch = cfg.with_pool(|| protocol.run_trials(&sizes, cfg.trials, cfg.seed, false))??;
    if batch.reports.is_empty() {
        return Err(CrnError::numerical("cli_driver", "every trial failed"));
    }
    write_trials_csv(&cfg.path("trials.csv"), &batch.reports)?;
    let summaries = aggregate_trials(&batch.reports)?;

    let mut decay = BTreeMap::new();
    let mut out = BufWriter::new(File::create(cfg.path("sweep.csv"))?);
    writeln!(out, "n,method,gmean_error,slope_window")?;
    for method in Method::ALL {
        let points: Vec<(f64, f64)> = summaries
            .iter()
            .filter(|s| s.method == method)
            .map(|s| (s.n as f64, s.gmean_error))
            .collect();
        if points.is_empty() {
            continue;
        }
        let slopes = window_slopes(&points);
        for ((n, e), s) in points.iter().zip(&slopes) {
            let slope = s.map(fmt6).unwrap_or_default();
            writeln!(out, "{},{},{},{}", *n as usize, method, fmt6(*e), slope)?;
        }
        let fit = fit_decay(&points, Some(reference_slope(method, cfg.noise_sd > 0.0))).ok();
        decay.insert(method, fit);
    }
    out.flush()?;
    write_json(&cfg.path("decay.json"), &decay)?;

    if cfg.with_bounds {
        let mut rows = Vec::new();
        for &points in &sizes {
            let grid = protocol.grid(points)?;
            let setup = protocol.setup(cfg.seed, 0)?;
            let bundle = protocol.data(&setup, &grid, cfg.seed, 0)?;
            let ops = build_operators(&grid)?;
            let report = verify_bounds(&BoundInputs {
                setup: &setup,
                bundle: &bundle,
                ops: &ops,
                refine: 10,
                ode: protocol.ode,
                svd_cutoff: cfg.svd_cutoff,
            })?;
            rows.push((points, report));
        }
        write_bounds_csv(&cfg.path("bounds.csv"), &rows)?;
        let by_n: BTreeMap<usize, &BoundReport> = rows.iter().map(|(n, r)| (*n, r)).collect();
        write_json(&cfg.path("bounds.json"), &by_n)?;
    }
    Ok(SweepOutput { summaries, decay, failures: batch.failures })
}

pub fn write_trials_csv(path: &Path, reports: &[ErrorReport]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "n,trial,seed,method,spectral_error,frobenius_error,support_mismatch,kirchhoff_mismatch")?;
    for r in reports {
        for (method, e) in &r.methods {
            let k = match r.kirchhoff.get(method) {
                Some(KirchhoffMismatch::Count(c)) => c.to_string(),
                Some(KirchhoffMismatch::SizeMismatch) => "size-mismatch".to_string(),
                None => String::new(),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.n,
                r.trial,
                r.seed,
                method,
                fmt6(e.spectral),
                fmt6(e.frobenius),
                e.support_mismatch,
                k
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_bounds_csv(path: &Path, rows: &[(usize, BoundReport)]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "n,inequality,lhs,rhs,margin,pass")?;
    for (n, report) in rows {
        for c in &report.checks {
            writeln!(out, "{},{},{},{},{},{}", n, c.name, fmt6(c.lhs), fmt6(c.rhs), fmt6(c.margin), c.pass)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct MismatchOutput {
    pub summaries: Vec<MethodSummary>,
    pub failures: usize,
}

pub fn cmd_mismatch(cfg: &RunConfig) -> Result<MismatchOutput> {
    cfg.prepare_output()?;
    let protocol = cfg.protocol();
    let batch = cfg.with_pool(|| protocol.run_trials(&cfg.resolutions, cfg.trials, cfg.seed, true))??;
    if batch.reports.is_empty() {
        return Err(CrnError::numerical("cli_driver", "every trial failed"));
    }
    write_trials_csv(&cfg.path("trials.csv"), &batch.reports)?;
    let summaries = aggregate_trials(&batch.reports)?;
    let mut hist = BufWriter::new(File::create(cfg.path("histogram.csv"))?);
    let mut kirch = BufWriter::new(File::create(cfg.path("kirchhoff.csv"))?);
    writeln!(hist, "n,method,mismatch_bin,count")?;
    writeln!(kirch, "n,method,mismatch_bin,count")?;
    for s in &summaries {
        for bin in 0..=HISTOGRAM_CAP {
            writeln!(hist, "{},{},{},{}", s.n, s.method, bin, s.mismatch_histogram[bin])?;
        }
        if s.method.is_sparse() {
            for bin in 0..=HISTOGRAM_CAP {
                writeln!(kirch, "{},{},{},{}", s.n, s.method, bin, s.kirchhoff_histogram[bin])?;
            }
            writeln!(kirch, "{},{},size-mismatch,{}", s.n, s.method, s.kirchhoff_size_mismatch)?;
        }
    }
    hist.flush()?;
    kirch.flush()?;
    Ok(MismatchOutput { summaries, failures: batch.failures })
}

pub fn cmd_dump_operators(cfg: &RunConfig) -> Result<crate::spline::OperatorNormsDetail> {
    cfg.prepare_output()?;
    let grid = TimeGrid::new(cfg.t0, cfg.tn, cfg.n_points)?;
    let ops = build_operators(&grid)?;
    write_matrix_csv(&cfg.path("L.csv"), &ops.l)?;
    write_matrix_csv(&cfg.path("J.csv"), &ops.j)?;
    let norms = ops.norms();
    write_json(&cfg.path("norms.json"), &norms)?;
    Ok(norms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_cli_over_file_over_preset() {
        let file = ConfigOverrides { w: Some(3), tau: Some(0.5), ..Default::default() };
        let cli = ConfigOverrides { w: Some(2), ..Default::default() };
        let cfg = RunConfig::resolve(Command::Recover, cli, Some(file)).unwrap();
        assert_eq!(cfg.w, 2);
        assert_eq!(cfg.tau, 0.5);
        assert_eq!(cfg.tn, 20.0);
        let vdv = RunConfig::resolve(
            Command::Sweep,
            ConfigOverrides { model: Some("vdv".into()), ..Default::default() },
            None,
        )
        .unwrap();
        assert_eq!(vdv.w, 4);
        assert_eq!(vdv.trials, 100);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = |o: ConfigOverrides| RunConfig::resolve(Command::Recover, o, None).unwrap_err().exit_code();
        assert_eq!(bad(ConfigOverrides { model: Some("nope".into()), ..Default::default() }), 2);
        assert_eq!(bad(ConfigOverrides { trials: Some(0), ..Default::default() }), 2);
        assert_eq!(bad(ConfigOverrides { n_points: Some(3), ..Default::default() }), 2);
        assert_eq!(
            bad(ConfigOverrides { sweep: Some(SweepSpec { start: 100, stop: 50, step: 10 }), ..Default::default() }),
            2
        );
    }

    #[test]
    fn unknown_config_keys_are_errors() {
        assert!(serde_json::from_str::<ConfigOverrides>(r#"{"wrong": 1}"#).is_err());
        let ok: ConfigOverrides = serde_json::from_str(r#"{"scheme": "active_plus_zero", "noise_kind": "truncated"}"#).unwrap();
        assert_eq!(ok.scheme, Some(Scheme::ActivePlusZero));
    }

    #[test]
    fn sweep_spec_parsing() {
        assert_eq!(SweepSpec::parse("50:200:50").unwrap().sizes(), vec![50, 100, 150, 200]);
        assert!(SweepSpec::parse("50:200").is_err());
    }

    #[test]
    fn sub_seeds_differ() {
        assert_ne!(sub_seed(1, 0), sub_seed(1, 1));
        assert_eq!(sub_seed(7, 3), sub_seed(7, 3));
    }
}

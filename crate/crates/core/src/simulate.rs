//! Synthetic multi-experiment data: integration of the mass-action system on
//! a uniform grid, random rates and initial conditions, additive noise.

use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CrnError, Result};
use crate::model::CrnModel;
use crate::ode::{integrate, OdeOptions, OdeSolution};
use crate::spline::TimeGrid;

/// Seeded generator for one logical stream; `stream` separates
/// independent draws (trial, grid size, purpose) sharing a base seed.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub grid: TimeGrid,
    pub initial_state: Vec<f64>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.points < 4 {
            return Err(CrnError::invalid("trajectory_sim", "at least 4 time points are required"));
        }
        if self.initial_state.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(CrnError::invalid("trajectory_sim", "initial state must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Integrates `model` on the configured grid; one column per time point.
pub fn integrate_ode(model: &CrnModel, config: &ExperimentConfig, opts: &OdeOptions) -> Result<OdeSolution> {
    config.validate()?;
    if config.initial_state.len() != model.species_count() {
        return Err(CrnError::invalid(
            "trajectory_sim",
            format!("initial state has {} entries for {} species", config.initial_state.len(), model.species_count()),
        ));
    }
    let scratch = std::cell::RefCell::new(vec![0.0; model.basis().len()]);
    let sol = integrate(
        |_, x, dx| model.rhs_into(x, &mut scratch.borrow_mut(), dx),
        &config.initial_state,
        &config.grid.times(),
        opts,
    )?;
    if sol.negative_excursion {
        log::warn!("trajectory_sim: state dipped to {:e} during integration", sol.min_value);
    }
    Ok(sol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// Gaussian rejected outside three standard deviations, so that every
    /// perturbation is bounded by `3 sd`.
    Truncated,
}

impl std::str::FromStr for NoiseKind {
    type Err = CrnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "truncated" => Ok(NoiseKind::Truncated),
            other => Err(CrnError::invalid("trajectory_sim", format!("unknown noise kind '{other}'"))),
        }
    }
}

pub const TRUNCATION_SDS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBundle {
    pub experiments: usize,
    pub grid: TimeGrid,
    /// `M x w(n+1)`, experiment blocks side by side.
    pub x: DMatrix<f64>,
    /// Noise-free data, kept once noise has been added.
    pub clean: Option<DMatrix<f64>>,
    pub noise_sd: f64,
    pub noise_kind: NoiseKind,
    pub seed: u64,
}

impl TrajectoryBundle {
    pub fn block_len(&self) -> usize {
        self.grid.points
    }

    pub fn species_count(&self) -> usize {
        self.x.nrows()
    }

    pub fn block(&self, e: usize) -> DMatrix<f64> {
        self.x.columns(e * self.block_len(), self.block_len()).into_owned()
    }

    /// Every column of block `e` equals the first column of block `e`.
    pub fn x_ivp(&self) -> DMatrix<f64> {
        let b = self.block_len();
        DMatrix::from_fn(self.x.nrows(), self.x.ncols(), |r, c| self.x[(r, (c / b) * b)])
    }

    /// `X - X_IVP`.
    pub fn x0(&self) -> DMatrix<f64> {
        &self.x - self.x_ivp()
    }

    /// Largest absolute perturbation that the noise model allows; infinite
    /// for untruncated Gaussian noise.
    pub fn noise_bound(&self) -> f64 {
        if self.noise_sd == 0.0 {
            0.0
        } else {
            match self.noise_kind {
                NoiseKind::Gaussian => f64::INFINITY,
                NoiseKind::Truncated => TRUNCATION_SDS * self.noise_sd,
            }
        }
    }

    pub fn metadata(&self) -> BundleMetadata {
        BundleMetadata {
            w: self.experiments,
            n: self.grid.points,
            t0: self.grid.t0,
            tn: self.grid.tn,
            sd: self.noise_sd,
            noise_kind: self.noise_kind,
            seed: self.seed,
        }
    }

    /// One row per (experiment, time point, noisy flag); rows with
    /// `noisy = 0` carry the clean values.
    pub fn write_csv<W: Write>(&self, mut out: W, species_names: &[String]) -> Result<()> {
        write!(out, "t,exp")?;
        for name in species_names {
            write!(out, ",{name}")?;
        }
        writeln!(out, ",noisy")?;
        let clean = self.clean.as_ref().unwrap_or(&self.x);
        let b = self.block_len();
        for (flag, data) in [(0, clean), (1, &self.x)] {
            for e in 0..self.experiments {
                for k in 0..b {
                    write!(out, "{:.16e},{e}", self.grid.time(k))?;
                    for a in 0..data.nrows() {
                        write!(out, ",{:.16e}", data[(a, e * b + k)])?;
                    }
                    writeln!(out, ",{flag}")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub w: usize,
    /// Number of time points per experiment.
    pub n: usize,
    pub t0: f64,
    pub tn: f64,
    pub sd: f64,
    pub noise_kind: NoiseKind,
    pub seed: u64,
}

/// Random rates (when a range is given) and initial conditions in `[0,1]`.
#[derive(Debug, Clone)]
pub struct SampledSetup {
    pub model: CrnModel,
    pub initial_states: Vec<Vec<f64>>,
}

pub fn sample_setup(
    template: &CrnModel,
    k_range: Option<(f64, f64)>,
    experiments: usize,
    seed: u64,
) -> Result<SampledSetup> {
    if experiments == 0 {
        return Err(CrnError::invalid("trajectory_sim", "experiment count must be positive"));
    }
    let mut rng = rng_for(seed, 0);
    let model = match k_range {
        Some((lo, hi)) => {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(CrnError::invalid("trajectory_sim", format!("invalid rate range [{lo}, {hi}]")));
            }
            let rates: Vec<f64> = (0..template.reactions().len())
                .map(|_| if lo == hi { lo } else { rng.random_range(lo..=hi) })
                .collect();
            template.with_rates(&rates)?
        }
        None => template.clone(),
    };
    let initial_states = (0..experiments)
        .map(|_| (0..template.species_count()).map(|_| rng.random::<f64>()).collect())
        .collect();
    Ok(SampledSetup { model, initial_states })
}

/// Integrates every experiment of `setup` on `grid` and stacks the blocks.
pub fn simulate_setup(setup: &SampledSetup, grid: &TimeGrid, seed: u64, opts: &OdeOptions) -> Result<TrajectoryBundle> {
    let m = setup.model.species_count();
    let w = setup.initial_states.len();
    let b = grid.points;
    let mut x = DMatrix::zeros(m, w * b);
    for (e, x0) in setup.initial_states.iter().enumerate() {
        let config = ExperimentConfig {
            grid: *grid,
            initial_state: x0.clone(),
            seed,
        };
        let sol = integrate_ode(&setup.model, &config, opts)?;
        x.columns_mut(e * b, b).copy_from(&sol.states);
    }
    Ok(TrajectoryBundle {
        experiments: w,
        grid: *grid,
        x,
        clean: None,
        noise_sd: 0.0,
        noise_kind: NoiseKind::Gaussian,
        seed,
    })
}

pub fn simulate_experiments(
    template: &CrnModel,
    k_range: Option<(f64, f64)>,
    experiments: usize,
    grid: &TimeGrid,
    seed: u64,
    opts: &OdeOptions,
) -> Result<(CrnModel, TrajectoryBundle)> {
    let setup = sample_setup(template, k_range, experiments, seed)?;
    let bundle = simulate_setup(&setup, grid, seed, opts)?;
    Ok((setup.model, bundle))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseOptions {
    pub sd: f64,
    pub kind: NoiseKind,
    pub clip_negative: bool,
}

/// Perturbs every entry of `x` independently. With `sd == 0` the bundle is
/// returned untouched.
pub fn add_noise(bundle: &TrajectoryBundle, noise: &NoiseOptions, seed: u64) -> Result<TrajectoryBundle> {
    if !(noise.sd >= 0.0 && noise.sd.is_finite()) {
        return Err(CrnError::invalid("trajectory_sim", format!("noise sd {} must be nonnegative", noise.sd)));
    }
    if noise.sd == 0.0 {
        return Ok(bundle.clone());
    }
    let normal = Normal::new(0.0, noise.sd).map_err(|e| CrnError::invalid("trajectory_sim", e.to_string()))?;
    let mut rng = rng_for(seed, 1);
    let bound = TRUNCATION_SDS * noise.sd;
    let mut x = bundle.x.clone();
    for v in x.iter_mut() {
        let xi = loop {
            let z = normal.sample(&mut rng);
            if noise.kind == NoiseKind::Gaussian || z.abs() <= bound {
                break z;
            }
        };
        *v += xi;
        if noise.clip_negative && *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(TrajectoryBundle {
        clean: Some(bundle.clean.clone().unwrap_or_else(|| bundle.x.clone())),
        x,
        noise_sd: noise.sd,
        noise_kind: noise.kind,
        seed,
        ..bundle.clone()
    })
}

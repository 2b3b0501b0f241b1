//! JSON experiment configuration shared by the command-line runner.
//!
//! Only `params` and `seed` are required; every other block has defaults.
//!
//! ```json
//! {
//!   "params": { "mu": 20.0, "rho": 1.0, "lambda": 1.0 },
//!   "seed": 1,
//!   "initial": { "kind": "product", "eta": 5.0,
//!                "velocity": { "kind": "maxwellian", "variance_scale": 2.0 } },
//!   "checkpoints": [0.0, 0.5, 1.0],
//!   "replicas": 10000
//! }
//! ```

use serde::{Deserialize, Serialize};

use crate::bk::{ChaosSetup, Interpolation, DEFAULT_ANGLES, DEFAULT_DT};
use crate::entropy::{EntropyDecaySetup, DEFAULT_CELLS};
use crate::error::{invalid, KacError, Result};
use crate::grid::VelocityGrid;
use crate::model::{ModelParams, VelocityLaw};
use crate::number_chain::DEFAULT_TAIL_TOLERANCE;
use crate::simulator::{InitialState, Observable};
use crate::spectral::DEFAULT_K_MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub mu: f64,
    pub rho: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub v_max: f64,
    pub dv: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { v_max: 4.0, dv: 0.02 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub cells: usize,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            cells: DEFAULT_CELLS,
        }
    }
}

/// Truncations of the number chain and of the Hermite basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruncationSpec {
    pub k_max: usize,
    /// Number-chain cutoff; derived from `μ/ρ` when absent.
    pub n_max: Option<usize>,
    pub tail_tolerance: f64,
    /// Number-chain RK4 step; derived from the rates when absent.
    pub dt: Option<f64>,
}

impl Default for TruncationSpec {
    fn default() -> Self {
        Self {
            k_max: DEFAULT_K_MAX,
            n_max: None,
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
            dt: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BkSpec {
    pub dt: f64,
    pub angles: usize,
    pub interpolation: Interpolation,
}

impl Default for BkSpec {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            angles: DEFAULT_ANGLES,
            interpolation: Interpolation::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntropySpec {
    pub bootstrap_resamples: usize,
}

impl Default for EntropySpec {
    fn default() -> Self {
        Self {
            bootstrap_resamples: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChaosSpec {
    #[serde(default)]
    pub g0: VelocityLaw,
    pub eta_scale: f64,
    pub mu_values: Vec<f64>,
    pub t: f64,
    #[serde(default = "chaos_bin_v_max")]
    pub bin_v_max: f64,
    #[serde(default = "chaos_bin_width")]
    pub bin_width: f64,
    #[serde(default = "chaos_batches")]
    pub batches: usize,
    #[serde(default = "chaos_resamples")]
    pub bootstrap_resamples: usize,
}

fn chaos_bin_v_max() -> f64 {
    2.0
}
fn chaos_bin_width() -> f64 {
    0.1
}
fn chaos_batches() -> usize {
    50
}
fn chaos_resamples() -> usize {
    200
}

fn default_initial() -> InitialState {
    InitialState::Stationary
}

fn default_replicas() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub params: ParamsSpec,
    pub seed: u64,
    #[serde(default = "default_initial")]
    pub initial: InitialState,
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub observables: Vec<Observable>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub partition: PartitionSpec,
    #[serde(default)]
    pub truncation: TruncationSpec,
    #[serde(default)]
    pub bk: BkSpec,
    #[serde(default)]
    pub entropy: EntropySpec,
    #[serde(default)]
    pub chaos: Option<ChaosSpec>,
}

impl ExperimentConfig {
    /// Parses and validates.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| KacError::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        ModelParams::new(self.params.mu, self.params.rho, self.params.lambda)
    }

    pub fn velocity_grid(&self) -> Result<VelocityGrid> {
        VelocityGrid::new(self.grid.v_max, self.grid.dv)
    }

    pub fn validate(&self) -> Result<()> {
        self.model_params()?;
        self.initial.validate()?;
        if self.checkpoints.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(invalid("checkpoints", "must be finite and >= 0"));
        }
        if self.checkpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("checkpoints", "must be strictly increasing"));
        }
        if self.replicas == 0 {
            return Err(invalid("replicas", "must be >= 1"));
        }
        self.velocity_grid()?;
        if self.partition.cells == 0 {
            return Err(invalid("partition.cells", "must be >= 1"));
        }
        if self.truncation.k_max < 7 {
            return Err(invalid("truncation.k_max", "must be >= 7"));
        }
        if !(self.truncation.tail_tolerance > 0.0) {
            return Err(invalid("truncation.tail_tolerance", "must be > 0"));
        }
        if matches!(self.truncation.dt, Some(dt) if !(dt > 0.0)) {
            return Err(invalid("truncation.dt", "must be > 0"));
        }
        if !(self.bk.dt > 0.0) {
            return Err(invalid("bk.dt", "must be > 0"));
        }
        if self.bk.angles < 4 {
            return Err(invalid("bk.angles", "must be >= 4"));
        }
        if self.entropy.bootstrap_resamples < 2 {
            return Err(invalid("entropy.bootstrap_resamples", "must be >= 2"));
        }
        if let Some(c) = &self.chaos {
            c.g0.validate()?;
            if !(c.eta_scale > 0.0) {
                return Err(invalid("chaos.eta_scale", "must be > 0"));
            }
            if c.mu_values.is_empty() || c.mu_values.iter().any(|m| !(*m > 0.0)) {
                return Err(invalid("chaos.mu_values", "must be nonempty and positive"));
            }
            if c.mu_values.windows(2).any(|w| w[1] <= w[0]) {
                return Err(invalid("chaos.mu_values", "must be strictly increasing"));
            }
            if !(c.t.is_finite() && c.t >= 0.0) {
                return Err(invalid("chaos.t", "must be finite and >= 0"));
            }
            VelocityGrid::new(c.bin_v_max, c.bin_width)?;
            if c.batches < 2 || c.batches > self.replicas {
                return Err(invalid("chaos.batches", "need 2 <= batches <= replicas"));
            }
        }
        Ok(())
    }

    /// Entropy experiment settings; requires a product initial state.
    pub fn entropy_setup(&self) -> Result<EntropyDecaySetup> {
        match self.initial {
            InitialState::Product { eta, velocity } => Ok(EntropyDecaySetup {
                eta,
                velocity,
                checkpoints: self.checkpoints.clone(),
                replicas: self.replicas,
                seed: self.seed,
                cells: self.partition.cells,
                bootstrap_resamples: self.entropy.bootstrap_resamples,
            }),
            _ => Err(invalid("initial", "the entropy experiment needs a product initial state")),
        }
    }

    pub fn chaos_setup(&self) -> Result<ChaosSetup> {
        let c = self
            .chaos
            .as_ref()
            .ok_or_else(|| invalid("chaos", "block required for the chaos experiment"))?;
        Ok(ChaosSetup {
            g0: c.g0,
            eta_scale: c.eta_scale,
            mu_values: c.mu_values.clone(),
            rho: self.params.rho,
            lambda: self.params.lambda,
            t: c.t,
            replicas: self.replicas,
            seed: self.seed,
            bin_v_max: c.bin_v_max,
            bin_width: c.bin_width,
            batches: c.batches,
            bootstrap_resamples: c.bootstrap_resamples,
        })
    }
}

//! `kac`: runs the grand-canonical Kac experiments from a JSON config.
//!
//! Every artifact carries the SHA-256 of the config file and the effective
//! seed: JSON outputs as top-level fields, CSV outputs as a leading `#` line.
//! Randomness is derived per replica from the seed alone, so outputs do not
//! depend on `--threads`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use kac_core::bk::{bk_solve, chaos_experiment, BkOperator, DensityField};
use kac_core::config::ExperimentConfig;
use kac_core::entropy::entropy_decay_experiment;
use kac_core::number_chain::{
    closed_form_moments, default_dt, default_n_max, evolve_number_dist_checkpoints,
    NumberDistribution,
};
use kac_core::simulator::{simulate_replicas, InitialState};
use kac_core::spectral::{gershgorin_delta, spectral_gaps};
use kac_core::verify::{run_criterion, CRITERIA};
use kac_core::{KacError, ModelParams};

/// Seed used by `verify` when neither `--seed` nor a config supplies one.
const VERIFY_DEFAULT_SEED: u64 = 1;
/// Modes whose Gershgorin bounds are compared with `δ₄ = −Δ₂`.
const GERSHGORIN_MODES: [usize; 6] = [1, 3, 5, 6, 8, 10];

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_CHECKS_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "kac", version, about = "Grand-canonical Kac model experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate replicas; writes trajectories.csv and summary.json.
    Simulate,
    /// Closed-form moments and number-chain laws; writes moments.csv and number_law.csv.
    Moments,
    /// First and second spectral gaps; writes spectrum.json.
    Spectrum,
    /// Entropy decay experiment; writes entropy.json.
    Entropy,
    /// Solve the kinetic equation; writes bk.csv.
    BkSolve,
    /// Propagation-of-chaos experiment; writes chaos.json.
    Chaos,
    /// Run the acceptance checks; writes verify.json.
    Verify {
        /// Comma-separated criterion ids (default: all).
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u8>,
    },
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    ChecksFailed,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<KacError> for Failure {
    fn from(e: KacError) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::ChecksFailed) => ExitCode::from(EXIT_CHECKS_FAILED),
    }
}

/// Loaded config plus its provenance.
struct Loaded {
    cfg: ExperimentConfig,
    sha256: String,
}

impl Loaded {
    fn stamp(&self) -> Stamp {
        Stamp {
            config_sha256: self.sha256.clone(),
            seed: self.cfg.seed,
        }
    }
}

#[derive(Serialize, Clone)]
struct Stamp {
    config_sha256: String,
    seed: u64,
}

#[derive(Serialize)]
struct Stamped<T: Serialize> {
    #[serde(flatten)]
    stamp: Stamp,
    #[serde(flatten)]
    body: T,
}

fn load(path: &Path, seed: Option<u64>) -> Result<Loaded, Failure> {
    let bytes = fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Config)?;
    let text = String::from_utf8(bytes.clone())
        .with_context(|| format!("{} is not UTF-8", path.display()))
        .map_err(Failure::Config)?;
    let mut cfg = ExperimentConfig::from_json(&text)
        .with_context(|| format!("in {}", path.display()))
        .map_err(Failure::Config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(Loaded {
        cfg,
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    let c = cli.common;
    if let Some(n) = c.threads {
        if n == 0 {
            return Err(Failure::Config(anyhow::anyhow!("--threads must be >= 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;

    if let Command::Verify { criteria } = &cli.command {
        let loaded = match &c.config {
            Some(p) => Some(load(p, c.seed)?),
            None => None,
        };
        return verify(loaded, c.seed, criteria, &c.out);
    }

    let Some(path) = &c.config else {
        return Err(Failure::Config(anyhow::anyhow!("--config is required")));
    };
    let loaded = load(path, c.seed)?;
    match cli.command {
        Command::Simulate => simulate(&loaded, &c.out),
        Command::Moments => moments(&loaded, &c.out),
        Command::Spectrum => spectrum(&loaded, &c.out),
        Command::Entropy => entropy(&loaded, &c.out),
        Command::BkSolve => bk(&loaded, &c.out),
        Command::Chaos => chaos(&loaded, &c.out),
        Command::Verify { .. } => unreachable!(),
    }
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    let path = out.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(out: &Path, name: &str, stamp: Stamp, body: T) -> Result<(), Failure> {
    let mut w = create(out, name)?;
    serde_json::to_writer_pretty(&mut w, &Stamped { stamp, body }).context("serializing")?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn csv_stamp(w: &mut impl Write, stamp: &Stamp) -> std::io::Result<()> {
    writeln!(w, "# config_sha256={} seed={}", stamp.config_sha256, stamp.seed)
}

fn checkpoints(cfg: &ExperimentConfig) -> Result<&[f64], Failure> {
    if cfg.checkpoints.is_empty() {
        return Err(Failure::Config(anyhow::anyhow!(
            "invalid parameter `checkpoints`: at least one checkpoint is required"
        )));
    }
    Ok(&cfg.checkpoints)
}

fn simulate(l: &Loaded, out: &Path) -> Result<(), Failure> {
    let cfg = &l.cfg;
    let params = cfg.model_params()?;
    let series = simulate_replicas(
        &cfg.initial,
        &params,
        checkpoints(cfg)?,
        cfg.replicas,
        cfg.seed,
        &cfg.observables,
    )?;
    let mut w = create(out, "trajectories.csv")?;
    csv_stamp(&mut w, &l.stamp())?;
    series.write_csv(&mut w)?;
    w.flush()?;
    write_json(out, "summary.json", l.stamp(), series.summary())
}

/// Number law at `t = 0` for the configured initial state.
fn initial_number_law(initial: &InitialState, params: &ModelParams, n_max: usize) -> NumberDistribution {
    match *initial {
        InitialState::Stationary => NumberDistribution::poisson(params.mean_n(), n_max),
        InitialState::Product { eta, .. } => NumberDistribution::poisson(eta, n_max),
        InitialState::Fixed { n, .. } => NumberDistribution::delta(n, n_max),
    }
}

fn moments(l: &Loaded, out: &Path) -> Result<(), Failure> {
    let cfg = &l.cfg;
    let params = cfg.model_params()?;
    let times = checkpoints(cfg)?;
    let n0 = cfg.initial.mean_n(&params);
    let e0 = cfg.initial.mean_sum_v2(&params);

    let mut w = create(out, "moments.csv")?;
    csv_stamp(&mut w, &l.stamp())?;
    writeln!(w, "t,N_mean,E_mean,e")?;
    for &t in times {
        let m = closed_form_moments(n0, e0, &params, t)?;
        writeln!(w, "{t},{},{},{}", m.n, m.e_total, m.e_per_particle)?;
    }
    w.flush()?;

    // The initial law must fit under the cutoff with room for the flow.
    let start = n0 + 10.0 * n0.sqrt() + 20.0;
    let n_max = cfg
        .truncation
        .n_max
        .unwrap_or_else(|| default_n_max(&params).max(start.ceil() as usize));
    let dt = cfg.truncation.dt.unwrap_or_else(|| default_dt(&params, n_max));
    let p0 = initial_number_law(&cfg.initial, &params, n_max);
    let laws = evolve_number_dist_checkpoints(&p0, &params, times, dt, cfg.truncation.tail_tolerance)?;
    let mut w = create(out, "number_law.csv")?;
    csv_stamp(&mut w, &l.stamp())?;
    writeln!(w, "t,N,p_N")?;
    for (&t, p) in times.iter().zip(&laws) {
        for (n, x) in p.probs().iter().enumerate() {
            writeln!(w, "{t},{n},{x:e}")?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct GershgorinReport {
    delta4: f64,
    modes: Vec<usize>,
    lower_bounds: Vec<f64>,
    all_exceed_delta4: bool,
}

#[derive(Serialize)]
struct SpectrumReport {
    delta: f64,
    delta2: f64,
    bounds: kac_core::spectral::GapBounds,
    gershgorin: GershgorinReport,
    truncation: kac_core::spectral::Truncation,
    condition_satisfied: bool,
}

fn spectrum(l: &Loaded, out: &Path) -> Result<(), Failure> {
    let params = l.cfg.model_params()?;
    let g = spectral_gaps(&params, l.cfg.truncation.k_max);
    let delta4 = -g.delta2;
    let lower_bounds: Vec<f64> = GERSHGORIN_MODES
        .iter()
        .map(|&m| gershgorin_delta(m, &params))
        .collect();
    let report = SpectrumReport {
        delta: g.delta,
        delta2: g.delta2,
        bounds: g.bounds,
        gershgorin: GershgorinReport {
            delta4,
            modes: GERSHGORIN_MODES.to_vec(),
            all_exceed_delta4: lower_bounds.iter().all(|&b| b > delta4),
            lower_bounds,
        },
        truncation: g.truncation,
        condition_satisfied: g.condition_satisfied,
    };
    write_json(out, "spectrum.json", l.stamp(), report)
}

fn entropy(l: &Loaded, out: &Path) -> Result<(), Failure> {
    let cfg = &l.cfg;
    let params = cfg.model_params()?;
    checkpoints(cfg)?;
    let setup = cfg.entropy_setup().map_err(|e| Failure::Config(e.into()))?;
    let report = entropy_decay_experiment(&setup, &params, &cfg.velocity_grid()?)?;
    write_json(out, "entropy.json", l.stamp(), report)
}

fn operator(cfg: &ExperimentConfig) -> Result<BkOperator, Failure> {
    Ok(BkOperator::new(cfg.velocity_grid()?, cfg.bk.angles, cfg.bk.interpolation)?)
}

fn bk(l: &Loaded, out: &Path) -> Result<(), Failure> {
    let cfg = &l.cfg;
    let params = cfg.model_params()?;
    let grid = cfg.velocity_grid()?;
    let f0 = match cfg.initial {
        InitialState::Stationary => DensityField::maxwellian(grid),
        InitialState::Product { eta, velocity } => {
            if params.mean_n() == 0.0 {
                return Err(Failure::Config(anyhow::anyhow!(
                    "invalid parameter `params.mu`: the relative density needs mu > 0"
                )));
            }
            DensityField::from_law(grid, &velocity, eta / params.mean_n())
        }
        InitialState::Fixed { .. } => {
            return Err(Failure::Config(anyhow::anyhow!(
                "invalid parameter `initial`: bk-solve needs a stationary or product initial state"
            )))
        }
    };
    let traj = bk_solve(&operator(cfg)?, &f0, &params, checkpoints(cfg)?, cfg.bk.dt)?;
    let mut w = create(out, "bk.csv")?;
    csv_stamp(&mut w, &l.stamp())?;
    traj.write_csv(&mut w)?;
    w.flush()?;
    if traj.clipped_mass > 0.0 {
        eprintln!("note: clipping removed mass {:e}", traj.clipped_mass);
    }
    Ok(())
}

fn chaos(l: &Loaded, out: &Path) -> Result<(), Failure> {
    let cfg = &l.cfg;
    let setup = cfg.chaos_setup().map_err(|e| Failure::Config(e.into()))?;
    let report = chaos_experiment(&setup, &operator(cfg)?, cfg.bk.dt)?;
    #[derive(Serialize)]
    struct Body<T: Serialize> {
        #[serde(flatten)]
        report: T,
        marginal_decreasing: bool,
        factorization_decreasing: bool,
    }
    let body = Body {
        marginal_decreasing: report.marginal_decreasing(),
        factorization_decreasing: report.factorization_decreasing(),
        report,
    };
    write_json(out, "chaos.json", l.stamp(), body)
}

fn verify(loaded: Option<Loaded>, seed: Option<u64>, criteria: &[u8], out: &Path) -> Result<(), Failure> {
    let (seed, sha) = match &loaded {
        Some(l) => (l.cfg.seed, l.sha256.clone()),
        None => (seed.unwrap_or(VERIFY_DEFAULT_SEED), String::new()),
    };
    let ids: Vec<u8> = if criteria.is_empty() {
        CRITERIA.iter().map(|c| c.0).collect()
    } else {
        criteria.to_vec()
    };
    if let Some(bad) = ids.iter().find(|id| !CRITERIA.iter().any(|c| c.0 == **id)) {
        return Err(Failure::Config(anyhow::anyhow!("unknown criterion {bad}")));
    }
    let mut reports = Vec::with_capacity(ids.len());
    for id in ids {
        let r = run_criterion(id, seed);
        println!("{}", r.line());
        reports.push(r);
    }
    let failed: Vec<u8> = reports.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    println!(
        "{} of {} criteria passed{}",
        reports.len() - failed.len(),
        reports.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failed: {failed:?}")
        }
    );
    #[derive(Serialize)]
    struct Body {
        criteria: Vec<kac_core::verify::CheckReport>,
    }
    let stamp = Stamp {
        config_sha256: sha,
        seed,
    };
    write_json(out, "verify.json", stamp, Body { criteria: reports })?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::ChecksFailed)
    }
}

//! End-to-end checks of the model's quantitative claims, one per acceptance
//! criterion. Each check runs its own experiment and reports measured
//! values next to the thresholds they are held to.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bk::{
    bk_solve, chaos_experiment, thermostat_solution, BkOperator, ChaosSetup, DensityField,
    DEFAULT_DT,
};
use crate::entropy::{
    check_binomial_lsi, check_poisson_lsi, check_two_point, entropy_decay_experiment,
    product_state_entropy, EntropyDecaySetup, INEQUALITY_SLACK,
};
use crate::error::Result;
use crate::grid::VelocityGrid;
use crate::model::{maxwellian_cdf, poisson_pmf, ModelParams, VelocityLaw, MAXWELLIAN_VARIANCE};
use crate::number_chain::{
    closed_form_moments, default_dt, default_n_max, evolve_number_dist_checkpoints,
    product_state_flow, NumberDistribution, ProductState, DEFAULT_TAIL_TOLERANCE,
};
use crate::simulator::{
    default_cap, empirical_number_law, replica_rng, run_replicas, simulate_replicas,
    InitialState, Observable,
};
use crate::spectral::{
    a_2n, gershgorin_delta, sigma, sigma_binomial, spectral_gaps, tau, verify_commutators,
};
use crate::stats::{fit_exponential_rate, ks_critical_value, ks_statistic, mean_se, tv_distance};

/// A measured quantity and the bound it must respect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    /// Human-readable requirement, e.g. `< 0.02`.
    pub requirement: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    pub metrics: Vec<Metric>,
    pub seconds: f64,
    pub error: Option<String>,
}

impl CheckReport {
    /// One-line summary: `[PASS] 5 Second gap: delta2=-1.2494 (in [..]) …`.
    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let mut s = format!("[{status}] {:>2} {} ({:.1} s)", self.id, self.title, self.seconds);
        for m in &self.metrics {
            let flag = if m.ok { "" } else { " !" };
            s.push_str(&format!("; {}={:.6e} {}{flag}", m.name, m.value, m.requirement));
        }
        if let Some(e) = &self.error {
            s.push_str(&format!("; error: {e}"));
        }
        s
    }
}

struct Metrics(Vec<Metric>);

impl Metrics {
    fn new() -> Self {
        Self(Vec::new())
    }

    fn below(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        self.0.push(Metric {
            name: name.into(),
            value,
            requirement: format!("< {bound:e}"),
            ok: value < bound,
        });
    }

    fn at_most(&mut self, name: impl Into<String>, value: f64, bound: f64) {
        self.0.push(Metric {
            name: name.into(),
            value,
            requirement: format!("<= {bound:e}"),
            ok: value <= bound,
        });
    }

    fn within(&mut self, name: impl Into<String>, value: f64, lo: f64, hi: f64) {
        self.0.push(Metric {
            name: name.into(),
            value,
            requirement: format!("in [{lo}, {hi}]"),
            ok: lo <= value && value <= hi,
        });
    }

    fn flag(&mut self, name: impl Into<String>, ok: bool, requirement: &str) {
        self.0.push(Metric {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            requirement: requirement.to_string(),
            ok,
        });
    }
}

pub const CRITERIA: [(u8, &str); 11] = [
    (1, "Stationarity"),
    (2, "Moment laws"),
    (3, "Number chain oracle"),
    (4, "Spectral gap"),
    (5, "Second gap"),
    (6, "Exact coefficients"),
    (7, "Commutation relations"),
    (8, "Entropy inequalities"),
    (9, "Entropy decay"),
    (10, "Kinetic solver"),
    (11, "Propagation of chaos"),
];

/// Runs criterion `id` with the given base seed.
pub fn run_criterion(id: u8, seed: u64) -> CheckReport {
    let title = CRITERIA
        .iter()
        .find(|c| c.0 == id)
        .map(|c| c.1)
        .unwrap_or("unknown")
        .to_string();
    let start = Instant::now();
    let seed = seed.wrapping_add(id as u64);
    let result = match id {
        1 => stationarity(seed),
        2 => moment_laws(seed),
        3 => number_chain_oracle(seed),
        4 => spectral_gap(seed),
        5 => second_gap(),
        6 => exact_coefficients(),
        7 => commutators(),
        8 => entropy_inequalities(seed),
        9 => entropy_decay(seed),
        10 => kinetic_solver(),
        11 => chaos(seed),
        _ => Err(crate::KacError::InvalidArgument(format!("no criterion {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let (mut metrics, error) = match result {
        Ok(m) => (m.0, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    let limit = match id {
        1 => Some(120.0),
        5 => Some(10.0),
        11 => Some(900.0),
        _ => None,
    };
    if let Some(l) = limit {
        metrics.push(Metric {
            name: "runtime_s".into(),
            value: seconds,
            requirement: format!("<= {l}"),
            ok: seconds <= l,
        });
    }
    CheckReport {
        id,
        title,
        passed: error.is_none() && metrics.iter().all(|m| m.ok),
        metrics,
        seconds,
        error,
    }
}

/// Runs every criterion in order.
pub fn run_all(seed: u64) -> Vec<CheckReport> {
    CRITERIA.iter().map(|c| run_criterion(c.0, seed)).collect()
}

fn params(mu: f64, rho: f64, lambda: f64) -> Result<ModelParams> {
    ModelParams::new(mu, rho, lambda)
}

fn empty_start() -> InitialState {
    InitialState::Fixed {
        n: 0,
        velocity: VelocityLaw::maxwellian(),
    }
}

fn number_chain_from_empty(p: &ModelParams, checkpoints: &[f64]) -> Result<Vec<NumberDistribution>> {
    let n_max = default_n_max(p);
    evolve_number_dist_checkpoints(
        &NumberDistribution::delta(0, n_max),
        p,
        checkpoints,
        default_dt(p, n_max),
        DEFAULT_TAIL_TOLERANCE,
    )
}

fn stationarity(seed: u64) -> Result<Metrics> {
    let p = params(20.0, 1.0, 1.0)?;
    let t = 15.0;
    let replicas = 10_000;
    let recs = run_replicas(&empty_start(), &p, &[t], replicas, seed, default_cap(&p), |s, _| {
        s.velocities.clone()
    })?;
    let mut counts = vec![0.0; default_cap(&p) + 1];
    let mut velocities = Vec::new();
    for r in recs {
        let v = &r[0];
        counts[v.len()] += 1.0 / replicas as f64;
        velocities.extend_from_slice(v);
    }
    let n_max = default_n_max(&p);
    let poisson = poisson_pmf(p.mean_n(), n_max);
    let chain = number_chain_from_empty(&p, &[t])?;
    let ks = ks_statistic(&velocities, maxwellian_cdf);
    let mut m = Metrics::new();
    m.below("tv_to_poisson", tv_distance(&counts, &poisson), 0.02);
    m.below("tv_to_number_chain", tv_distance(&counts, chain[0].probs()), 0.01);
    m.at_most("ks_velocity", ks, ks_critical_value(velocities.len(), 0.01));
    Ok(m)
}

fn moment_laws(seed: u64) -> Result<Metrics> {
    let p = params(20.0, 1.0, 1.0)?;
    let eta = 5.0;
    let init = InitialState::Product {
        eta,
        velocity: VelocityLaw::maxwellian(),
    };
    let ts = [0.5, 1.0, 2.0, 4.0, 8.0];
    let series = simulate_replicas(&init, &p, &ts, 10_000, seed, &[])?;
    let mut m = Metrics::new();
    for (c, &t) in ts.iter().enumerate() {
        let exact = closed_form_moments(eta, eta * MAXWELLIAN_VARIANCE, &p, t)?;
        let n = mean_se(&series.n_as_f64(c));
        let e = mean_se(&series.sum_v2[c]);
        m.at_most(format!("N_z@{t}"), (n.mean - exact.n).abs() / n.se, 3.0);
        m.at_most(format!("E_z@{t}"), (e.mean - exact.e_total).abs() / e.se, 3.0);
    }
    Ok(m)
}

fn number_chain_oracle(seed: u64) -> Result<Metrics> {
    let p = params(20.0, 1.0, 1.0)?;
    let ts = [0.5, 1.0, 2.0, 4.0, 8.0, 15.0];
    let replicas = 10_000;
    let series = simulate_replicas(&empty_start(), &p, &ts, replicas, seed, &[])?;
    let chain = number_chain_from_empty(&p, &ts)?;
    let tol = 3.0 * (default_n_max(&p) as f64).sqrt() / (replicas as f64).sqrt();
    let mut m = Metrics::new();
    for (c, &t) in ts.iter().enumerate() {
        let emp = empirical_number_law(&series, c)?;
        m.at_most(format!("tv@{t}"), tv_distance(emp.probs(), chain[c].probs()), tol);
    }
    Ok(m)
}

fn spectral_gap(seed: u64) -> Result<Metrics> {
    let ts: Vec<f64> = (0..=8).map(|i| 0.25 * i as f64).collect();
    let init = InitialState::Product {
        eta: 5.0,
        velocity: VelocityLaw::Maxwellian {
            variance_scale: 2.5,
        },
    };
    let mut m = Metrics::new();
    for lambda in [0.0, 1.0] {
        let p = params(20.0, 1.0, lambda)?;
        let s = simulate_replicas(&init, &p, &ts, 100_000, seed, &[Observable::NumberMode])?;
        for (name, data) in [("number_mode", &s.extra[0]), ("energy_mode", &s.energy_mode)] {
            let stats: Vec<_> = data.iter().map(|x| mean_se(x)).collect();
            let y: Vec<f64> = stats.iter().map(|x| x.mean).collect();
            let se: Vec<f64> = stats.iter().map(|x| x.se).collect();
            let fit = fit_exponential_rate(&ts, &y, &se, 3.0)?;
            m.below(
                format!("{name}_rate_rel_err@lambda={lambda}"),
                (fit.rate - p.rho()).abs() / p.rho(),
                0.05,
            );
        }
    }
    Ok(m)
}

fn second_gap() -> Result<Metrics> {
    let p = params(512.0, 1.0, 1.0)?;
    let g = spectral_gaps(&p, 40);
    let mut m = Metrics::new();
    m.flag("gap_condition", g.condition_satisfied, "holds");
    m.within("delta2", g.delta2, -1.25, -1.16161);
    m.below("truncation_drift_35_40", g.truncation.drift, 1e-8);
    let delta4 = -g.delta2;
    for k in [1, 3, 5, 6, 8, 10] {
        let d = gershgorin_delta(k, &p);
        m.0.push(Metric {
            name: format!("gershgorin_delta_{k}"),
            value: d,
            requirement: format!("> delta_4 = {delta4:.6}"),
            ok: d > delta4,
        });
    }
    Ok(m)
}

fn exact_coefficients() -> Result<Metrics> {
    let mut m = Metrics::new();
    m.at_most("tau2_err", (tau(2) - 3.0 / 8.0).abs(), f64::EPSILON);
    m.at_most("tau3_err", (tau(3) - 5.0 / 16.0).abs(), f64::EPSILON);
    let mut worst = 0.0f64;
    for n in 2..=20 {
        for k in 1..n {
            worst = worst.max((sigma(n, k)? - sigma_binomial(n, k)?).abs());
        }
    }
    m.at_most("sigma_dual_formula_diff", worst, 1e-12);
    let a_max = (1..=30).map(a_2n).fold(f64::NEG_INFINITY, f64::max);
    m.at_most("max_A_2n", a_max, 2.0);
    Ok(m)
}

fn commutators() -> Result<Metrics> {
    let p = params(20.0, 1.0, 1.0)?;
    let r = verify_commutators(5, &p, 8);
    let mut m = Metrics::new();
    for (name, res) in &r.residuals {
        m.at_most(name.clone(), *res, 1e-10);
    }
    Ok(m)
}

fn log_uniform<R: Rng>(rng: &mut R, span: f64) -> f64 {
    rng.random_range(-span..span).exp()
}

/// Counts violations of a randomized inequality over `trials` draws.
fn sweep<F>(trials: usize, seed: u64, check: F) -> Result<(usize, f64)>
where
    F: Fn(&mut rand_chacha::ChaCha12Rng) -> Result<f64> + Sync,
{
    let slacks: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| check(&mut replica_rng(seed, i)))
        .collect::<Result<_>>()?;
    let violations = slacks.iter().filter(|s| **s < -INEQUALITY_SLACK).count();
    Ok((violations, slacks.iter().copied().fold(f64::INFINITY, f64::min)))
}

fn entropy_inequalities(seed: u64) -> Result<Metrics> {
    let mut m = Metrics::new();
    let (v, _) = sweep(10_000, seed, |rng| {
        let f0 = log_uniform(rng, 5.0);
        let f1 = log_uniform(rng, 5.0);
        let mu0 = rng.random_range(0.0..=1.0);
        Ok(check_two_point(f0, f1, mu0)?.slack())
    })?;
    m.at_most("two_point_violations", v as f64, 0.0);
    for alpha in [0.5f64, 2.0, 20.0] {
        let (v, _) = sweep(1000, seed ^ alpha.to_bits(), |rng| {
            let f: Vec<f64> = (0..=60).map(|_| log_uniform(rng, 3.0)).collect();
            Ok(check_poisson_lsi(&f, alpha)?.slack())
        })?;
        m.at_most(format!("poisson_violations@alpha={alpha}"), v as f64, 0.0);
    }
    for trials in [1usize, 10, 50] {
        let (v, _) = sweep(1000, seed ^ (trials as u64) << 32, |rng| {
            let alpha = rng.random_range(0.0..1.0f64).max(1e-6) * (trials as f64).min(20.0);
            let f: Vec<f64> = (0..=trials).map(|_| log_uniform(rng, 3.0)).collect();
            Ok(check_binomial_lsi(&f, alpha, trials)?.inequality.slack())
        })?;
        m.at_most(format!("binomial_violations@N={trials}"), v as f64, 0.0);
    }
    Ok(m)
}

fn entropy_decay(seed: u64) -> Result<Metrics> {
    let mut m = Metrics::new();
    let grid = VelocityGrid::default_bk();
    let hot = VelocityLaw::Maxwellian {
        variance_scale: 2.5,
    };
    // Exact thermostat flow of product states.
    let p = params(20.0, 1.0, 0.0)?;
    let ts = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0];
    for ratio in [0.25, 4.0] {
        for (label, law) in [("maxwellian", VelocityLaw::maxwellian()), ("hot", hot)] {
            let ps0 = ProductState::new(ratio * p.mean_n(), grid.clone(), &law)?;
            let s0 = product_state_entropy(&ps0, &p);
            let worst = ts
                .iter()
                .map(|&t| {
                    let s = product_state_entropy(&product_state_flow(&ps0, &p, t), &p);
                    (-p.rho() * t).exp() * s0 - s
                })
                .fold(f64::INFINITY, f64::min);
            m.0.push(Metric {
                name: format!("analytic_min_slack@ratio={ratio},{label}"),
                value: worst,
                requirement: format!(">= -{INEQUALITY_SLACK:e}"),
                ok: worst >= -INEQUALITY_SLACK,
            });
        }
    }
    // Simulated replicas with collisions, plug-in coarse-grained entropy.
    let p = params(2.0, 1.0, 1.0)?;
    for ratio in [0.25, 4.0] {
        let setup = EntropyDecaySetup {
            eta: ratio * p.mean_n(),
            velocity: hot,
            checkpoints: vec![0.0, 0.5, 1.0, 2.0],
            replicas: 100_000,
            seed,
            cells: 8,
            bootstrap_resamples: 200,
        };
        let rep = entropy_decay_experiment(&setup, &p, &grid)?;
        for row in &rep.rows {
            let z = (row.s_estimate - row.bound) / row.s_estimate_sd;
            m.at_most(format!("mc_excess_in_sd@ratio={ratio},t={}", row.t), z, 3.0);
        }
    }
    Ok(m)
}

fn kinetic_solver() -> Result<Metrics> {
    let op = BkOperator::with_defaults();
    let grid = op.grid().clone();
    let mut m = Metrics::new();
    let law = VelocityLaw::TwoBump {
        center: 0.5,
        variance_scale: 0.6,
    };
    let f0 = DensityField::from_law(grid.clone(), &law, 1.2);
    let p = params(1.0, 1.0, 0.0)?;
    let tr = bk_solve(&op, &f0, &p, &[1.0], DEFAULT_DT)?;
    m.at_most(
        "l1_error_lambda0@t=1",
        tr.fields[0].l1_distance(&thermostat_solution(&f0, &p, 1.0)),
        1e-4,
    );
    for (label, f) in [
        ("two_bump", f0.clone()),
        (
            "hot",
            DensityField::from_law(grid.clone(), &VelocityLaw::Maxwellian { variance_scale: 2.0 }, 1.0),
        ),
        ("maxwellian", DensityField::maxwellian(grid.clone())),
    ] {
        let q = op.collision(&f.values);
        let mass = grid.integrate(&q).abs();
        let energy = grid
            .integrate(&q.iter().zip(grid.points()).map(|(x, v)| x * v * v).collect::<Vec<_>>())
            .abs();
        m.at_most(format!("collision_mass_residual@{label}"), mass, 1e-6);
        m.at_most(format!("collision_energy_residual@{label}"), energy, 1e-6);
    }
    Ok(m)
}

fn chaos(seed: u64) -> Result<Metrics> {
    let op = BkOperator::with_defaults();
    let setup = ChaosSetup {
        g0: VelocityLaw::TwoBump {
            center: 0.7,
            variance_scale: 0.3,
        },
        eta_scale: 2.0,
        mu_values: vec![32.0, 128.0, 512.0],
        rho: 1.0,
        lambda: 1.0,
        t: 1.0,
        replicas: 400_000,
        seed,
        bin_v_max: 2.0,
        bin_width: 0.1,
        batches: 50,
        bootstrap_resamples: 200,
    };
    let r = chaos_experiment(&setup, &op, DEFAULT_DT)?;
    let mut m = Metrics::new();
    for (i, mu) in r.mu_values.iter().enumerate() {
        m.0.push(Metric {
            name: format!("marginal_l1@mu={mu}"),
            value: r.marginal_defect[i],
            requirement: format!("sd {:.2e}", r.marginal_defect_sd[i]),
            ok: true,
        });
        m.0.push(Metric {
            name: format!("factorization_l1@mu={mu}"),
            value: r.factorization_defect[i],
            requirement: format!("sd {:.2e}", r.factorization_defect_sd[i]),
            ok: true,
        });
    }
    m.flag("marginal_decreasing", r.marginal_decreasing(), "strict, beyond 2 sd");
    m.flag("factorization_decreasing", r.factorization_decreasing(), "strict, beyond 2 sd");
    Ok(m)
}

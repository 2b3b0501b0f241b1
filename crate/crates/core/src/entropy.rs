//! Relative entropy with respect to the steady state, its coarse-grained
//! counterpart on velocity cells, the entry/exit Dirichlet form, and
//! brute-force checks of the discrete log-Sobolev type inequalities behind
//! the decay bound `S(t) ≤ e^{−ρt} S(0)`.
//!
//! Coarse graining replaces velocities by the cell they fall in. A state is
//! then described by the law of its occupation vector `n̄ ∈ ℕ^K`, and the
//! steady state becomes independent Poisson(`α_k`) occupations with
//! `α_k = (μ/ρ) ω_k`, `ω_k = ∫_{B_k} γ`. Writing `F(n̄)` for the occupation
//! law divided by that reference, the three functionals are
//!
//! ```text
//! Ẽ = Σ F Π π_{α_k}(n_k)
//! S̃ = Σ F log F Π π_{α_k}(n_k)
//! Ψ̃ = Σ_q α_q Σ (F(n̄+e_q) − F(n̄)) (log F(n̄+e_q) − log F(n̄)) Π π_{α_k}(n_k)
//! ```

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, KacError, Result};
use crate::grid::VelocityGrid;
use crate::model::{
    ln_poisson_weight, maxwellian_cdf, maxwellian_pdf, ModelParams, ParticleState, VelocityLaw,
    MAXWELLIAN_VARIANCE,
};
use crate::number_chain::{product_state_flow, ProductState};
use crate::simulator::{default_cap, run_replicas, InitialState};
use crate::stats::bootstrap_sd;

/// Default number of velocity cells.
pub const DEFAULT_CELLS: usize = 8;
/// Minimum number of replica states for the plug-in estimator.
pub const MIN_ESTIMATOR_SAMPLES: usize = 1000;
/// Tolerance used when declaring an inequality satisfied.
pub const INEQUALITY_SLACK: f64 = 1e-12;
/// Truncation tail allowed in the Poisson sums.
pub const POISSON_TAIL: f64 = 1e-14;

/// Partition of the real line into `K` ordered cells
/// `(−∞, e_0), [e_0, e_1), …, [e_{K−2}, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPartition {
    edges: Vec<f64>,
    omega: Vec<f64>,
}

impl CellPartition {
    /// `k` cells of equal Maxwellian mass `1/k`.
    pub fn equal_mass(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(invalid("cells", "need at least one cell"));
        }
        let normal = Normal::new(0.0, MAXWELLIAN_VARIANCE.sqrt()).expect("valid normal");
        let edges: Vec<f64> = (1..k)
            .map(|i| {
                let target = i as f64 / k as f64;
                // Newton polish of the library quantile.
                let mut x = normal.inverse_cdf(target);
                for _ in 0..3 {
                    x -= (maxwellian_cdf(x) - target) / maxwellian_pdf(x);
                }
                x
            })
            .collect();
        Self::from_edges(edges)
    }

    /// Cells bounded by the strictly increasing interior `edges`.
    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(invalid("edges", "must be finite"));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("edges", "must be strictly increasing"));
        }
        let omega = cell_masses(&edges, maxwellian_cdf);
        Ok(Self { edges, omega })
    }

    pub fn k(&self) -> usize {
        self.omega.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Maxwellian mass `ω_k` of every cell.
    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Reference occupation means `α_k = (μ/ρ) ω_k`.
    pub fn alphas(&self, params: &ModelParams) -> Vec<f64> {
        self.omega.iter().map(|w| params.mean_n() * w).collect()
    }

    pub fn cell_of(&self, v: f64) -> usize {
        self.edges.partition_point(|&e| e <= v)
    }

    /// Number of particles in each cell.
    pub fn occupation(&self, state: &ParticleState) -> Vec<u32> {
        let mut n = vec![0u32; self.k()];
        for &v in &state.velocities {
            n[self.cell_of(v)] += 1;
        }
        n
    }

    /// Mass of each cell under a velocity law.
    pub fn law_masses(&self, law: &VelocityLaw) -> Vec<f64> {
        cell_masses(&self.edges, |v| law.cdf(v))
    }

    /// True when every edge of `coarser` is also an edge of `self`.
    pub fn refines(&self, coarser: &CellPartition) -> bool {
        coarser
            .edges
            .iter()
            .all(|e| self.edges.iter().any(|x| (x - e).abs() <= 1e-12 * e.abs().max(1.0)))
    }
}

fn cell_masses(edges: &[f64], cdf: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut cum: Vec<f64> = Vec::with_capacity(edges.len() + 2);
    cum.push(0.0);
    cum.extend(edges.iter().map(|&e| cdf(e)));
    cum.push(1.0);
    cum.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Nonnegative function on occupation vectors with `Σ n_k ≤ n_max`. Vectors
/// not stored are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationFunction {
    k: usize,
    n_max: usize,
    values: HashMap<Vec<u32>, f64>,
}

impl OccupationFunction {
    pub fn new(k: usize, n_max: usize) -> Self {
        Self {
            k,
            n_max,
            values: HashMap::new(),
        }
    }

    /// Tabulates `f` on every vector of the truncated domain.
    pub fn from_fn(k: usize, n_max: usize, mut f: impl FnMut(&[u32]) -> f64) -> Result<Self> {
        let mut out = Self::new(k, n_max);
        for n in occupation_vectors(k, n_max) {
            let x = f(&n);
            out.insert(n, x)?;
        }
        Ok(out)
    }

    pub fn insert(&mut self, n: Vec<u32>, value: f64) -> Result<()> {
        if n.len() != self.k {
            return Err(KacError::InvalidArgument(format!(
                "occupation vector has {} cells, expected {}",
                n.len(),
                self.k
            )));
        }
        if n.iter().map(|&x| x as usize).sum::<usize>() > self.n_max {
            return Err(KacError::InvalidArgument("occupation vector exceeds n_max".into()));
        }
        if !(value.is_finite() && value >= 0.0) {
            return Err(KacError::InvalidArgument(format!(
                "occupation function must be finite and >= 0, got {value}"
            )));
        }
        if value > 0.0 {
            self.values.insert(n, value);
        } else {
            self.values.remove(&n);
        }
        Ok(())
    }

    pub fn get(&self, n: &[u32]) -> f64 {
        self.values.get(n).copied().unwrap_or(0.0)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn support_len(&self) -> usize {
        self.values.len()
    }

    fn check_alphas(&self, alphas: &[f64]) -> Result<()> {
        if alphas.len() != self.k {
            return Err(KacError::InvalidArgument(format!(
                "{} rates for {} cells",
                alphas.len(),
                self.k
            )));
        }
        if alphas.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return Err(KacError::InvalidArgument("cell rates must be >= 0".into()));
        }
        Ok(())
    }
}

/// All vectors in `ℕ^k` with coordinate sum at most `n_max`.
pub fn occupation_vectors(k: usize, n_max: usize) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, k: usize, left: usize, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == k {
            out.push(prefix.clone());
            return;
        }
        for x in 0..=left {
            prefix.push(x as u32);
            rec(prefix, k, left - x, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(k), k, n_max, &mut out);
    out
}

fn ln_reference(n: &[u32], alphas: &[f64]) -> f64 {
    n.iter()
        .zip(alphas)
        .map(|(&x, &a)| ln_poisson_weight(x as usize, a))
        .sum()
}

/// `Ẽ(F)`.
pub fn e_tilde(f: &OccupationFunction, alphas: &[f64]) -> Result<f64> {
    f.check_alphas(alphas)?;
    Ok(f.values
        .iter()
        .map(|(n, &x)| x * ln_reference(n, alphas).exp())
        .sum())
}

/// `S̃(F)`; terms with `F = 0` contribute 0.
pub fn s_tilde(f: &OccupationFunction, alphas: &[f64]) -> Result<f64> {
    f.check_alphas(alphas)?;
    Ok(f.values
        .iter()
        .map(|(n, &x)| x * x.ln() * ln_reference(n, alphas).exp())
        .sum())
}

/// `Ψ̃(F)` over the truncated domain. A pair with one zero and one positive
/// value gives `+∞`; two zeros give 0.
pub fn dirichlet_psi(f: &OccupationFunction, alphas: &[f64]) -> Result<f64> {
    f.check_alphas(alphas)?;
    let mut total = 0.0;
    let mut up = Vec::with_capacity(f.k);
    for (n, &x) in &f.values {
        let size: usize = n.iter().map(|&c| c as usize).sum();
        let weight = ln_reference(n, alphas).exp();
        for q in 0..f.k {
            if alphas[q] == 0.0 {
                continue;
            }
            // Pair (n, n + e_q), counted from its lower end.
            if size < f.n_max {
                up.clear();
                up.extend_from_slice(n);
                up[q] += 1;
                let y = f.get(&up);
                if y == 0.0 {
                    return Ok(f64::INFINITY);
                }
                total += alphas[q] * (y - x) * (y.ln() - x.ln()) * weight;
            }
            // Pair (n − e_q, n) whose lower end is outside the support.
            if n[q] > 0 {
                up.clear();
                up.extend_from_slice(n);
                up[q] -= 1;
                if f.get(&up) == 0.0 {
                    return Ok(f64::INFINITY);
                }
            }
        }
    }
    Ok(total)
}

/// `Ẽ log Ẽ + Ψ̃ − S̃`, nonnegative by the entropy/Dirichlet-form inequality.
pub fn lemma_ent_slack(f: &OccupationFunction, alphas: &[f64]) -> Result<f64> {
    let e = e_tilde(f, alphas)?;
    let s = s_tilde(f, alphas)?;
    let psi = dirichlet_psi(f, alphas)?;
    Ok(xlogx(e) + psi - s)
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Relative entropy of Poisson(`a`) with respect to Poisson(`b`).
pub fn poisson_kl(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        b
    } else if b == 0.0 {
        f64::INFINITY
    } else {
        b - a + a * (a / b).ln()
    }
}

/// Relative entropy of a product state with respect to the steady state:
/// `m − η + η log(η/m) + η ∫ g log(g/γ)` with `m = μ/ρ`, the velocity
/// integral by grid quadrature. Grid points with `g = 0` contribute 0.
pub fn product_state_entropy(ps: &ProductState, params: &ModelParams) -> f64 {
    let m = params.mean_n();
    let number = poisson_kl(ps.eta, m);
    if ps.eta == 0.0 || !number.is_finite() {
        return number;
    }
    // log γ(v) = −π v², so the integrand never needs γ itself.
    let kl: f64 = ps
        .grid
        .dv()
        * ps.g
            .iter()
            .zip(ps.grid.points())
            .filter(|(g, _)| **g > 0.0)
            .map(|(&g, &v)| g * (g.ln() + std::f64::consts::PI * v * v))
            .sum::<f64>();
    number + ps.eta * kl
}

/// Coarse-grained entropy of a product state whose occupations are
/// independent Poisson(`cell_means[k]`).
pub fn coarse_product_entropy(cell_means: &[f64], partition: &CellPartition, params: &ModelParams) -> f64 {
    cell_means
        .iter()
        .zip(partition.alphas(params))
        .map(|(&l, a)| poisson_kl(l, a))
        .sum()
}

/// `Ψ̃` of the same product occupation law: `Σ_q (l_q − α_q) log(l_q/α_q)`.
pub fn coarse_product_psi(cell_means: &[f64], partition: &CellPartition, params: &ModelParams) -> f64 {
    cell_means
        .iter()
        .zip(partition.alphas(params))
        .map(|(&l, a)| {
            if l == a {
                0.0
            } else if l == 0.0 || a == 0.0 {
                f64::INFINITY
            } else {
                (l - a) * (l / a).ln()
            }
        })
        .sum()
}

/// Cell occupation means `η G_k` of the product state (η, law) after the
/// thermostat flow for time `t`.
pub fn product_cell_means(
    eta: f64,
    law: &VelocityLaw,
    partition: &CellPartition,
    params: &ModelParams,
    t: f64,
) -> Vec<f64> {
    let decay = (-params.rho() * t).exp();
    partition
        .law_masses(law)
        .iter()
        .zip(partition.alphas(params))
        .map(|(g, a)| decay * eta * g + (1.0 - decay) * a)
        .collect()
}

/// Plug-in estimate of the coarse-grained entropy from occupation vectors:
/// `Σ p̂ log(p̂ / Π π_{α_k})`.
pub fn coarse_grained_entropy_from_occupations(
    occupations: &[Vec<u32>],
    partition: &CellPartition,
    params: &ModelParams,
) -> Result<f64> {
    let table = OccupationTable::new(occupations, partition, params)?;
    Ok(table.entropy(None))
}

/// Plug-in coarse-grained entropy of a sample of replica states.
pub fn coarse_grained_entropy(
    samples: &[ParticleState],
    partition: &CellPartition,
    params: &ModelParams,
) -> Result<f64> {
    let occ: Vec<Vec<u32>> = samples.iter().map(|s| partition.occupation(s)).collect();
    coarse_grained_entropy_from_occupations(&occ, partition, params)
}

/// Distinct occupation vectors of a sample, with per-replica class labels
/// so that bootstrap resamples only need to recount.
struct OccupationTable {
    labels: Vec<usize>,
    vectors: Vec<Vec<u32>>,
    ln_ref: Vec<f64>,
    alphas: Vec<f64>,
}

impl OccupationTable {
    fn new(occupations: &[Vec<u32>], partition: &CellPartition, params: &ModelParams) -> Result<Self> {
        if occupations.len() < MIN_ESTIMATOR_SAMPLES {
            return Err(KacError::InvalidArgument(format!(
                "coarse-grained entropy needs at least {MIN_ESTIMATOR_SAMPLES} samples, got {}",
                occupations.len()
            )));
        }
        let alphas = partition.alphas(params);
        let mut index: HashMap<&[u32], usize> = HashMap::new();
        let mut vectors = Vec::new();
        let mut labels = Vec::with_capacity(occupations.len());
        for n in occupations {
            if n.len() != alphas.len() {
                return Err(KacError::InvalidArgument("occupation vector length".into()));
            }
            let next = vectors.len();
            let id = *index.entry(n.as_slice()).or_insert_with(|| {
                vectors.push(n.clone());
                next
            });
            labels.push(id);
        }
        let mut ln_ref = Vec::with_capacity(vectors.len());
        for n in &vectors {
            let l = ln_reference(n, &alphas);
            if !l.is_finite() {
                return Err(KacError::InvalidArgument(
                    "sample occupies a cell with zero reference mass".into(),
                ));
            }
            ln_ref.push(l);
        }
        Ok(Self {
            labels,
            vectors,
            ln_ref,
            alphas,
        })
    }

    fn counts(&self, weights: Option<&[u32]>) -> (Vec<f64>, f64) {
        let mut counts = vec![0.0; self.vectors.len()];
        for (r, &id) in self.labels.iter().enumerate() {
            counts[id] += weights.map_or(1.0, |w| w[r] as f64);
        }
        let total = counts.iter().sum();
        (counts, total)
    }

    fn entropy(&self, weights: Option<&[u32]>) -> f64 {
        let (counts, total) = self.counts(weights);
        counts
            .iter()
            .zip(&self.ln_ref)
            .filter(|(c, _)| **c > 0.0)
            .map(|(&c, &l)| {
                let p = c / total;
                p * (p.ln() - l)
            })
            .sum()
    }

    /// Empirical occupation function `F̂ = p̂ / Π π_{α_k}`.
    fn occupation_function(&self) -> Result<OccupationFunction> {
        let (counts, total) = self.counts(None);
        let n_max = self
            .vectors
            .iter()
            .map(|n| n.iter().map(|&x| x as usize).sum::<usize>())
            .max()
            .unwrap_or(0);
        let mut f = OccupationFunction::new(self.alphas.len(), n_max);
        for ((n, c), l) in self.vectors.iter().zip(counts).zip(&self.ln_ref) {
            f.insert(n.clone(), ((c / total).ln() - l).exp())?;
        }
        Ok(f)
    }
}

/// Both sides of an inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl InequalityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            holds: lhs <= rhs + INEQUALITY_SLACK,
        }
    }

    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

fn check_positive(f: &[f64]) -> Result<()> {
    if f.is_empty() {
        return Err(KacError::EmptySamples);
    }
    if f.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(KacError::InvalidArgument("f must be finite and > 0".into()));
    }
    Ok(())
}

/// Smallest `n` with Poisson(`alpha`) mass above `n` below [`POISSON_TAIL`].
pub fn poisson_cutoff(alpha: f64) -> usize {
    let mut n = alpha.ceil() as usize;
    loop {
        // Tail above n is bounded by the next term times a geometric factor
        // once n + 2 > 2 alpha.
        let next = ln_poisson_weight(n + 1, alpha).exp();
        let ratio = alpha / (n + 2) as f64;
        if ratio < 0.5 && next / (1.0 - ratio) < POISSON_TAIL {
            return n;
        }
        n += 1;
    }
}

/// Poisson log-Sobolev inequality
/// `Σ f log f π_α ≤ (Σ f π_α) log(Σ f π_α) + α Σ (f(n+1) − f(n))(log f(n+1) − log f(n)) π_α(n)`.
///
/// `f` is given on `0..f.len()` and extended by its last value, and the sums
/// run far enough that the neglected Poisson tail is below [`POISSON_TAIL`].
pub fn check_poisson_lsi(f: &[f64], alpha: f64) -> Result<InequalityCheck> {
    check_positive(f)?;
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(invalid("alpha", format!("must be > 0, got {alpha}")));
    }
    let n_max = poisson_cutoff(alpha).max(f.len());
    let at = |n: usize| f[n.min(f.len() - 1)];
    let (mut mean, mut ent, mut dir) = (0.0, 0.0, 0.0);
    for n in 0..=n_max {
        let p = ln_poisson_weight(n, alpha).exp();
        let (a, b) = (at(n), at(n + 1));
        mean += a * p;
        ent += a * a.ln() * p;
        dir += (b - a) * (b.ln() - a.ln()) * p;
    }
    Ok(InequalityCheck::new(ent, xlogx(mean) + alpha * dir))
}

/// Two-point inequality on `{0, 1}` with `μ₁ = 1 − μ₀`:
/// `Σ f log f μ ≤ (Σ f μ) log(Σ f μ) + μ₀μ₁ (f₁ − f₀)(log f₁ − log f₀)`.
pub fn check_two_point(f0: f64, f1: f64, mu0: f64) -> Result<InequalityCheck> {
    check_positive(&[f0, f1])?;
    if !(0.0..=1.0).contains(&mu0) {
        return Err(invalid("mu0", format!("must lie in [0, 1], got {mu0}")));
    }
    let mu1 = 1.0 - mu0;
    let lhs = mu0 * f0 * f0.ln() + mu1 * f1 * f1.ln();
    let rhs = xlogx(mu0 * f0 + mu1 * f1) + mu0 * mu1 * (f1 - f0) * (f1.ln() - f0.ln());
    Ok(InequalityCheck::new(lhs, rhs))
}

/// `ln π_{α,N}(n)` for the binomial law with `N` trials of success `α/N`.
pub fn ln_binomial_weight(n: usize, alpha: f64, trials: usize) -> f64 {
    if n > trials {
        return f64::NEG_INFINITY;
    }
    let p = alpha / trials as f64;
    let (nf, tf) = (n as f64, trials as f64);
    let ln_choose = ln_gamma(tf + 1.0) - ln_gamma(nf + 1.0) - ln_gamma(tf - nf + 1.0);
    let term = |k: f64, q: f64| if k == 0.0 { 0.0 } else { k * q.ln() };
    ln_choose + term(nf, p) + term(tf - nf, 1.0 - p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialCheck {
    pub inequality: InequalityCheck,
    /// Whether `π_{α,N}(n) ≤ 4 π_α(n)` for every `α < n ≤ N`.
    pub dominated: bool,
}

/// Binomial analogue of the Poisson inequality, for `f` on `0..=N`:
/// `Σ f log f π_{α,N} ≤ (Σ f π_{α,N}) log(Σ f π_{α,N})
///   + Σ_{n=1}^N n (f(n) − f(n−1))(log f(n) − log f(n−1)) π_{α,N}(n)`.
pub fn check_binomial_lsi(f: &[f64], alpha: f64, trials: usize) -> Result<BinomialCheck> {
    check_positive(f)?;
    if trials == 0 || f.len() != trials + 1 {
        return Err(KacError::InvalidArgument(
            "f must be given on 0..=N with N >= 1".into(),
        ));
    }
    if !(alpha > 0.0 && alpha <= trials as f64) {
        return Err(invalid("alpha", format!("must lie in (0, N], got {alpha}")));
    }
    let (mut mean, mut ent, mut dir) = (0.0, 0.0, 0.0);
    let mut dominated = true;
    for n in 0..=trials {
        let lp = ln_binomial_weight(n, alpha, trials);
        let p = lp.exp();
        let a = f[n];
        mean += a * p;
        ent += a * a.ln() * p;
        if n >= 1 {
            let b = f[n - 1];
            dir += n as f64 * (a - b) * (a.ln() - b.ln()) * p;
        }
        if n as f64 > alpha && lp > 4f64.ln() + ln_poisson_weight(n, alpha) + 1e-12 {
            dominated = false;
        }
    }
    Ok(BinomialCheck {
        inequality: InequalityCheck::new(ent, xlogx(mean) + dir),
        dominated,
    })
}

/// One checkpoint of the entropy decay experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyDecayRow {
    pub t: f64,
    /// Exact entropy of the thermostat-only flow; present when `λ = 0`.
    pub s_analytic: Option<f64>,
    /// Plug-in coarse-grained entropy of the simulated replicas.
    pub s_estimate: f64,
    pub s_estimate_sd: f64,
    /// `e^{−ρt} S(0)`.
    pub bound: f64,
    /// `Ψ̃` of the empirical occupation function (`+∞` when a neighbour of
    /// an observed vector was never observed).
    pub psi: f64,
    /// `Ẽ log Ẽ + Ψ̃ − S̃` on the empirical occupation function.
    pub lemma_ent_slack: f64,
    /// Coarse-grained entropy and `Ψ̃` of the exact `λ = 0` product flow.
    pub s_coarse_analytic: Option<f64>,
    pub psi_analytic: Option<f64>,
    pub holds_analytic: Option<bool>,
    /// `s_estimate ≤ bound + 3 sd`.
    pub holds_estimate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyDecayReport {
    pub eta: f64,
    pub velocity: VelocityLaw,
    pub params: ModelParams,
    pub cells: usize,
    pub replicas: usize,
    pub seed: u64,
    pub s0: f64,
    pub rows: Vec<EntropyDecayRow>,
    /// Set when some bootstrap SD exceeds a tenth of the bound it is
    /// compared against; more replicas or fewer cells are then advised.
    pub variance_warning: bool,
}

impl EntropyDecayReport {
    pub fn all_hold(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.holds_estimate && r.holds_analytic.unwrap_or(true))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyDecaySetup {
    pub eta: f64,
    #[serde(default)]
    pub velocity: VelocityLaw,
    pub checkpoints: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    #[serde(default = "default_cells")]
    pub cells: usize,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
}

fn default_cells() -> usize {
    DEFAULT_CELLS
}

fn default_resamples() -> usize {
    200
}

/// Runs the decay experiment from the product state (η, velocity law):
/// the exact thermostat-only flow when `λ = 0`, and the plug-in
/// coarse-grained entropy of simulated replicas for any `λ`, both compared
/// with `e^{−ρt} S(0)`.
pub fn entropy_decay_experiment(
    setup: &EntropyDecaySetup,
    params: &ModelParams,
    grid: &VelocityGrid,
) -> Result<EntropyDecayReport> {
    let partition = CellPartition::equal_mass(setup.cells)?;
    let ps0 = ProductState::new(setup.eta, grid.clone(), &setup.velocity)?;
    let s0 = product_state_entropy(&ps0, params);
    let initial = InitialState::Product {
        eta: setup.eta,
        velocity: setup.velocity,
    };
    let occupations = run_replicas(
        &initial,
        params,
        &setup.checkpoints,
        setup.replicas,
        setup.seed,
        default_cap(params),
        |s, _| partition.occupation(s),
    )?;
    let exact_flow = params.lambda() == 0.0;
    let mut rows = Vec::with_capacity(setup.checkpoints.len());
    let mut variance_warning = false;
    for (c, &t) in setup.checkpoints.iter().enumerate() {
        let occ: Vec<Vec<u32>> = occupations.iter().map(|r| r[c].clone()).collect();
        let table = OccupationTable::new(&occ, &partition, params)?;
        let s_estimate = table.entropy(None);
        let sd = bootstrap_sd(
            occ.len(),
            setup.bootstrap_resamples,
            setup.seed ^ (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            |w| table.entropy(Some(w)),
        )?;
        let f_hat = table.occupation_function()?;
        let alphas = partition.alphas(params);
        let psi = dirichlet_psi(&f_hat, &alphas)?;
        let lemma = xlogx(e_tilde(&f_hat, &alphas)?) + psi - s_estimate;
        let bound = (-params.rho() * t).exp() * s0;
        variance_warning |= sd > 0.1 * bound.max(1e-3);
        let (s_analytic, s_coarse, psi_analytic, holds_analytic) = if exact_flow {
            let s = product_state_entropy(&product_state_flow(&ps0, params, t), params);
            let means = product_cell_means(setup.eta, &setup.velocity, &partition, params, t);
            (
                Some(s),
                Some(coarse_product_entropy(&means, &partition, params)),
                Some(coarse_product_psi(&means, &partition, params)),
                Some(s <= bound + INEQUALITY_SLACK),
            )
        } else {
            (None, None, None, None)
        };
        rows.push(EntropyDecayRow {
            t,
            s_analytic,
            s_estimate,
            s_estimate_sd: sd,
            bound,
            psi,
            lemma_ent_slack: lemma,
            s_coarse_analytic: s_coarse,
            psi_analytic,
            holds_analytic,
            holds_estimate: s_estimate <= bound + 3.0 * sd,
        });
    }
    Ok(EntropyDecayReport {
        eta: setup.eta,
        velocity: setup.velocity,
        params: *params,
        cells: setup.cells,
        replicas: setup.replicas,
        seed: setup.seed,
        s0,
        rows,
        variance_warning,
    })
}

//! Deterministic companions of the simulator for particle number and energy:
//! the truncated birth–death chain, factorial moments and their exact
//! exponential cascade, closed-form moment flows, and the exact evolution of
//! product states under the thermostat.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, KacError, Result};
use crate::grid::VelocityGrid;
use crate::model::{maxwellian_pdf, poisson_pmf, ModelParams, VelocityLaw};

/// Tail tolerance for evolved distributions.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-9;

/// Probability vector over `N = 0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumberDistribution {
    probs: Vec<f64>,
}

impl NumberDistribution {
    pub fn from_probs(probs: Vec<f64>) -> Self {
        assert!(!probs.is_empty(), "distribution needs at least one entry");
        Self { probs }
    }

    pub fn delta(n: usize, n_max: usize) -> Self {
        assert!(n <= n_max);
        let mut p = vec![0.0; n_max + 1];
        p[n] = 1.0;
        Self { probs: p }
    }

    pub fn poisson(mean: f64, n_max: usize) -> Self {
        Self {
            probs: poisson_pmf(mean, n_max),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn tail_deficit(&self) -> f64 {
        1.0 - self.mass()
    }

    pub fn mean(&self) -> f64 {
        factorial_moment(self, 1)
    }

    /// Pads with zeros (or truncates) to `n_max`.
    pub fn with_truncation(&self, n_max: usize) -> Self {
        let mut p = self.probs.clone();
        p.resize(n_max + 1, 0.0);
        Self { probs: p }
    }
}

/// `ceil(μ/ρ + 10 √(μ/ρ) + 20)`.
pub fn default_n_max(params: &ModelParams) -> usize {
    let m = params.mean_n();
    (m + 10.0 * m.sqrt() + 20.0).ceil() as usize
}

/// `0.1 / (μ + ρ N_max)`.
pub fn default_dt(params: &ModelParams, n_max: usize) -> f64 {
    0.1 / max_rate(params, n_max)
}

fn max_rate(params: &ModelParams, n_max: usize) -> f64 {
    params.mu() + params.rho() * n_max as f64
}

/// Right-hand side of the birth–death chain. Mass leaving through the top
/// state `N_max` is lost, so the sum of the derivative is `−μ p_{N_max}`.
pub fn birth_death_rhs(p: &NumberDistribution, params: &ModelParams) -> Vec<f64> {
    let mut d = vec![0.0; p.probs.len()];
    rhs_into(&p.probs, params, &mut d);
    d
}

fn rhs_into(p: &[f64], params: &ModelParams, d: &mut [f64]) {
    let (mu, rho) = (params.mu(), params.rho());
    let top = p.len() - 1;
    for n in 0..=top {
        let nf = n as f64;
        let mut x = -(nf * rho + mu) * p[n];
        if n > 0 {
            x += mu * p[n - 1];
        }
        if n < top {
            x += rho * (nf + 1.0) * p[n + 1];
        }
        d[n] = x;
    }
}

/// Evolves with classical RK4 and checks the tail deficit against
/// [`DEFAULT_TAIL_TOLERANCE`] relative to the initial mass.
pub fn evolve_number_dist(
    p0: &NumberDistribution,
    params: &ModelParams,
    t: f64,
    dt: f64,
) -> Result<NumberDistribution> {
    let out = evolve_number_dist_checkpoints(p0, params, &[t], dt, DEFAULT_TAIL_TOLERANCE)?;
    Ok(out.into_iter().next().unwrap())
}

/// Solutions at each of `checkpoints` (increasing, starting from `t = 0`).
/// Each interval is split into equal steps no larger than `dt`.
pub fn evolve_number_dist_checkpoints(
    p0: &NumberDistribution,
    params: &ModelParams,
    checkpoints: &[f64],
    dt: f64,
    tail_tolerance: f64,
) -> Result<Vec<NumberDistribution>> {
    let n_max = p0.n_max();
    let bound = 0.5 / max_rate(params, n_max);
    if !(dt > 0.0) || dt * max_rate(params, n_max) >= 0.5 {
        return Err(KacError::StepTooLarge { dt, bound });
    }
    if checkpoints.iter().any(|t| !(t.is_finite() && *t >= 0.0))
        || checkpoints.windows(2).any(|w| w[1] < w[0])
    {
        return Err(invalid("checkpoints", "must be finite, >= 0 and nondecreasing"));
    }
    let m0 = p0.mass();
    let len = n_max + 1;
    let mut p = p0.probs.clone();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
        vec![0.0; len],
    );
    let mut t_now = 0.0;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &tc in checkpoints {
        let span = tc - t_now;
        let steps = (span / dt).ceil() as usize;
        let h = if steps > 0 { span / steps as f64 } else { 0.0 };
        for _ in 0..steps {
            rhs_into(&p, params, &mut k1);
            for i in 0..len {
                tmp[i] = p[i] + 0.5 * h * k1[i];
            }
            rhs_into(&tmp, params, &mut k2);
            for i in 0..len {
                tmp[i] = p[i] + 0.5 * h * k2[i];
            }
            rhs_into(&tmp, params, &mut k3);
            for i in 0..len {
                tmp[i] = p[i] + h * k3[i];
            }
            rhs_into(&tmp, params, &mut k4);
            for i in 0..len {
                p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        t_now = tc;
        let deficit = m0 - p.iter().sum::<f64>();
        if deficit > tail_tolerance {
            return Err(KacError::TruncationDeficit {
                deficit,
                tolerance: tail_tolerance,
            });
        }
        out.push(NumberDistribution { probs: p.clone() });
    }
    Ok(out)
}

/// Mean number, total energy `E = Σ⟨v_i²⟩` and energy per particle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: f64,
    pub e_total: f64,
    pub e_per_particle: f64,
}

/// `N(t) = e^{−ρt}N₀ + (1−e^{−ρt})μ/ρ`, `E(t) = e^{−ρt}E₀ + (1−e^{−ρt})μ/(2πρ)`.
pub fn closed_form_moments(n0: f64, e0: f64, params: &ModelParams, t: f64) -> Result<Moments> {
    let decay = (-params.rho() * t).exp();
    let n = decay * n0 + (1.0 - decay) * params.mean_n();
    let e_total = decay * e0 + (1.0 - decay) * params.mean_n() / (2.0 * PI);
    if n <= 0.0 {
        return Err(KacError::Undefined(
            "energy per particle with zero mean particle number".into(),
        ));
    }
    Ok(Moments {
        n,
        e_total,
        e_per_particle: e_total / n,
    })
}

/// `N_r = Σ_N N!/(N−r)! p_N`.
pub fn factorial_moment(p: &NumberDistribution, r: u32) -> f64 {
    p.probs
        .iter()
        .enumerate()
        .map(|(n, &pn)| {
            let ff: f64 = (0..r).map(|k| n as f64 - k as f64).product();
            ff * pn
        })
        .sum()
}

/// Exact cascade for `dN_r/dt = −ρ r N_r + r μ N_{r−1}`.
///
/// `N_r(t) = Σ_{j≤r} c_{r,j} e^{−ρ j t}` with
/// `c_{r,j} = r μ c_{r−1,j} / (ρ (r−j))` for `j < r` and `c_{r,r}` fixed by the
/// initial value. `nr0[0]` is the total mass, normally 1.
pub fn factorial_moment_flow(nr0: &[f64], params: &ModelParams, t: f64) -> Vec<f64> {
    let coeffs = factorial_cascade(nr0, params);
    let rho = params.rho();
    coeffs
        .iter()
        .map(|c| {
            c.iter()
                .enumerate()
                .map(|(j, cj)| cj * (-rho * j as f64 * t).exp())
                .sum()
        })
        .collect()
}

/// Coefficients `c_{r,j}` of the cascade, row `r`, column `j ≤ r`.
pub fn factorial_cascade(nr0: &[f64], params: &ModelParams) -> Vec<Vec<f64>> {
    let (mu, rho) = (params.mu(), params.rho());
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(nr0.len());
    for (r, &init) in nr0.iter().enumerate() {
        let mut row = vec![0.0; r + 1];
        if r > 0 {
            let prev = &rows[r - 1];
            for j in 0..r {
                row[j] = r as f64 * mu * prev[j] / (rho * (r - j) as f64);
            }
        }
        row[r] = init - row[..r].iter().sum::<f64>();
        rows.push(row);
    }
    rows
}

/// Product state: Poisson(`eta`) particles with i.i.d. velocity density `g`
/// tabulated on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductState {
    pub eta: f64,
    pub grid: VelocityGrid,
    pub g: Vec<f64>,
}

impl ProductState {
    pub fn new(eta: f64, grid: VelocityGrid, law: &VelocityLaw) -> Result<Self> {
        law.validate()?;
        let g = grid.sample(|v| law.pdf(v));
        Self::from_values(eta, grid, g)
    }

    pub fn from_values(eta: f64, grid: VelocityGrid, g: Vec<f64>) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(invalid("eta", format!("must be finite and >= 0, got {eta}")));
        }
        if g.len() != grid.len() {
            return Err(invalid("g", "length must match the grid"));
        }
        if g.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(invalid("g", "must be finite and nonnegative"));
        }
        Ok(Self { eta, grid, g })
    }

    /// `l(v) = (ρ/μ) η g(v)`.
    pub fn l(&self, params: &ModelParams) -> Vec<f64> {
        let s = self.eta / params.mean_n();
        self.g.iter().map(|x| s * x).collect()
    }

    pub fn g_mass(&self) -> f64 {
        self.grid.integrate(&self.g)
    }

    /// Mean total energy `η ∫ v² g`.
    pub fn energy(&self) -> f64 {
        let pts = self.grid.points();
        self.eta
            * self
                .grid
                .integrate(&self.g.iter().zip(pts).map(|(g, v)| g * v * v).collect::<Vec<_>>())
    }
}

/// Exact thermostat flow of a product state:
/// `η(t) = e^{−ρt}η + (1−e^{−ρt})μ/ρ` and `η(t) g_t = e^{−ρt} η g + (1−e^{−ρt})(μ/ρ) γ`.
/// This is the flow at `λ = 0`; collisions do not preserve product states.
pub fn product_state_flow(ps0: &ProductState, params: &ModelParams, t: f64) -> ProductState {
    if t == 0.0 {
        return ps0.clone();
    }
    let decay = (-params.rho() * t).exp();
    let m = params.mean_n();
    let eta_t = decay * ps0.eta + (1.0 - decay) * m;
    let g = if eta_t > 0.0 {
        ps0.g
            .iter()
            .zip(ps0.grid.points())
            .map(|(&g, &v)| (decay * ps0.eta * g + (1.0 - decay) * m * maxwellian_pdf(v)) / eta_t)
            .collect()
    } else {
        ps0.g.clone()
    };
    ProductState {
        eta: eta_t,
        grid: ps0.grid.clone(),
        g,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::tv_distance;

    fn p(mu: f64, rho: f64) -> ModelParams {
        ModelParams::new(mu, rho, 0.0).unwrap()
    }

    #[test]
    fn poisson_is_stationary_for_the_rhs() {
        let params = p(20.0, 1.0);
        let n_max = (20.0 + 10.0 * 20f64.sqrt()).ceil() as usize;
        let d = birth_death_rhs(&NumberDistribution::poisson(20.0, n_max), &params);
        let inf = d.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        assert!(inf < 1e-10, "{inf}");
    }

    #[test]
    fn empty_state_is_absorbing_without_inflow() {
        let d = birth_death_rhs(&NumberDistribution::delta(0, 10), &p(0.0, 1.0));
        assert!(d.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rhs_sum_is_boundary_flux() {
        let params = p(3.0, 1.5);
        let probs: Vec<f64> = (0..12).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let dist = NumberDistribution::from_probs(probs.clone());
        let d = birth_death_rhs(&dist, &params);
        let s: f64 = d.iter().sum();
        assert!((s + params.mu() * probs[11]).abs() < 1e-12);
    }

    #[test]
    fn relaxation_from_empty() {
        let params = p(20.0, 1.0);
        let n_max = default_n_max(&params);
        let out = evolve_number_dist(
            &NumberDistribution::delta(0, n_max),
            &params,
            15.0,
            default_dt(&params, n_max),
        )
        .unwrap();
        let tv = tv_distance(out.probs(), NumberDistribution::poisson(20.0, n_max).probs());
        assert!(tv < 1e-6, "{tv}");
        assert!(out.tail_deficit().abs() < 1e-9);
    }

    #[test]
    fn evolved_mean_matches_closed_form() {
        let params = p(20.0, 1.0);
        let n_max = default_n_max(&params);
        let p0 = NumberDistribution::poisson(5.0, n_max);
        for t in [0.3, 1.0, 2.5] {
            let pt = evolve_number_dist(&p0, &params, t, default_dt(&params, n_max)).unwrap();
            let cf = closed_form_moments(5.0, 0.0, &params, t).unwrap();
            assert!((pt.mean() - cf.n).abs() < 1e-8);
        }
        let same = evolve_number_dist(&p0, &params, 0.0, 0.001).unwrap();
        assert_eq!(same, p0);
    }

    #[test]
    fn step_bound_enforced() {
        let params = p(20.0, 1.0);
        let r = evolve_number_dist(&NumberDistribution::delta(0, 50), &params, 1.0, 0.1);
        assert!(matches!(r, Err(KacError::StepTooLarge { .. })));
    }

    #[test]
    fn truncation_deficit_reported() {
        let params = p(20.0, 1.0);
        let r = evolve_number_dist(&NumberDistribution::delta(0, 15), &params, 5.0, 1e-3);
        assert!(matches!(r, Err(KacError::TruncationDeficit { .. })));
    }

    #[test]
    fn moments_limits_and_newton_cooling() {
        let params = p(20.0, 1.0);
        let m = closed_form_moments(5.0, 3.0, &params, 0.0).unwrap();
        assert_eq!((m.n, m.e_total), (5.0, 3.0));
        assert_eq!(m.e_per_particle, 0.6);
        let inf = closed_form_moments(5.0, 3.0, &params, 200.0).unwrap();
        assert!((inf.n - 20.0).abs() < 1e-12);
        assert!((inf.e_total - 20.0 / (2.0 * PI)).abs() < 1e-12);
        assert!((inf.e_per_particle - 1.0 / (2.0 * PI)).abs() < 1e-12);

        let h = 1e-5;
        for t in [0.1, 0.7, 2.0] {
            let e = |t| closed_form_moments(5.0, 3.0, &params, t).unwrap();
            let de = (e(t + h).e_per_particle - e(t - h).e_per_particle) / (2.0 * h);
            let m = e(t);
            let rhs = params.mu() / m.n * (1.0 / (2.0 * PI) - m.e_per_particle);
            assert!((de - rhs).abs() < 1e-6);
        }
        assert!(closed_form_moments(0.0, 0.0, &p(0.0, 1.0), 1.0).is_err());
    }

    #[test]
    fn factorial_moments_of_known_laws() {
        let d = NumberDistribution::delta(3, 10);
        assert_eq!(factorial_moment(&d, 2), 6.0);
        assert_eq!(factorial_moment(&d, 0), 1.0);
        let pois = NumberDistribution::poisson(7.0, 120);
        for r in 1..=5 {
            let got = factorial_moment(&pois, r);
            assert!((got - 7f64.powi(r as i32)).abs() < 1e-8 * 7f64.powi(r as i32));
        }
    }

    #[test]
    fn cascade_properties() {
        let params = p(20.0, 1.0);
        let m = params.mean_n();
        let stat: Vec<f64> = (0..6).map(|r| m.powi(r)).collect();
        for t in [0.0, 0.5, 3.0] {
            let out = factorial_moment_flow(&stat, &params, t);
            for (a, b) in out.iter().zip(&stat) {
                assert!((a - b).abs() < 1e-10 * b);
            }
            let first = factorial_moment_flow(&[1.0, 5.0], &params, t)[1];
            let cf = closed_form_moments(5.0, 0.0, &params, t).unwrap().n;
            assert!((first - cf).abs() < 1e-12);
        }
        let big_m = 2.0 * m;
        let init: Vec<f64> = (0..6).map(|r| big_m.powi(r)).collect();
        for k in 0..50 {
            let out = factorial_moment_flow(&init, &params, k as f64 * 0.1);
            for (r, x) in out.iter().enumerate() {
                assert!(x.abs() <= big_m.powi(r as i32) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn cascade_matches_chain() {
        let params = p(4.0, 1.0);
        let n_max = 80;
        let p0 = NumberDistribution::delta(9, n_max);
        let nr0: Vec<f64> = (0..5).map(|r| factorial_moment(&p0, r)).collect();
        let pt = evolve_number_dist(&p0, &params, 1.3, 1e-3).unwrap();
        let flow = factorial_moment_flow(&nr0, &params, 1.3);
        for r in 0..5 {
            let a = factorial_moment(&pt, r as u32);
            assert!((a - flow[r]).abs() < 1e-8 * flow[r].max(1.0), "r={r}");
        }
    }

    #[test]
    fn product_flow() {
        let params = p(20.0, 1.0);
        let grid = VelocityGrid::default_bk();
        let law = VelocityLaw::TwoBump {
            center: 0.6,
            variance_scale: 0.5,
        };
        let ps = ProductState::new(5.0, grid, &law).unwrap();
        assert!(product_state_flow(&ps, &params, 0.0) == ps);
        for t in [0.1, 1.0, 4.0] {
            let pt = product_state_flow(&ps, &params, t);
            assert!((pt.g_mass() - 1.0).abs() < 1e-10);
        }
        let late = product_state_flow(&ps, &params, 60.0);
        assert!((late.eta - 20.0).abs() < 1e-12);
        let gamma = late.grid.sample(maxwellian_pdf);
        let err = late.g.iter().zip(&gamma).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }
}

//! Shared primitives: rates, the Maxwellian reference, grand-canonical
//! number weights and the Kac collision rule.
//!
//! Temperature is fixed at `T^{-1} = 2π`, so the one-particle Maxwellian is
//! `γ(v) = exp(-π v²)` with variance `1/(2π)`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};

/// Variance of the reference Maxwellian `γ`.
pub const MAXWELLIAN_VARIANCE: f64 = 1.0 / (2.0 * PI);

/// Rates of the grand-canonical Kac master equation.
///
/// `mu` is the inflow rate, `rho` the per-particle outflow rate and `lambda`
/// the collision intensity. The per-pair collision rate is
/// `lambda_tilde = lambda * rho / mu`, which keeps the number of collisions a
/// tagged particle suffers per unit time independent of `mu / rho`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    mu: f64,
    rho: f64,
    lambda: f64,
}

impl ModelParams {
    /// `mu = 0` is accepted only together with `lambda = 0` (pure death
    /// process); otherwise the pair rate would be undefined.
    pub fn new(mu: f64, rho: f64, lambda: f64) -> Result<Self> {
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(invalid("mu", format!("must be finite and >= 0, got {mu}")));
        }
        if !(rho.is_finite() && rho > 0.0) {
            return Err(invalid("rho", format!("must be finite and > 0, got {rho}")));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(invalid(
                "lambda",
                format!("must be finite and >= 0, got {lambda}"),
            ));
        }
        if mu == 0.0 && lambda > 0.0 {
            return Err(invalid("mu", "mu = 0 requires lambda = 0"));
        }
        Ok(Self { mu, rho, lambda })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Per-pair collision rate `λρ/μ`.
    pub fn lambda_tilde(&self) -> f64 {
        if self.lambda == 0.0 {
            0.0
        } else {
            self.lambda * self.rho / self.mu
        }
    }

    /// Mean particle number `μ/ρ` of the steady state.
    pub fn mean_n(&self) -> f64 {
        self.mu / self.rho
    }

    /// Same rates with a different inflow `mu`, keeping `rho` and `lambda`.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        Self::new(mu, self.rho, self.lambda)
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.mu, self.rho, lambda)
    }
}

/// Current configuration of the open system: the velocities of the `N`
/// particles present and the time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParticleState {
    pub velocities: Vec<f64>,
    pub time: f64,
}

impl ParticleState {
    pub fn new(velocities: Vec<f64>) -> Self {
        Self {
            velocities,
            time: 0.0,
        }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.velocities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn sum_v2(&self) -> f64 {
        self.velocities.iter().map(|v| v * v).sum()
    }

    /// `Σ_i (2π v_i² − 1)`, the energy eigen-observable of the thermostat.
    pub fn energy_mode(&self) -> f64 {
        self.velocities
            .iter()
            .map(|v| 2.0 * PI * v * v - 1.0)
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.velocities.iter().all(|v| v.is_finite()) && self.time.is_finite()
    }
}

/// `γ(v) = exp(-π v²)`.
pub fn maxwellian_pdf(v: f64) -> f64 {
    (-PI * v * v).exp()
}

/// Cumulative distribution of `γ`.
pub fn maxwellian_cdf(v: f64) -> f64 {
    0.5 * (1.0 + erf(PI.sqrt() * v))
}

/// Draws a velocity from `γ`.
pub fn sample_maxwellian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * MAXWELLIAN_VARIANCE.sqrt()
}

/// Kac collision: rotation of the pair `(v, w)` by `theta` in its plane.
pub fn kac_collide(v: f64, w: f64, theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    (v * c - w * s, v * s + w * c)
}

/// `ln a_N` for the Poisson weight `a_N = m^N e^{-m} / N!`, `m = μ/ρ`.
pub fn ln_poisson_weight(n: usize, mean: f64) -> f64 {
    if mean == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let n_f = n as f64;
    n_f * mean.ln() - mean - ln_gamma(n_f + 1.0)
}

/// Grand-canonical number weight `a_N` (Poisson with mean `μ/ρ`), evaluated
/// in log space so that large `μ/ρ` does not overflow.
pub fn gc_number_weight(n: usize, params: &ModelParams) -> f64 {
    ln_poisson_weight(n, params.mean_n()).exp()
}

/// Poisson pmf `π_mean(0..=n_max)`.
pub fn poisson_pmf(mean: f64, n_max: usize) -> Vec<f64> {
    (0..=n_max).map(|n| ln_poisson_weight(n, mean).exp()).collect()
}

/// The steady state `Γ`: Poisson(`μ/ρ`) particle number with i.i.d.
/// Maxwellian velocities.
#[derive(Debug, Clone, Copy)]
pub struct GrandCanonicalRef {
    pub params: ModelParams,
}

impl GrandCanonicalRef {
    pub fn new(params: ModelParams) -> Self {
        Self { params }
    }

    pub fn number_weight(&self, n: usize) -> f64 {
        gc_number_weight(n, &self.params)
    }

    pub fn number_weights(&self, n_max: usize) -> Vec<f64> {
        poisson_pmf(self.params.mean_n(), n_max)
    }

    pub fn density(&self, v: f64) -> f64 {
        maxwellian_pdf(v)
    }
}

/// One-particle velocity law used for initial product states.
///
/// `variance_scale` multiplies the reference variance `1/(2π)`, so a scale
/// of 1 is `γ` itself and a scale of 2 is a gas at twice the reservoir
/// temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocityLaw {
    Maxwellian {
        #[serde(default = "one")]
        variance_scale: f64,
    },
    /// Equal mixture of two Gaussians centred at `±center`.
    TwoBump {
        center: f64,
        #[serde(default = "one")]
        variance_scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for VelocityLaw {
    fn default() -> Self {
        VelocityLaw::Maxwellian {
            variance_scale: 1.0,
        }
    }
}

impl VelocityLaw {
    pub fn maxwellian() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        let (scale, center) = match *self {
            VelocityLaw::Maxwellian { variance_scale } => (variance_scale, 0.0),
            VelocityLaw::TwoBump {
                center,
                variance_scale,
            } => (variance_scale, center),
        };
        if !(scale.is_finite() && scale > 0.0) {
            return Err(invalid("variance_scale", format!("must be > 0, got {scale}")));
        }
        if !center.is_finite() {
            return Err(invalid("center", "must be finite"));
        }
        Ok(())
    }

    fn sigma(scale: f64) -> f64 {
        (scale * MAXWELLIAN_VARIANCE).sqrt()
    }

    pub fn pdf(&self, v: f64) -> f64 {
        let gauss = |x: f64, s: f64| {
            let sig = Self::sigma(s);
            (-(x * x) / (2.0 * sig * sig)).exp() / (sig * (2.0 * PI).sqrt())
        };
        match *self {
            VelocityLaw::Maxwellian { variance_scale } => gauss(v, variance_scale),
            VelocityLaw::TwoBump {
                center,
                variance_scale,
            } => 0.5 * (gauss(v - center, variance_scale) + gauss(v + center, variance_scale)),
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        let phi = |x: f64, s: f64| 0.5 * (1.0 + erf(x / (Self::sigma(s) * 2f64.sqrt())));
        match *self {
            VelocityLaw::Maxwellian { variance_scale } => phi(v, variance_scale),
            VelocityLaw::TwoBump {
                center,
                variance_scale,
            } => 0.5 * (phi(v - center, variance_scale) + phi(v + center, variance_scale)),
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            VelocityLaw::Maxwellian { variance_scale } => variance_scale * MAXWELLIAN_VARIANCE,
            VelocityLaw::TwoBump {
                center,
                variance_scale,
            } => variance_scale * MAXWELLIAN_VARIANCE + center * center,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        match *self {
            VelocityLaw::Maxwellian { variance_scale } => z * Self::sigma(variance_scale),
            VelocityLaw::TwoBump {
                center,
                variance_scale,
            } => {
                let shift = if rng.random::<bool>() { center } else { -center };
                shift + z * Self::sigma(variance_scale)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussHermite;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn maxwellian_at_zero_is_one_and_even() {
        assert_eq!(maxwellian_pdf(0.0), 1.0);
        for v in [0.1, 0.7, 1.3, 2.9] {
            assert_eq!(maxwellian_pdf(v), maxwellian_pdf(-v));
        }
    }

    #[test]
    fn maxwellian_is_normalized_on_truncated_line() {
        // Composite Simpson on [-6, 6]; the integrand is entire so the rule
        // converges far below the tolerance.
        let n = 12_000;
        let h = 12.0 / n as f64;
        let mut acc = maxwellian_pdf(-6.0) + maxwellian_pdf(6.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * maxwellian_pdf(-6.0 + i as f64 * h);
        }
        assert!((acc * h / 3.0 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn maxwellian_second_moment_by_gauss_hermite() {
        let gh = GaussHermite::maxwellian(24);
        let m2 = gh.integrate(|v| v * v);
        assert!((m2 - 0.159_154_943_091_895_35).abs() < 1e-14);
        assert!((m2 - MAXWELLIAN_VARIANCE).abs() < 1e-14);
    }

    #[test]
    fn sampled_maxwellian_moments() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_maxwellian(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let sd = MAXWELLIAN_VARIANCE.sqrt();
        assert!(mean.abs() < 3.0 * sd / (n as f64).sqrt());
        // Var of the sample variance of a Gaussian is 2σ⁴/(n-1).
        let se_var = (2.0 * MAXWELLIAN_VARIANCE.powi(2) / (n as f64 - 1.0)).sqrt();
        assert!((var - MAXWELLIAN_VARIANCE).abs() < 3.0 * se_var);
        let ks = crate::stats::ks_statistic(&xs, maxwellian_cdf);
        assert!(ks < crate::stats::ks_critical_value(n, 0.05));
    }

    #[test]
    fn collision_rule_examples() {
        assert_eq!(kac_collide(1.5, -0.25, 0.0), (1.5, -0.25));
        let (a, b) = kac_collide(1.5, -0.25, std::f64::consts::FRAC_PI_2);
        assert!((a - 0.25).abs() < 1e-15 && (b - 1.5).abs() < 1e-15);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..100 {
            let theta = rng.random::<f64>() * 2.0 * PI;
            let (a, b) = kac_collide(1.0, 2.0, theta);
            assert!((a * a + b * b - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_weights() {
        let p = ModelParams::new(1.0, 1.0, 0.0).unwrap();
        assert!((gc_number_weight(0, &p) - (-1.0f64).exp()).abs() < 1e-15);

        let p = ModelParams::new(20.0, 1.0, 1.0).unwrap();
        for n in 1..=50 {
            let lhs = p.rho() * n as f64 * gc_number_weight(n, &p);
            let rhs = p.mu() * gc_number_weight(n - 1, &p);
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300), "N={n}");
        }
        let total: f64 = (0..=200).map(|n| gc_number_weight(n, &p)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(-1.0, 1.0, 0.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 0.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, -1.0).is_err());
        assert!(ModelParams::new(0.0, 1.0, 1.0).is_err());
        let p = ModelParams::new(0.0, 2.0, 0.0).unwrap();
        assert_eq!(p.lambda_tilde(), 0.0);
        let p = ModelParams::new(2.0, 1.0, 1.0).unwrap();
        assert_eq!(p.lambda_tilde() * p.mu(), p.lambda() * p.rho());
    }

    #[test]
    fn velocity_laws_are_normalized() {
        for law in [
            VelocityLaw::maxwellian(),
            VelocityLaw::Maxwellian {
                variance_scale: 2.0,
            },
            VelocityLaw::TwoBump {
                center: 0.5,
                variance_scale: 0.5,
            },
        ] {
            // Trapezoid on a wide grid is spectrally accurate for these laws.
            let h = 1e-3;
            let (mass, m2) = (-8000..=8000).fold((0.0, 0.0), |(m, s), i| {
                let v = i as f64 * h;
                let p = law.pdf(v);
                (m + p * h, s + v * v * p * h)
            });
            assert!((mass - 1.0).abs() < 1e-10, "{law:?} mass {mass}");
            assert!((m2 - law.second_moment()).abs() < 1e-10);
        }
    }
}

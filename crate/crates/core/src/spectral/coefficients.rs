//! Closed-form angular coefficients and the Gershgorin bounds for the
//! invariant subspaces of the collision generator.

use serde::{Deserialize, Serialize};

use crate::error::{KacError, Result};
use crate::model::ModelParams;

/// `τ_n = C(2n, n) / 4^n`, the circle mean of `cos^{2n} θ`.
pub fn tau(n: usize) -> f64 {
    (1..=n).map(|i| 1.0 - 0.5 / i as f64).product()
}

/// Binomial coefficient in floating point.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn check_sigma_range(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(KacError::InvalidArgument(format!(
            "sigma(n, k) needs 1 <= k <= n-1, got n = {n}, k = {k}"
        )));
    }
    Ok(())
}

/// `σ_{n,k} = √(τ_n τ_k τ_{n−k})`.
pub fn sigma(n: usize, k: usize) -> Result<f64> {
    check_sigma_range(n, k)?;
    Ok((tau(n) * tau(k) * tau(n - k)).sqrt())
}

/// Binomial form `τ_n C(n, k) / √C(2n, 2k)` of the same coefficient.
pub fn sigma_binomial(n: usize, k: usize) -> Result<f64> {
    check_sigma_range(n, k)?;
    Ok(tau(n) * binomial(n, k) / binomial(2 * n, 2 * k).sqrt())
}

/// `A_{2n} = (1 − 2τ_n)² + 2 Σ_{k=1}^{⌊n/2⌋} σ_{n,k}²`.
pub fn a_2n(n: usize) -> f64 {
    let mut s = (1.0 - 2.0 * tau(n)).powi(2);
    for k in 1..=n / 2 {
        if k < n {
            s += 2.0 * (tau(n) * tau(k) * tau(n - k));
        }
    }
    s
}

/// Lower bounds on `δ_m` for `m = 2n + 1` (odd) and `m = 2n` (even).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GershgorinBounds {
    pub delta_odd: f64,
    pub delta_even: f64,
}

/// Odd: `min{ρ + λ − λs, 2ρ − λs}`; even: `min{ρ + (1 − 2τ_n)λ − 2λs, 2ρ − 2λs}`
/// with `s = √(ρ/μ)`.
pub fn gershgorin_lower_bounds(n: usize, params: &ModelParams) -> GershgorinBounds {
    let (rho, lam) = (params.rho(), params.lambda());
    let s = (1.0 / params.mean_n()).sqrt();
    let delta_odd = (rho + lam - lam * s).min(2.0 * rho - lam * s);
    let delta_even =
        (rho + (1.0 - 2.0 * tau(n)) * lam - 2.0 * lam * s).min(2.0 * rho - 2.0 * lam * s);
    GershgorinBounds {
        delta_odd,
        delta_even,
    }
}

/// Gershgorin lower bound for `δ_m`, dispatching on the parity of `m`.
pub fn gershgorin_delta(m: usize, params: &ModelParams) -> f64 {
    let b = gershgorin_lower_bounds(m / 2, params);
    if m % 2 == 1 {
        b.delta_odd
    } else {
        b.delta_even
    }
}

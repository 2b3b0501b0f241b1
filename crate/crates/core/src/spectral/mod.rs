//! Spectral structure of the generator: Hermite basis, angular
//! coefficients, Galerkin blocks of `L̃ = G + λ̃K`, the two leading gaps and
//! ladder-operator identities.

mod coefficients;
mod fock;
mod hermite;
mod rotation;
mod sectors;

pub use coefficients::{
    a_2n, binomial, gershgorin_delta, gershgorin_lower_bounds, sigma, sigma_binomial, tau,
    GershgorinBounds,
};
pub use fock::{
    build_collision_block_v4e, build_generator, build_thermostat_matrix, collision_terms,
    labels_for, scalar_op_column, words_up_to_degree, ExcitationIndex, ScalarOp,
    TruncatedOperator, Word,
};
pub use hermite::{hermite_all, hermite_l};
pub use rotation::{rotation_element, RotationTable};
pub use sectors::{verify_commutators, CommutatorReport};

use serde::{Deserialize, Serialize};

use crate::model::ModelParams;

pub const DEFAULT_K_MAX: usize = 40;
pub const CONVERGENCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapBounds {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub k_max: usize,
    /// `|Δ₂(k_max) − Δ₂(k_max − 5)|`.
    pub drift: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralGaps {
    pub delta: f64,
    pub delta2: f64,
    pub bounds: GapBounds,
    pub truncation: Truncation,
    /// `ρ > λ/4 + 2λ√(ρ/μ)` and `μ/ρ > 256`; outside this range the bounds
    /// are not guaranteed.
    pub condition_satisfied: bool,
}

/// `ρ > λ/4 + 2λ√(ρ/μ)` and `μ/ρ > 256`.
pub fn gap_condition(params: &ModelParams) -> bool {
    let (rho, lam) = (params.rho(), params.lambda());
    rho > lam / 4.0 + 2.0 * lam * (1.0 / params.mean_n()).sqrt() && params.mean_n() > 256.0
}

/// `[−ρ − λ/4, −ρ − λ/4 + 2λ√(ρ/μ)]`.
pub fn delta2_bounds(params: &ModelParams) -> GapBounds {
    let lower = -params.rho() - params.lambda() / 4.0;
    GapBounds {
        lower,
        upper: lower + 2.0 * params.lambda() * (1.0 / params.mean_n()).sqrt(),
    }
}

/// Top eigenvalue of the even degree-4 block at truncation `k_max`.
pub fn v4e_top_eigenvalue(k_max: usize, params: &ModelParams) -> f64 {
    build_collision_block_v4e(k_max, params).eigenvalues()[0]
}

/// `Δ = −ρ` and `Δ₂`. For `λ > 0`, `Δ₂` is the top eigenvalue of the even
/// degree-4 block; at `λ = 0` the whole one-excitation space sits at `−ρ`
/// and `Δ₂ = −2ρ`.
pub fn spectral_gaps(params: &ModelParams, k_max: usize) -> SpectralGaps {
    assert!(k_max >= 7, "k_max must be at least 7 to measure drift");
    let (delta2, drift) = if params.lambda() == 0.0 {
        (-2.0 * params.rho(), 0.0)
    } else {
        let hi = v4e_top_eigenvalue(k_max, params);
        let lo = v4e_top_eigenvalue(k_max - 5, params);
        (hi, (hi - lo).abs())
    };
    SpectralGaps {
        delta: -params.rho(),
        delta2,
        bounds: delta2_bounds(params),
        truncation: Truncation {
            k_max,
            drift,
            converged: drift < CONVERGENCE_TOL,
        },
        condition_satisfied: gap_condition(params),
    }
}

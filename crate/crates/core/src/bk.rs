//! Boltzmann–Kac equation for the relative particle density,
//!
//! ```text
//! ∂_t F(v) = −ρ (F(v) − γ(v)) + λ ∫dw ∫dθ/2π [F(v')F(w') − F(v)F(w)],
//! ```
//!
//! with `(v', w')` the pair `(v, w)` rotated by `θ`, together with the
//! scaled empirical marginals of the particle system and a propagation of
//! chaos experiment.
//!
//! The θ-average of `F(v')F(w')` over the full circle depends only on the
//! radius `r = √(v² + w²)`, so the gain term is evaluated as
//! `∫ dw A(√(v² + w²))` with `A(r) = ⟨F(r cos φ) F(r sin φ)⟩_φ`. The
//! direction of rotation therefore plays no role. `A` is tabulated on a
//! radial grid, and both interpolations (grid to rotated points, radial grid
//! to `√(v² + w²)`) are fixed linear maps computed once.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, KacError, Result};
use crate::grid::VelocityGrid;
use crate::model::{maxwellian_pdf, ModelParams, ParticleState, VelocityLaw};
use crate::quadrature::trapezoid_angles;
use crate::simulator::{default_cap, run_replicas, InitialState};
use crate::stats::bootstrap_sd;

/// Default number of angles in the circle average.
pub const DEFAULT_ANGLES: usize = 128;
/// Default RK4 step.
pub const DEFAULT_DT: f64 = 1e-3;
/// Negative values below this after a step are an instability, not noise.
pub const NEGATIVITY_TOLERANCE: f64 = 1e-8;

/// Density `F` tabulated on a symmetric velocity grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub grid: VelocityGrid,
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn new(grid: VelocityGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid("values", "length must match the grid"));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(invalid("values", "must be finite"));
        }
        Ok(Self { grid, values })
    }

    pub fn maxwellian(grid: VelocityGrid) -> Self {
        let values = grid.sample(maxwellian_pdf);
        Self { grid, values }
    }

    /// `scale · law.pdf` on the grid.
    pub fn from_law(grid: VelocityGrid, law: &VelocityLaw, scale: f64) -> Self {
        let values = grid.sample(|v| scale * law.pdf(v));
        Self { grid, values }
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    /// `∫ v² F`.
    pub fn second_moment(&self) -> f64 {
        self.grid.dv()
            * self
                .values
                .iter()
                .zip(self.grid.points())
                .map(|(f, v)| f * v * v)
                .sum::<f64>()
    }

    pub fn l1_distance(&self, other: &DensityField) -> f64 {
        self.grid.dv()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
    }

    /// Boundary values relative to the peak.
    pub fn boundary_ratio(&self) -> f64 {
        let peak = self.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let edge = self.values[0].abs().max(self.values[self.values.len() - 1].abs());
        if peak == 0.0 {
            0.0
        } else {
            edge / peak
        }
    }

    /// Averages over the cells of a coarser grid whose spacing is an odd
    /// multiple of this one, so that every coarse cell is a union of fine
    /// cells.
    pub fn bin_average(&self, coarse: &VelocityGrid) -> Result<Vec<f64>> {
        let ratio = coarse.dv() / self.grid.dv();
        let q = ratio.round() as usize;
        if (ratio - q as f64).abs() > 1e-9 || q.is_multiple_of(2) {
            return Err(KacError::InvalidArgument(
                "coarse spacing must be an odd multiple of the fine spacing".into(),
            ));
        }
        if coarse.v_max() + 0.5 * coarse.dv() > self.grid.v_max() + 0.5 * self.grid.dv() + 1e-9 {
            return Err(KacError::InvalidArgument("coarse grid exceeds the fine grid".into()));
        }
        let centre = self.grid.len() / 2;
        let half = (q / 2) as isize;
        Ok(coarse
            .points()
            .iter()
            .map(|&v| {
                let c = centre as isize + (v / self.grid.dv()).round() as isize;
                (c - half..=c + half)
                    .map(|k| self.values[k as usize])
                    .sum::<f64>()
                    / q as f64
            })
            .collect())
    }
}

/// Interpolation used for the rotated arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Linear,
    #[default]
    Lagrange6,
}

/// Sparse interpolation row: `Σ w_k values[idx_k]`.
type Row = Vec<(u32, f64)>;

/// Weights at fractional index `x` on a uniform grid of `n` nodes. Nodes
/// past the right end are dropped; on the left they are dropped or
/// reflected through node 0 when `even` is set.
fn interpolation_row(x: f64, n: usize, kind: Interpolation, even: bool) -> Row {
    let j = x.floor();
    let s = x - j;
    let j = j as isize;
    let (offsets, weights): (&[isize], Vec<f64>) = match kind {
        Interpolation::Linear => (&[0, 1], vec![1.0 - s, s]),
        Interpolation::Lagrange6 => {
            const OFF: [isize; 6] = [-2, -1, 0, 1, 2, 3];
            let w = OFF
                .iter()
                .map(|&k| {
                    OFF.iter()
                        .filter(|&&l| l != k)
                        .map(|&l| (s - l as f64) / (k - l) as f64)
                        .product()
                })
                .collect();
            (&OFF, w)
        }
    };
    let mut row: Row = Vec::with_capacity(offsets.len());
    for (&o, w) in offsets.iter().zip(weights) {
        let mut idx = j + o;
        if idx < 0 {
            if !even {
                continue;
            }
            idx = -idx;
        }
        if (idx as usize) < n {
            match row.iter_mut().find(|(i, _)| *i as isize == idx) {
                Some(e) => e.1 += w,
                None => row.push((idx as u32, w)),
            }
        }
    }
    row
}

fn apply(row: &Row, values: &[f64]) -> f64 {
    row.iter().map(|&(i, w)| w * values[i as usize]).sum()
}

/// Precomputed collision operator on a grid.
#[derive(Debug, Clone)]
pub struct BkOperator {
    grid: VelocityGrid,
    gamma: Vec<f64>,
    angles: usize,
    /// For every radius and angle, rows evaluating `F(r cos φ)` and `F(r sin φ)`.
    circle_rows: Vec<Vec<(Row, Row)>>,
    /// `gain_i = Σ_m gain_map[i][m] A_m`.
    gain_map: Vec<Vec<f64>>,
}

impl BkOperator {
    pub fn new(grid: VelocityGrid, angles: usize, kind: Interpolation) -> Result<Self> {
        if angles < 4 {
            return Err(invalid("angles", "need at least 4"));
        }
        let dv = grid.dv();
        let v_max = grid.v_max();
        let n = grid.len();
        let to_index = |v: f64| (v + v_max) / dv;
        // Radial nodes r_m = m Δv up to the grid corner plus a stencil.
        let n_r = (std::f64::consts::SQRT_2 * v_max / dv).ceil() as usize + 4;
        let phis = trapezoid_angles(angles);
        let circle_rows = (0..n_r)
            .map(|m| {
                let r = m as f64 * dv;
                phis.iter()
                    .map(|&phi| {
                        let (s, c) = phi.sin_cos();
                        let row = |x: f64| {
                            if x.abs() > v_max + 3.0 * dv {
                                Vec::new()
                            } else {
                                interpolation_row(to_index(x), n, kind, false)
                            }
                        };
                        (row(r * c), row(r * s))
                    })
                    .collect()
            })
            .collect();
        let pts = grid.points();
        let gain_map = pts
            .iter()
            .map(|&v| {
                let mut k = vec![0.0; n_r];
                for &w in pts {
                    let r = (v * v + w * w).sqrt();
                    for (m, wt) in interpolation_row(r / dv, n_r, kind, true) {
                        k[m as usize] += dv * wt;
                    }
                }
                k
            })
            .collect();
        let gamma = grid.sample(maxwellian_pdf);
        Ok(Self {
            grid,
            gamma,
            angles,
            circle_rows,
            gain_map,
        })
    }

    pub fn with_defaults() -> Self {
        Self::new(VelocityGrid::default_bk(), DEFAULT_ANGLES, Interpolation::default())
            .expect("valid default operator")
    }

    pub fn grid(&self) -> &VelocityGrid {
        &self.grid
    }

    /// Circle averages `A(r_m)`.
    fn circle_average(&self, f: &[f64]) -> Vec<f64> {
        self.circle_rows
            .par_iter()
            .map(|rows| {
                rows.iter().map(|(a, b)| apply(a, f) * apply(b, f)).sum::<f64>()
                    / self.angles as f64
            })
            .collect()
    }

    /// Collision gain `∫dw ∫dθ/2π F(v')F(w')` at every grid point.
    pub fn gain(&self, f: &[f64]) -> Vec<f64> {
        let a = self.circle_average(f);
        self.gain_map
            .par_iter()
            .map(|k| k.iter().zip(&a).map(|(x, y)| x * y).sum())
            .collect()
    }

    /// Collision term `gain − m₀ F` (without the factor λ).
    pub fn collision(&self, f: &[f64]) -> Vec<f64> {
        let m0 = self.grid.integrate(f);
        self.gain(f)
            .into_iter()
            .zip(f)
            .map(|(g, x)| g - m0 * x)
            .collect()
    }

    /// Full right-hand side.
    pub fn rhs(&self, f: &[f64], params: &ModelParams) -> Vec<f64> {
        let rho = params.rho();
        let thermostat = f.iter().zip(&self.gamma).map(|(x, g)| -rho * (x - g));
        if params.lambda() == 0.0 {
            return thermostat.collect();
        }
        let lambda = params.lambda();
        thermostat
            .zip(self.collision(f))
            .map(|(t, c)| t + lambda * c)
            .collect()
    }
}

/// Right-hand side of the equation at `field`, with a default operator on
/// the field's grid. Use [`BkOperator`] directly when evaluating repeatedly.
pub fn bk_rhs(field: &DensityField, params: &ModelParams) -> Result<DensityField> {
    let op = BkOperator::new(field.grid.clone(), DEFAULT_ANGLES, Interpolation::default())?;
    DensityField::new(field.grid.clone(), op.rhs(&field.values, params))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BkTrajectory {
    pub times: Vec<f64>,
    pub fields: Vec<DensityField>,
    /// Total mass removed by clipping small negative values.
    pub clipped_mass: f64,
}

impl BkTrajectory {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,v,F")?;
        for (t, f) in self.times.iter().zip(&self.fields) {
            for (v, x) in f.grid.points().iter().zip(&f.values) {
                writeln!(w, "{t},{v},{x:e}")?;
            }
        }
        Ok(())
    }
}

/// Classical RK4 from `f0`, reporting the field at each checkpoint. Steps
/// are shortened so that checkpoints are hit exactly.
pub fn bk_solve(
    op: &BkOperator,
    f0: &DensityField,
    params: &ModelParams,
    checkpoints: &[f64],
    dt: f64,
) -> Result<BkTrajectory> {
    if f0.grid != op.grid {
        return Err(KacError::InvalidArgument("field and operator grids differ".into()));
    }
    if checkpoints.iter().any(|t| !(t.is_finite() && *t >= 0.0))
        || checkpoints.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(invalid("checkpoints", "must be finite, >= 0 and strictly increasing"));
    }
    let bound = 0.1 / (params.rho() + params.lambda() * f0.mass().max(1.0));
    if !(dt > 0.0 && dt <= bound) {
        return Err(KacError::StepTooLarge { dt, bound });
    }
    let mut f = f0.values.clone();
    let mut t = 0.0;
    let mut clipped = 0.0;
    let mut fields = Vec::with_capacity(checkpoints.len());
    let axpy = |a: &[f64], h: f64, b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + h * y).collect()
    };
    for &tc in checkpoints {
        let span = tc - t;
        let steps = (span / dt).ceil() as usize;
        let h = if steps > 0 { span / steps as f64 } else { 0.0 };
        for _ in 0..steps {
            let k1 = op.rhs(&f, params);
            let k2 = op.rhs(&axpy(&f, 0.5 * h, &k1), params);
            let k3 = op.rhs(&axpy(&f, 0.5 * h, &k2), params);
            let k4 = op.rhs(&axpy(&f, h, &k3), params);
            for i in 0..f.len() {
                f[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            for x in f.iter_mut() {
                if *x < 0.0 {
                    if *x < -NEGATIVITY_TOLERANCE {
                        return Err(KacError::Instability(format!(
                            "density reached {x:e} before clipping"
                        )));
                    }
                    clipped -= *x * op.grid.dv();
                    *x = 0.0;
                }
            }
        }
        t = tc;
        fields.push(DensityField {
            grid: op.grid.clone(),
            values: f.clone(),
        });
    }
    Ok(BkTrajectory {
        times: checkpoints.to_vec(),
        fields,
        clipped_mass: clipped,
    })
}

/// Exact solution at `λ = 0`: `e^{−ρt} F0 + (1 − e^{−ρt}) γ`.
pub fn thermostat_solution(f0: &DensityField, params: &ModelParams, t: f64) -> DensityField {
    let d = (-params.rho() * t).exp();
    let values = f0
        .values
        .iter()
        .zip(f0.grid.points())
        .map(|(x, &v)| d * x + (1.0 - d) * maxwellian_pdf(v))
        .collect();
    DensityField {
        grid: f0.grid.clone(),
        values,
    }
}

/// Per-cell particle counts of one state; particles outside the grid are
/// ignored.
pub fn cell_counts(state: &ParticleState, grid: &VelocityGrid) -> Vec<u32> {
    let mut c = vec![0u32; grid.len()];
    for &v in &state.velocities {
        if let Some(b) = grid.bin_of(v) {
            c[b] += 1;
        }
    }
    c
}

/// Ordered distinct pairs per cell pair, from cell counts: `c_a c_b − δ_ab c_a`.
fn add_pair_counts(counts: &[u32], out: &mut [f64]) {
    let n = counts.len();
    for (a, &ca) in counts.iter().enumerate() {
        if ca == 0 {
            continue;
        }
        for (b, &cb) in counts.iter().enumerate() {
            let pairs = if a == b { ca as f64 * (ca as f64 - 1.0) } else { ca as f64 * cb as f64 };
            out[a * n + b] += pairs;
        }
    }
}

/// Scaled empirical marginal of order 1 or 2 on `grid`: the density of
/// particles (k = 1) or ordered distinct pairs (k = 2) per replica, times
/// `(ρ/μ)^k`. Order 2 is returned row-major.
pub fn empirical_marginal(
    samples: &[ParticleState],
    order: usize,
    params: &ModelParams,
    grid: &VelocityGrid,
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(KacError::EmptySamples);
    }
    let counts: Vec<Vec<u32>> = samples.iter().map(|s| cell_counts(s, grid)).collect();
    marginal_from_counts(&counts, order, params, grid)
}

fn marginal_from_counts(
    counts: &[Vec<u32>],
    order: usize,
    params: &ModelParams,
    grid: &VelocityGrid,
) -> Result<Vec<f64>> {
    let scale = params.rho() / params.mu();
    let r = counts.len() as f64;
    let n = grid.len();
    match order {
        1 => {
            let mut out = vec![0.0; n];
            for c in counts {
                for (o, &x) in out.iter_mut().zip(c) {
                    *o += x as f64;
                }
            }
            let w = scale / (r * grid.dv());
            Ok(out.into_iter().map(|x| x * w).collect())
        }
        2 => {
            let mut out = vec![0.0; n * n];
            for c in counts {
                add_pair_counts(c, &mut out);
            }
            let w = scale * scale / (r * grid.dv() * grid.dv());
            Ok(out.into_iter().map(|x| x * w).collect())
        }
        _ => Err(invalid("order", "must be 1 or 2")),
    }
}

/// Propagation of chaos experiment: for each reservoir size `μ_n`, start from
/// Poisson(`eta_scale μ_n/ρ`) particles with velocity law `g0`, run to `t`,
/// and compare the scaled one-particle marginal with the solution of the
/// kinetic equation started from `eta_scale g0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChaosSetup {
    pub g0: VelocityLaw,
    pub eta_scale: f64,
    pub mu_values: Vec<f64>,
    pub rho: f64,
    pub lambda: f64,
    pub t: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Histogram grid for the empirical marginals.
    #[serde(default = "default_bin_v_max")]
    pub bin_v_max: f64,
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
    /// Replicas are grouped into this many batches for the bootstrap.
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default = "default_chaos_resamples")]
    pub bootstrap_resamples: usize,
}

fn default_bin_v_max() -> f64 {
    2.0
}
fn default_bin_width() -> f64 {
    0.1
}
fn default_batches() -> usize {
    50
}
fn default_chaos_resamples() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosReport {
    pub mu_values: Vec<f64>,
    pub t: f64,
    pub replicas: usize,
    pub seed: u64,
    /// `‖F̂⁽¹⁾ − F_PDE‖₁` on the histogram cells, with bootstrap SD.
    pub marginal_defect: Vec<f64>,
    pub marginal_defect_sd: Vec<f64>,
    /// `‖F̂⁽²⁾ − F̂⁽¹⁾ ⊗ F̂⁽¹⁾‖₁`, with bootstrap SD.
    pub factorization_defect: Vec<f64>,
    pub factorization_defect_sd: Vec<f64>,
}

impl ChaosReport {
    /// Whether `values` decreases along `μ_n` by more than twice the
    /// combined SD at every step.
    pub fn strictly_decreasing(values: &[f64], sd: &[f64]) -> bool {
        (1..values.len()).all(|i| {
            values[i - 1] - values[i] > 2.0 * (sd[i - 1].powi(2) + sd[i].powi(2)).sqrt()
        })
    }

    pub fn marginal_decreasing(&self) -> bool {
        Self::strictly_decreasing(&self.marginal_defect, &self.marginal_defect_sd)
    }

    pub fn factorization_decreasing(&self) -> bool {
        Self::strictly_decreasing(&self.factorization_defect, &self.factorization_defect_sd)
    }
}

pub fn chaos_experiment(setup: &ChaosSetup, op: &BkOperator, dt: f64) -> Result<ChaosReport> {
    if setup.mu_values.is_empty() || setup.mu_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("mu_values", "must be nonempty and strictly increasing"));
    }
    if !(setup.eta_scale.is_finite() && setup.eta_scale > 0.0) {
        return Err(invalid("eta_scale", "must be > 0"));
    }
    if setup.batches < 2 || setup.replicas < setup.batches {
        return Err(invalid("batches", "need 2 <= batches <= replicas"));
    }
    setup.g0.validate()?;
    let bins = VelocityGrid::new(setup.bin_v_max, setup.bin_width)?;
    let base = ModelParams::new(1.0, setup.rho, setup.lambda)?;
    let f0 = DensityField::from_law(op.grid().clone(), &setup.g0, setup.eta_scale);
    let pde = bk_solve(op, &f0, &base, &[setup.t], dt)?;
    let pde_bins = pde.fields[0].bin_average(&bins)?;
    let nb = bins.len();
    let dv = bins.dv();

    let mut report = ChaosReport {
        mu_values: setup.mu_values.clone(),
        t: setup.t,
        replicas: setup.replicas,
        seed: setup.seed,
        marginal_defect: Vec::new(),
        marginal_defect_sd: Vec::new(),
        factorization_defect: Vec::new(),
        factorization_defect_sd: Vec::new(),
    };
    for (i, &mu) in setup.mu_values.iter().enumerate() {
        let params = ModelParams::new(mu, setup.rho, setup.lambda)?;
        let initial = InitialState::Product {
            eta: setup.eta_scale * params.mean_n(),
            velocity: setup.g0,
        };
        let counts = run_replicas(
            &initial,
            &params,
            &[setup.t],
            setup.replicas,
            setup.seed.wrapping_add(i as u64),
            default_cap(&params),
            |s, _| cell_counts(s, &bins),
        )?;
        // Per-batch sums of single and pair counts.
        let b = setup.batches;
        let mut singles = vec![vec![0.0; nb]; b];
        let mut pairs = vec![vec![0.0; nb * nb]; b];
        let mut sizes = vec![0usize; b];
        for (r, rec) in counts.iter().enumerate() {
            let k = r % b;
            sizes[k] += 1;
            for (s, &x) in singles[k].iter_mut().zip(&rec[0]) {
                *s += x as f64;
            }
            add_pair_counts(&rec[0], &mut pairs[k]);
        }
        let scale = params.rho() / params.mu();
        let defects = |w: &[u32]| -> (f64, f64) {
            let mut f1 = vec![0.0; nb];
            let mut f2 = vec![0.0; nb * nb];
            let mut total = 0.0;
            for k in 0..b {
                let wk = w[k] as f64;
                if wk == 0.0 {
                    continue;
                }
                total += wk * sizes[k] as f64;
                for (o, x) in f1.iter_mut().zip(&singles[k]) {
                    *o += wk * x;
                }
                for (o, x) in f2.iter_mut().zip(&pairs[k]) {
                    *o += wk * x;
                }
            }
            let w1 = scale / (total * dv);
            let w2 = scale * scale / (total * dv * dv);
            f1.iter_mut().for_each(|x| *x *= w1);
            let d1 = dv * f1.iter().zip(&pde_bins).map(|(a, p)| (a - p).abs()).sum::<f64>();
            let mut d2 = 0.0;
            for a in 0..nb {
                for c in 0..nb {
                    d2 += (f2[a * nb + c] * w2 - f1[a] * f1[c]).abs();
                }
            }
            (d1, d2 * dv * dv)
        };
        let ones = vec![1u32; b];
        let (d1, d2) = defects(&ones);
        let boot_seed = setup.seed ^ 0xB007_5EED ^ i as u64;
        let sd1 = bootstrap_sd(b, setup.bootstrap_resamples, boot_seed, |w| defects(w).0)?;
        let sd2 = bootstrap_sd(b, setup.bootstrap_resamples, boot_seed, |w| defects(w).1)?;
        report.marginal_defect.push(d1);
        report.marginal_defect_sd.push(sd1);
        report.factorization_defect.push(d2);
        report.factorization_defect_sd.push(sd2);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MAXWELLIAN_VARIANCE;
    use crate::simulator::replica_rng;

    fn hot() -> VelocityLaw {
        VelocityLaw::TwoBump {
            center: 0.5,
            variance_scale: 0.6,
        }
    }

    fn op() -> BkOperator {
        BkOperator::with_defaults()
    }

    #[test]
    fn lagrange_rows_reproduce_quintics() {
        let row = interpolation_row(10.37, 40, Interpolation::Lagrange6, false);
        let vals: Vec<f64> = (0..40).map(|i| (i as f64).powi(5) - 3.0 * i as f64).collect();
        let x: f64 = 10.37;
        assert!((apply(&row, &vals) - (x.powi(5) - 3.0 * x)).abs() < 1e-6 * x.powi(5));
        // Reflection through 0 for even data.
        let row = interpolation_row(0.4, 40, Interpolation::Lagrange6, true);
        let vals: Vec<f64> = (0..40).map(|i| (i * i) as f64).collect();
        assert!((apply(&row, &vals) - 0.16).abs() < 1e-12);
    }

    #[test]
    fn maxwellian_is_stationary() {
        let o = op();
        let f = DensityField::maxwellian(o.grid().clone());
        let p = ModelParams::new(3.0, 1.0, 1.0).unwrap();
        let r = o.rhs(&f.values, &p);
        let m = r.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        assert!(m < 1e-6, "{m}");
    }

    #[test]
    fn thermostat_only_rhs_is_exact() {
        let o = op();
        let f = DensityField::from_law(o.grid().clone(), &hot(), 1.3);
        let p = ModelParams::new(3.0, 2.0, 0.0).unwrap();
        let r = o.rhs(&f.values, &p);
        for ((x, v), d) in f.values.iter().zip(f.grid.points()).zip(&r) {
            assert_eq!(*d, -2.0 * (x - maxwellian_pdf(*v)));
        }
    }

    #[test]
    fn collision_conserves_mass_and_energy() {
        let o = op();
        for law in [hot(), VelocityLaw::Maxwellian { variance_scale: 2.0 }] {
            let f = DensityField::from_law(o.grid().clone(), &law, 1.2);
            let q = o.collision(&f.values);
            let mass = o.grid().integrate(&q);
            let energy = o.grid().integrate(
                &q.iter().zip(o.grid().points()).map(|(x, v)| x * v * v).collect::<Vec<_>>(),
            );
            assert!(mass.abs() < 1e-6, "{mass}");
            assert!(energy.abs() < 1e-6, "{energy}");
        }
    }

    #[test]
    fn mass_balance_of_full_rhs() {
        let o = op();
        let f = DensityField::from_law(o.grid().clone(), &hot(), 0.7);
        let p = ModelParams::new(3.0, 1.5, 1.0).unwrap();
        let r = DensityField::new(o.grid().clone(), o.rhs(&f.values, &p)).unwrap();
        assert!((r.mass() + 1.5 * (f.mass() - 1.0)).abs() < 1e-6);
    }

    #[test]
    fn bk_rhs_free_function_matches_operator() {
        let f = DensityField::from_law(VelocityGrid::new(3.0, 0.05).unwrap(), &hot(), 1.0);
        let p = ModelParams::new(1.0, 1.0, 1.0).unwrap();
        let r = bk_rhs(&f, &p).unwrap();
        assert!(r.mass().abs() < 1e-6 + (f.mass() - 1.0).abs());
    }

    #[test]
    fn thermostat_closed_form() {
        let o = op();
        let f0 = DensityField::from_law(o.grid().clone(), &hot(), 1.4);
        let p = ModelParams::new(1.0, 1.0, 0.0).unwrap();
        let tr = bk_solve(&o, &f0, &p, &[0.5, 1.0], DEFAULT_DT).unwrap();
        for (t, f) in tr.times.iter().zip(&tr.fields) {
            let exact = thermostat_solution(&f0, &p, *t);
            assert!(f.l1_distance(&exact) < 1e-10);
        }
    }

    #[test]
    fn energy_relaxes_with_thermostat_rate() {
        let o = op();
        let f0 = DensityField::from_law(o.grid().clone(), &hot(), 1.0);
        let p = ModelParams::new(1.0, 1.0, 1.0).unwrap();
        let ts = [0.25, 0.5];
        let tr = bk_solve(&o, &f0, &p, &ts, DEFAULT_DT).unwrap();
        let m0 = f0.second_moment();
        for (t, f) in ts.iter().zip(&tr.fields) {
            let d = (-t).exp();
            let expected = d * m0 + (1.0 - d) * MAXWELLIAN_VARIANCE;
            assert!((f.second_moment() - expected).abs() < 1e-4);
        }
        assert!(tr.clipped_mass < 1e-8);
    }

    #[test]
    fn maxwellian_trajectory_is_constant() {
        let o = op();
        let f0 = DensityField::maxwellian(o.grid().clone());
        let p = ModelParams::new(1.0, 1.0, 1.0).unwrap();
        let tr = bk_solve(&o, &f0, &p, &[0.2], DEFAULT_DT).unwrap();
        assert!(tr.fields[0].l1_distance(&f0) < 1e-6);
    }

    #[test]
    fn symmetric_data_stays_symmetric() {
        let o = op();
        let f0 = DensityField::from_law(o.grid().clone(), &hot(), 1.0);
        let p = ModelParams::new(1.0, 1.0, 1.0).unwrap();
        let tr = bk_solve(&o, &f0, &p, &[0.1], DEFAULT_DT).unwrap();
        let v = &tr.fields[0].values;
        for j in 0..v.len() {
            assert_eq!(v[j], v[v.len() - 1 - j]);
        }
    }

    #[test]
    fn step_bound_enforced() {
        let o = op();
        let f0 = DensityField::maxwellian(o.grid().clone());
        let p = ModelParams::new(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            bk_solve(&o, &f0, &p, &[1.0], 0.2),
            Err(KacError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn bin_average_of_linear_is_centre_value() {
        let g = VelocityGrid::default_bk();
        let f = DensityField::new(g.clone(), g.points().iter().map(|v| 2.0 + v).collect()).unwrap();
        let coarse = VelocityGrid::new(2.0, 0.1).unwrap();
        let b = f.bin_average(&coarse).unwrap();
        for (x, v) in b.iter().zip(coarse.points()) {
            assert!((x - (2.0 + v)).abs() < 1e-12);
        }
        assert!(f.bin_average(&VelocityGrid::new(2.0, 0.08).unwrap()).is_err());
    }

    #[test]
    fn marginals_of_product_state() {
        let p = ModelParams::new(50.0, 1.0, 0.0).unwrap();
        let init = InitialState::Product {
            eta: 25.0,
            velocity: VelocityLaw::maxwellian(),
        };
        let samples: Vec<ParticleState> = (0..4000)
            .map(|r| init.sample(&p, &mut replica_rng(4, r)))
            .collect();
        let grid = VelocityGrid::new(2.0, 0.2).unwrap();
        let f1 = empirical_marginal(&samples, 1, &p, &grid).unwrap();
        let mass: f64 = grid.integrate(&f1);
        let mean_n = samples.iter().map(|s| s.len()).sum::<usize>() as f64 / 4000.0;
        assert!((mass - mean_n / 50.0).abs() < 1e-12);
        assert!((mass - 0.5).abs() < 0.01);
        let f2 = empirical_marginal(&samples, 2, &p, &grid).unwrap();
        let n = grid.len();
        let defect: f64 = (0..n * n)
            .map(|k| (f2[k] - f1[k / n] * f1[k % n]).abs())
            .sum::<f64>()
            * grid.dv()
            * grid.dv();
        assert!(defect < 0.02, "{defect}");
        assert!(empirical_marginal(&samples, 3, &p, &grid).is_err());
        assert!(empirical_marginal(&[], 1, &p, &grid).is_err());
    }
}

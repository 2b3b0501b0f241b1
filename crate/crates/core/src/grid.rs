//! Symmetric uniform velocity grid shared by product states and the
//! Boltzmann–Kac solver.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityGrid {
    v_max: f64,
    dv: f64,
    points: Vec<f64>,
}

impl VelocityGrid {
    /// Grid `-v_max, -v_max + dv, …, v_max`. `v_max / dv` must be an
    /// integer up to rounding.
    pub fn new(v_max: f64, dv: f64) -> Result<Self> {
        if !(v_max.is_finite() && v_max > 0.0) {
            return Err(invalid("v_max", format!("must be > 0, got {v_max}")));
        }
        if !(dv.is_finite() && dv > 0.0 && dv < v_max) {
            return Err(invalid("dv", format!("must be in (0, v_max), got {dv}")));
        }
        let cells = 2.0 * v_max / dv;
        let n = cells.round();
        if (cells - n).abs() > 1e-9 * cells {
            return Err(invalid("dv", "2 v_max / dv must be an integer"));
        }
        let n = n as usize;
        if n % 2 == 1 {
            return Err(invalid("dv", "v_max / dv must be an integer so that 0 is a node"));
        }
        let half = n / 2;
        // Build from the centre outward so that v_j = -v_{n-j} bit for bit.
        let mut points = vec![0.0; n + 1];
        for k in 0..=half {
            let v = k as f64 * dv;
            points[half + k] = v;
            points[n - half - k] = -v;
        }
        Ok(Self { v_max, dv, points })
    }

    /// `V_max = 4`, `Δv = 0.02`.
    pub fn default_bk() -> Self {
        Self::new(4.0, 0.02).expect("valid default grid")
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn dv(&self) -> f64 {
        self.dv
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Riemann sum `Δv Σ f_j`. For integrands that vanish at the ends this
    /// coincides with the trapezoid rule.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.dv * values.iter().sum::<f64>()
    }

    pub fn integrate_fn(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.dv * self.points.iter().map(|&v| f(v)).sum::<f64>()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.points.iter().map(|&v| f(v)).collect()
    }

    /// Index of the cell `[v_j − Δv/2, v_j + Δv/2)` containing `v`, if any.
    pub fn bin_of(&self, v: f64) -> Option<usize> {
        let x = ((v + self.v_max) / self.dv + 0.5).floor();
        if x >= 0.0 && (x as usize) < self.points.len() {
            Some(x as usize)
        } else {
            None
        }
    }
}

//! Two-body matrix elements of the averaged rotation `R_{12}` in the
//! Hermite product basis:
//!
//! `T[a,b](c,d) = ⟨L_c ⊗ L_d, R_{12}(L_a ⊗ L_b)⟩`,
//! `R_{12} h(v, w) = ∫ h(v cosθ − w sinθ, v sinθ + w cosθ) dθ/2π`.
//!
//! Rotations preserve the total Hermite degree, so only `c + d = a + b`
//! entries are stored. They are computed by Gauss–Hermite quadrature in each
//! velocity and the periodic trapezoid rule in `θ`.

use std::collections::HashMap;

use crate::quadrature::{trapezoid_angles, GaussHermite};
use crate::spectral::hermite::hermite_fill;

pub const DEFAULT_GH_NODES: usize = 24;
pub const DEFAULT_ANGLE_NODES: usize = 64;

#[derive(Debug, Clone)]
pub struct RotationTable {
    max_degree: usize,
    entries: HashMap<(usize, usize, usize, usize), f64>,
}

impl RotationTable {
    /// Table for all `a + b ≤ max_degree`.
    ///
    /// Panics if the rules are not exact for the integrands involved
    /// (polynomial degree `2·max_degree` per variable, trigonometric degree
    /// `max_degree`).
    pub fn new(max_degree: usize, gh_nodes: usize, angle_nodes: usize) -> Self {
        let gh = GaussHermite::maxwellian(gh_nodes);
        assert!(
            gh.exact_degree() >= 2 * max_degree,
            "Gauss-Hermite rule with {gh_nodes} nodes is not exact for degree {}",
            2 * max_degree
        );
        assert!(
            angle_nodes > max_degree,
            "angular rule with {angle_nodes} nodes is not exact for degree {max_degree}"
        );
        let d = max_degree;
        let angles = trapezoid_angles(angle_nodes);
        let trig: Vec<(f64, f64)> = angles.iter().map(|t| t.sin_cos()).collect();
        let nq = gh.len();
        let herm_nodes: Vec<Vec<f64>> = gh
            .nodes
            .iter()
            .map(|&x| {
                let mut h = vec![0.0; d + 1];
                hermite_fill(x, &mut h);
                h
            })
            .collect();

        // acc[n][(a, c)] with b = n − a, d = n − c
        let mut acc: Vec<Vec<f64>> = (0..=d).map(|n| vec![0.0; (n + 1) * (n + 1)]).collect();
        let mut hu = vec![0.0; d + 1];
        let mut hw = vec![0.0; d + 1];
        for p in 0..nq {
            for q in 0..nq {
                let (v, w) = (gh.nodes[p], gh.nodes[q]);
                let weight = gh.weights[p] * gh.weights[q] / angle_nodes as f64;
                let (hv, hq) = (&herm_nodes[p], &herm_nodes[q]);
                for &(s, c) in &trig {
                    hermite_fill(v * c - w * s, &mut hu);
                    hermite_fill(v * s + w * c, &mut hw);
                    for n in 0..=d {
                        let row = &mut acc[n];
                        for a in 0..=n {
                            let rot = weight * hu[a] * hw[n - a];
                            for cc in 0..=n {
                                row[a * (n + 1) + cc] += rot * hv[cc] * hq[n - cc];
                            }
                        }
                    }
                }
            }
        }
        let mut entries = HashMap::new();
        for n in 0..=d {
            for a in 0..=n {
                for c in 0..=n {
                    entries.insert((a, n - a, c, n - c), acc[n][a * (n + 1) + c]);
                }
            }
        }
        Self {
            max_degree,
            entries,
        }
    }

    pub fn with_defaults(max_degree: usize) -> Self {
        Self::new(max_degree, DEFAULT_GH_NODES, DEFAULT_ANGLE_NODES)
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    /// `T[a,b](c,d)`; zero when `c + d ≠ a + b`.
    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        if a + b != c + d {
            return 0.0;
        }
        assert!(
            a + b <= self.max_degree,
            "degree {} beyond table degree {}",
            a + b,
            self.max_degree
        );
        self.entries[&(a, b, c, d)]
    }

    /// Nonzero outputs `(c, d, T)` of `R(L_a ⊗ L_b)`, with magnitudes below
    /// `1e-13` treated as exact zeros.
    pub fn outputs(&self, a: usize, b: usize) -> Vec<(usize, usize, f64)> {
        let n = a + b;
        (0..=n)
            .filter_map(|c| {
                let t = self.get(a, b, c, n - c);
                (t.abs() > 1e-13).then_some((c, n - c, t))
            })
            .collect()
    }
}

/// Full (not degree-restricted) matrix element by direct quadrature, used to
/// confirm that off-degree entries vanish.
pub fn rotation_element(a: usize, b: usize, c: usize, d: usize, gh_nodes: usize, angles: usize) -> f64 {
    use crate::spectral::hermite::hermite_l;
    let gh = GaussHermite::maxwellian(gh_nodes);
    let th = trapezoid_angles(angles);
    let mut s = 0.0;
    for (i, &v) in gh.nodes.iter().enumerate() {
        for (j, &w) in gh.nodes.iter().enumerate() {
            let inner: f64 = th
                .iter()
                .map(|t| {
                    let (sn, cs) = t.sin_cos();
                    hermite_l(a, v * cs - w * sn) * hermite_l(b, v * sn + w * cs)
                })
                .sum::<f64>()
                / angles as f64;
            s += gh.weights[i] * gh.weights[j] * inner * hermite_l(c, v) * hermite_l(d, w);
        }
    }
    s
}

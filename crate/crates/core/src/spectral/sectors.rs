//! Creation/annihilation operators as explicit matrices on particle-number
//! sectors, for checking their commutation relations.
//!
//! Sector `N` is spanned by the symmetrized products
//! `S_m = Σ_{sequences a of m} Π_i L_{a_i}(v_i)` over occupation vectors `m`
//! of `modes` Hermite modes with `|m| = N ≤ n_cut`. In this basis
//! `P⁺(L_j) S_m = (m_j + 1) S_{m+e_j}` and
//! `P⁻(L_j) S_m = Σ_i ⟨L_j, L_i⟩ S_{m−e_i}`, with the Gram matrix taken
//! from quadrature. `‖S_m‖² = N!/Π m_i!` in `L²(γ^{⊗N})`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::model::{gc_number_weight, ModelParams};
use crate::quadrature::GaussHermite;
use crate::spectral::hermite::hermite_l;

type Occ = Vec<u8>;
type SparseVec = HashMap<usize, f64>;

/// Sparse operator stored column-wise: `cols[j]` lists `(row, value)`.
#[derive(Debug, Clone)]
struct SparseOp {
    cols: Vec<Vec<(usize, f64)>>,
}

impl SparseOp {
    fn zeros(n: usize) -> Self {
        Self {
            cols: vec![Vec::new(); n],
        }
    }

    fn identity(n: usize, c: f64) -> Self {
        Self {
            cols: (0..n).map(|j| vec![(j, c)]).collect(),
        }
    }

    fn apply_sparse(&self, x: &SparseVec) -> SparseVec {
        let mut y: SparseVec = HashMap::new();
        for (&j, &xj) in x {
            for &(i, a) in &self.cols[j] {
                *y.entry(i).or_insert(0.0) += a * xj;
            }
        }
        y
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for &(i, a) in &self.cols[j] {
                    y[i] += a * xj;
                }
            }
        }
        y
    }

    /// `a·self + b·other`.
    fn combine(&self, a: f64, other: &SparseOp, b: f64) -> SparseOp {
        let cols = self
            .cols
            .iter()
            .zip(&other.cols)
            .map(|(c1, c2)| {
                let mut m: HashMap<usize, f64> = HashMap::new();
                for &(i, v) in c1 {
                    *m.entry(i).or_insert(0.0) += a * v;
                }
                for &(i, v) in c2 {
                    *m.entry(i).or_insert(0.0) += b * v;
                }
                m.into_iter().collect()
            })
            .collect();
        SparseOp { cols }
    }
}

struct SectorBasis {
    states: Vec<Occ>,
    index: HashMap<Occ, usize>,
    n_cut: usize,
}

impl SectorBasis {
    fn new(modes: usize, n_cut: usize) -> Self {
        let mut states = Vec::new();
        fn rec(pos: usize, rem: usize, cur: &mut Occ, out: &mut Vec<Occ>) {
            if pos == cur.len() {
                out.push(cur.clone());
                return;
            }
            for c in 0..=rem {
                cur[pos] = c as u8;
                rec(pos + 1, rem - c, cur, out);
            }
            cur[pos] = 0;
        }
        rec(0, n_cut, &mut vec![0u8; modes], &mut states);
        states.sort_by_key(|m| (total(m), m.clone()));
        let index = states.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        Self {
            states,
            index,
            n_cut,
        }
    }

    fn dim(&self) -> usize {
        self.states.len()
    }
}

fn total(m: &[u8]) -> usize {
    m.iter().map(|&x| x as usize).sum()
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

/// Maximum residual of each identity on the retained block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommutatorReport {
    pub modes: usize,
    pub n_cut: usize,
    pub dimension: usize,
    pub residuals: Vec<(String, f64)>,
}

impl CommutatorReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.1).fold(0.0, f64::max)
    }

    pub fn all_within(&self, tol: f64) -> bool {
        self.residuals.iter().all(|r| r.1 <= tol)
    }
}

/// Builds `P±(L_j)`, `R±(L_j)`, `N` and the thermostat `G` on sectors
/// `N ≤ n_cut` over Hermite modes `0..modes` and checks
///
/// 1. `{P⁺(g₁), P⁻(g₂)} = −(g₁, g₂) Id`,
/// 2. `{P⁺, P⁺} = {P⁻, P⁻} = 0`,
/// 3. `{N, P±} = ±P±`,
/// 4. `{R⁺(g₁), R⁻(g₂)} = −(g₁, g₂) Id`, `R⁻(g) e⁰ = 0`,
/// 5. `ρ (P⁺)* = μ P⁻` in the Γ-weighted inner product and `{G, R⁺} = −ρ R⁺`,
///
/// where `{A, B} = AB − BA`. Columns are tested only on interior sectors so
/// that no product leaves the truncation.
pub fn verify_commutators(modes: usize, params: &ModelParams, n_cut: usize) -> CommutatorReport {
    assert!(modes >= 1 && n_cut >= 2);
    let basis = SectorBasis::new(modes, n_cut);
    let dim = basis.dim();
    let gh = GaussHermite::maxwellian(24);
    let gram: Vec<Vec<f64>> = (0..modes)
        .map(|i| {
            (0..modes)
                .map(|j| gh.integrate(|v| hermite_l(i, v) * hermite_l(j, v)))
                .collect()
        })
        .collect();
    let (mu, rho) = (params.mu(), params.rho());

    let mut p_plus = Vec::with_capacity(modes);
    let mut p_minus = Vec::with_capacity(modes);
    for j in 0..modes {
        let mut pp = SparseOp::zeros(dim);
        let mut pm = SparseOp::zeros(dim);
        for (c, m) in basis.states.iter().enumerate() {
            if total(m) < basis.n_cut {
                let mut up = m.clone();
                up[j] += 1;
                pp.cols[c].push((basis.index[&up], (m[j] + 1) as f64));
            }
            for i in 0..modes {
                if m[i] > 0 && gram[j][i].abs() > 0.0 {
                    let mut down = m.clone();
                    down[i] -= 1;
                    pm.cols[c].push((basis.index[&down], gram[j][i]));
                }
            }
        }
        p_plus.push(pp);
        p_minus.push(pm);
    }
    let number = SparseOp {
        cols: basis
            .states
            .iter()
            .enumerate()
            .map(|(c, m)| vec![(c, total(m) as f64)])
            .collect(),
    };
    let id = SparseOp::identity(dim, 1.0);
    let s = (rho / mu).sqrt();
    let r_plus: Vec<SparseOp> = (0..modes)
        .map(|j| p_plus[j].combine(s, &id, -gram[j][0] / s))
        .collect();
    let r_minus: Vec<SparseOp> = (0..modes)
        .map(|j| p_minus[j].combine(1.0 / s, &id, -gram[j][0] / s))
        .collect();
    // G = ρ P⁺(1) + μ P⁻(1) − μ − ρ N
    let g_op = p_plus[0]
        .combine(rho, &p_minus[0], mu)
        .combine(1.0, &id, -mu)
        .combine(1.0, &number, -rho);

    let interior = |depth: usize| -> Vec<usize> {
        (0..dim)
            .filter(|&c| total(&basis.states[c]) + depth <= n_cut)
            .collect()
    };
    let unit = |c: usize| -> SparseVec { HashMap::from([(c, 1.0)]) };
    let max_diff = |a: &SparseVec, b: &SparseVec, ex: &SparseVec| -> f64 {
        let mut keys: Vec<usize> = a.keys().chain(b.keys()).chain(ex.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter()
            .map(|k| {
                let g = |m: &SparseVec| m.get(&k).copied().unwrap_or(0.0);
                (g(a) - g(b) - g(ex)).abs()
            })
            .fold(0.0, f64::max)
    };
    // max over interior columns of |AB e − BA e − expected e|
    let comm_residual = |a: &SparseOp, b: &SparseOp, expect: &dyn Fn(&SparseVec) -> SparseVec| -> f64 {
        interior(1)
            .into_iter()
            .map(|c| {
                let e = unit(c);
                let ab = a.apply_sparse(&b.apply_sparse(&e));
                let ba = b.apply_sparse(&a.apply_sparse(&e));
                max_diff(&ab, &ba, &expect(&e))
            })
            .fold(0.0, f64::max)
    };

    let mut res_pp_pm: f64 = 0.0;
    let mut res_pp_pp: f64 = 0.0;
    let mut res_pm_pm: f64 = 0.0;
    let mut res_n: f64 = 0.0;
    let mut res_r: f64 = 0.0;
    for a in 0..modes {
        for b in 0..modes {
            let g_ab = gram[a][b];
            let minus_g = move |x: &SparseVec| x.iter().map(|(&k, v)| (k, -g_ab * v)).collect();
            res_pp_pm = res_pp_pm.max(comm_residual(&p_plus[a], &p_minus[b], &minus_g));
            res_r = res_r.max(comm_residual(&r_plus[a], &r_minus[b], &minus_g));
            let zero = |_: &SparseVec| SparseVec::new();
            res_pp_pp = res_pp_pp.max(comm_residual(&p_plus[a], &p_plus[b], &zero));
            res_pm_pm = res_pm_pm.max(comm_residual(&p_minus[a], &p_minus[b], &zero));
        }
        let pp = &p_plus[a];
        let pm = &p_minus[a];
        res_n = res_n.max(comm_residual(&number, pp, &|x| pp.apply_sparse(x)));
        res_n = res_n.max(comm_residual(&number, pm, &|x| {
            pm.apply_sparse(x).into_iter().map(|(k, v)| (k, -v)).collect()
        }));
    }

    // R⁻(g) e⁰ on sectors below the cut
    let mut e0 = vec![0.0; dim];
    for n in 0..=n_cut {
        let mut m = vec![0u8; modes];
        m[0] = n as u8;
        e0[basis.index[&m]] = 1.0;
    }
    let mut res_ground: f64 = 0.0;
    for rm in &r_minus {
        let y = rm.apply(&e0);
        for (c, v) in y.iter().enumerate() {
            if total(&basis.states[c]) < n_cut {
                res_ground = res_ground.max(v.abs());
            }
        }
    }

    // ρ ⟨P⁺x, y⟩_w = μ ⟨x, P⁻y⟩_w with ⟨S_m, S_m⟩_w = a_N N!/Π m_i!
    let weight: Vec<f64> = basis
        .states
        .iter()
        .map(|m| {
            let n = total(m);
            let ln = ln_factorial(n) - m.iter().map(|&k| ln_factorial(k as usize)).sum::<f64>();
            gc_number_weight(n, params) * ln.exp()
        })
        .collect();
    let mut res_adj: f64 = 0.0;
    for j in 0..modes {
        let mut lhs: HashMap<(usize, usize), f64> = HashMap::new();
        for c in interior(1) {
            for &(r, v) in &p_plus[j].cols[c] {
                *lhs.entry((r, c)).or_insert(0.0) += rho * weight[r] * v;
            }
        }
        let mut rhs: HashMap<(usize, usize), f64> = HashMap::new();
        for c in 0..dim {
            for &(r, v) in &p_minus[j].cols[c] {
                if total(&basis.states[r]) < n_cut {
                    *rhs.entry((c, r)).or_insert(0.0) += mu * weight[r] * v;
                }
            }
        }
        for (key, l) in &lhs {
            let r = rhs.get(key).copied().unwrap_or(0.0);
            res_adj = res_adj.max((l - r).abs() / l.abs().max(r.abs()).max(1e-300));
        }
        for (key, r) in &rhs {
            if !lhs.contains_key(key) {
                res_adj = res_adj.max(r.abs());
            }
        }
    }

    // {G, R⁺} = −ρ R⁺ on sectors two below the cut
    let mut res_g: f64 = 0.0;
    for rp in &r_plus {
        for c in interior(2) {
            let e = unit(c);
            let a = g_op.apply_sparse(&rp.apply_sparse(&e));
            let b = rp.apply_sparse(&g_op.apply_sparse(&e));
            let want: SparseVec = rp.apply_sparse(&e).into_iter().map(|(k, v)| (k, -rho * v)).collect();
            res_g = res_g.max(max_diff(&a, &b, &want));
        }
    }

    CommutatorReport {
        modes,
        n_cut,
        dimension: dim,
        residuals: vec![
            ("{P+(g1),P-(g2)} = -(g1,g2) Id".into(), res_pp_pm),
            ("{P+,P+} = 0".into(), res_pp_pp),
            ("{P-,P-} = 0".into(), res_pm_pm),
            ("{N,P+-} = +-P+-".into(), res_n),
            ("{R+(g1),R-(g2)} = -(g1,g2) Id".into(), res_r),
            ("R-(g) e0 = 0".into(), res_ground),
            ("rho P+* = mu P- (relative)".into(), res_adj),
            ("{G,R+} = -rho R+".into(), res_g),
        ],
    }
}

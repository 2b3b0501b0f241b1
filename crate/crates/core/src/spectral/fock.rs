//! Matrix representation of `L̃ = G + λ̃K` in the orthonormal eigenbasis of
//! the thermostat.
//!
//! Basis vectors are `e_{w,k} = c_w P⁺(L_{w_1})⋯P⁺(L_{w_r}) |k⟩` where `w` is a
//! multiset of Hermite modes `≥ 1`, `|k⟩` is the `k`-th normalized Charlier
//! polynomial in `N` (equivalently `(R₀⁺)^k e⁰/√k!`) and
//! `c_w = (ρ/μ)^{r/2} / √(Π mult!)`. The thermostat is diagonal,
//! `G e_{w,k} = −ρ (k + r) e_{w,k}`.
//!
//! `K` acting on `P⁺(w) u` produces terms `P⁺(w') S u` with `S` one of four
//! scalar operators on functions of `N` (identity, multiplication by `N`,
//! `P⁺(1)`, `P⁻(1)`), whose Charlier matrices are tridiagonal or
//! bidiagonal. Matrix elements therefore need only the two-body rotation
//! table and are exact up to its quadrature error.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::model::ModelParams;
use crate::spectral::rotation::RotationTable;

/// Multi-index `α`: `alpha[i]` is the number of quanta in Hermite mode `i`;
/// `alpha[0]` counts `R₀⁺` factors.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ExcitationIndex {
    alpha: BTreeMap<usize, usize>,
}

impl ExcitationIndex {
    pub fn new(alpha: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self {
            alpha: alpha.into_iter().filter(|&(_, m)| m > 0).collect(),
        }
    }

    pub fn ground() -> Self {
        Self {
            alpha: BTreeMap::new(),
        }
    }

    /// From a word of modes `≥ 1` and a Charlier index `k`.
    pub fn from_word(word: &[usize], k: usize) -> Self {
        let mut alpha = BTreeMap::new();
        if k > 0 {
            alpha.insert(0, k);
        }
        for &m in word {
            assert!(m >= 1, "word letters must be modes >= 1");
            *alpha.entry(m).or_insert(0) += 1;
        }
        Self { alpha }
    }

    pub fn multiplicity(&self, mode: usize) -> usize {
        self.alpha.get(&mode).copied().unwrap_or(0)
    }

    /// `λ(α) = Σ α_i`.
    pub fn lambda(&self) -> usize {
        self.alpha.values().sum()
    }

    /// `λ₀(α) = Σ_{i≥1} α_i`.
    pub fn lambda0(&self) -> usize {
        self.lambda() - self.multiplicity(0)
    }

    /// Polynomial degree `d(α) = Σ i α_i`.
    pub fn degree(&self) -> usize {
        self.alpha.iter().map(|(i, m)| i * m).sum()
    }

    pub fn k(&self) -> usize {
        self.multiplicity(0)
    }

    /// Sorted word of modes `≥ 1`.
    pub fn word(&self) -> Word {
        let mut w = Vec::new();
        for (&i, &m) in &self.alpha {
            if i >= 1 {
                w.extend(std::iter::repeat_n(i, m));
            }
        }
        w
    }
}

/// Sorted multiset of Hermite modes `≥ 1`.
pub type Word = Vec<usize>;

fn sorted(mut w: Word) -> Word {
    w.sort_unstable();
    w
}

/// Scalar operators on functions of `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarOp {
    Id,
    Number,
    /// `P⁺(1)`: `u(N) ↦ N u(N−1)`.
    Raise,
    /// `P⁻(1)`: `u(N) ↦ u(N+1)`.
    Lower,
}

/// `⟨j| S |k⟩` in the normalized Charlier basis for Poisson(`m`), entries
/// with `j ≤ k_max` only.
pub fn scalar_op_column(op: ScalarOp, k: usize, m: f64, k_max: usize) -> Vec<(usize, f64)> {
    let s = m.sqrt();
    let kf = k as f64;
    let mut out = Vec::with_capacity(3);
    match op {
        ScalarOp::Id => out.push((k, 1.0)),
        ScalarOp::Number => {
            out.push((k, kf + m));
            if k >= 1 {
                out.push((k - 1, s * kf.sqrt()));
            }
            if k < k_max {
                out.push((k + 1, s * (kf + 1.0).sqrt()));
            }
        }
        ScalarOp::Raise => {
            out.push((k, m));
            if k < k_max {
                out.push((k + 1, s * (kf + 1.0).sqrt()));
            }
        }
        ScalarOp::Lower => {
            out.push((k, 1.0));
            if k >= 1 {
                out.push((k - 1, kf.sqrt() / s));
            }
        }
    }
    out
}

/// Terms `(w', S, coefficient)` of `K P⁺(w) u = Σ P⁺(w') S u`.
pub fn collision_terms(word: &[usize], table: &RotationTable) -> Vec<(Word, ScalarOp, f64)> {
    let r = word.len();
    let mut acc: HashMap<(Word, ScalarOp), f64> = HashMap::new();
    let mut add = |w: Word, op: ScalarOp, c: f64| {
        *acc.entry((sorted(w), op)).or_insert(0.0) += c;
    };
    // one occupied particle paired with a free one
    for (pos, &a) in word.iter().enumerate() {
        for (b, c, t) in table.outputs(a, 0) {
            if b != 0 && c != 0 {
                let mut w = word.to_vec();
                w[pos] = b;
                w.push(c);
                add(w, ScalarOp::Lower, t);
            } else {
                add(word.to_vec(), ScalarOp::Number, t);
            }
        }
    }
    // two occupied particles
    for p in 0..r {
        for q in p + 1..r {
            let (a, b) = (word[p], word[q]);
            for (c, d, t) in table.outputs(a, b) {
                let mut rest: Word = word
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != p && i != q)
                    .map(|(_, &x)| x)
                    .collect();
                if c != 0 && d != 0 {
                    rest.push(c);
                    rest.push(d);
                    add(rest, ScalarOp::Id, t);
                } else {
                    rest.push(c + d);
                    add(rest, ScalarOp::Raise, t);
                }
            }
        }
    }
    add(word.to_vec(), ScalarOp::Number, -(r as f64));
    add(word.to_vec(), ScalarOp::Id, -((r * r.saturating_sub(1) / 2) as f64));
    acc.into_iter()
        .filter(|(_, c)| c.abs() > 1e-12)
        .map(|((w, op), c)| (w, op, c))
        .collect()
}

/// Dense symmetric operator over a list of excitation labels.
#[derive(Debug, Clone)]
pub struct TruncatedOperator {
    pub labels: Vec<ExcitationIndex>,
    pub matrix: DMatrix<f64>,
    pub rule: String,
}

impl TruncatedOperator {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    /// Largest `|A − Aᵀ|` entry relative to the largest `|A|` entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.matrix.amax().max(1e-300);
        (&self.matrix - self.matrix.transpose()).amax() / scale
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.asymmetry() <= tol
    }

    /// Eigenvalues in decreasing order, computed on the symmetrized matrix.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let sym = (&self.matrix + self.matrix.transpose()) * 0.5;
        let mut ev: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    pub fn entry(&self, row: &ExcitationIndex, col: &ExcitationIndex) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == row)?;
        let j = self.labels.iter().position(|l| l == col)?;
        Some(self.matrix[(i, j)])
    }
}

fn norm_factor(word: &[usize], rho_over_mu: f64) -> f64 {
    let mut mult: HashMap<usize, usize> = HashMap::new();
    for &m in word {
        *mult.entry(m).or_insert(0) += 1;
    }
    let fact: f64 = mult
        .values()
        .map(|&m| (1..=m).map(|i| i as f64).product::<f64>())
        .product();
    rho_over_mu.powf(word.len() as f64 / 2.0) / fact.sqrt()
}

/// `G e_α = −ρ λ(α) e_α`.
pub fn build_thermostat_matrix(labels: &[ExcitationIndex], params: &ModelParams) -> TruncatedOperator {
    let n = labels.len();
    let mut m = DMatrix::zeros(n, n);
    for (i, l) in labels.iter().enumerate() {
        m[(i, i)] = -params.rho() * l.lambda() as f64;
    }
    TruncatedOperator {
        labels: labels.to_vec(),
        matrix: m,
        rule: "thermostat, diagonal".to_string(),
    }
}

/// Galerkin matrix of `λ̃K` (and `G` if `with_thermostat`) on `labels`.
/// Terms leaving the span of `labels` are dropped.
pub fn build_generator(
    labels: &[ExcitationIndex],
    params: &ModelParams,
    table: &RotationTable,
    with_thermostat: bool,
    rule: impl Into<String>,
) -> TruncatedOperator {
    let n = labels.len();
    let index: HashMap<(Word, usize), usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| ((l.word(), l.k()), i))
        .collect();
    let k_max = labels.iter().map(|l| l.k()).max().unwrap_or(0);
    let m = params.mean_n();
    let rho_over_mu = 1.0 / m;
    let lt = params.lambda_tilde();
    let mut mat = DMatrix::zeros(n, n);
    let mut cache: HashMap<Word, Vec<(Word, ScalarOp, f64)>> = HashMap::new();
    if lt != 0.0 {
        for (col, l) in labels.iter().enumerate() {
            let w = l.word();
            let terms = cache
                .entry(w.clone())
                .or_insert_with(|| collision_terms(&w, table));
            let cw = norm_factor(&w, rho_over_mu);
            for (w2, op, coef) in terms.iter() {
                let ratio = cw / norm_factor(w2, rho_over_mu);
                for (j, val) in scalar_op_column(*op, l.k(), m, k_max) {
                    if let Some(&row) = index.get(&(w2.clone(), j)) {
                        mat[(row, col)] += lt * coef * ratio * val;
                    }
                }
            }
        }
    }
    if with_thermostat {
        for (i, l) in labels.iter().enumerate() {
            mat[(i, i)] -= params.rho() * l.lambda() as f64;
        }
    }
    TruncatedOperator {
        labels: labels.to_vec(),
        matrix: mat,
        rule: rule.into(),
    }
}

/// All words with letters `≥ 1` and degree `≤ max_degree`.
pub fn words_up_to_degree(max_degree: usize) -> Vec<Word> {
    fn rec(rem: usize, min_letter: usize, cur: &mut Word, out: &mut Vec<Word>) {
        out.push(cur.clone());
        for l in min_letter..=rem {
            cur.push(l);
            rec(rem - l, l, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(max_degree, 1, &mut Vec::new(), &mut out);
    out
}

/// Labels `(w, k)` for the given words and `k = 0..=k_max`, word-major.
pub fn labels_for(words: &[Word], k_max: usize) -> Vec<ExcitationIndex> {
    words
        .iter()
        .flat_map(|w| (0..=k_max).map(move |k| ExcitationIndex::from_word(w, k)))
        .collect()
}

/// Even degree-4 block spanned by `(R₀⁺)^k R₄⁺ e⁰` and `(R₀⁺)^k (R₂⁺)² e⁰`,
/// `k ≤ k_max`. Contains `G + λ̃K`.
pub fn build_collision_block_v4e(k_max: usize, params: &ModelParams) -> TruncatedOperator {
    assert!(k_max >= 2, "k_max must be at least 2");
    let table = RotationTable::with_defaults(4);
    let labels = labels_for(&[vec![4], vec![2, 2]], k_max);
    build_generator(
        &labels,
        params,
        &table,
        true,
        format!("V4e: words {{4}}, {{2,2}}; k <= {k_max}"),
    )
}

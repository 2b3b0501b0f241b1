//! Gauss–Hermite and periodic trapezoid rules.

use std::f64::consts::PI;

use nalgebra::DMatrix;

/// Gauss–Hermite rule, stored as nodes and weights for a given weight
/// function. An `n`-point rule integrates polynomials of degree `2n - 1`
/// exactly against that weight.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Rule for `∫ f(x) e^{-x²} dx` by Golub–Welsch.
    pub fn standard(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite rule needs at least one node");
        let mut jacobi = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let b = (k as f64 / 2.0).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let eig = jacobi.symmetric_eigen();
        let mu0 = PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], mu0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for pair in pairs.iter_mut() {
            *pair = polish(pair.0, n);
        }
        // Symmetrize: the exact rule is even, and this removes eigen-solver
        // noise in the odd moments.
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let j = n - 1 - i;
            nodes[i] = 0.5 * (pairs[i].0 - pairs[j].0);
            weights[i] = 0.5 * (pairs[i].1 + pairs[j].1);
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Rule for `∫ f(v) γ(v) dv` with `γ(v) = e^{-π v²}` (unit mass).
    pub fn maxwellian(n: usize) -> Self {
        let std = Self::standard(n);
        let s = PI.sqrt();
        Self {
            nodes: std.nodes.iter().map(|x| x / s).collect(),
            weights: std.weights.iter().map(|w| w / s).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Largest polynomial degree integrated exactly.
    pub fn exact_degree(&self) -> usize {
        2 * self.len() - 1
    }
}

/// Orthonormal Hermite polynomials `p_{n−1}(x), p_n(x)` for the weight
/// `e^{−x²}`, plus `Σ_{k<n} p_k(x)²`.
fn orthonormal_hermite(x: f64, n: usize) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25);
    let mut christoffel = 0.0;
    for k in 0..n {
        christoffel += cur * cur;
        let next = (2.0 / (k + 1) as f64).sqrt() * x * cur
            - (k as f64 / (k + 1) as f64).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    (prev, cur, christoffel)
}

/// Newton refinement of an eigenvalue-based node, with the weight from the
/// Christoffel function `1 / Σ_{k<n} p_k(x)²`.
fn polish(mut x: f64, n: usize) -> (f64, f64) {
    for _ in 0..3 {
        let (pm1, p, _) = orthonormal_hermite(x, n);
        let dp = (2.0 * n as f64).sqrt() * pm1;
        if dp == 0.0 {
            break;
        }
        x -= p / dp;
    }
    let (_, _, c) = orthonormal_hermite(x, n);
    (x, 1.0 / c)
}

/// Equispaced angles `2πk/n` for the periodic trapezoid rule, which is exact
/// for trigonometric polynomials of degree `< n`.
pub fn trapezoid_angles(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect()
}

/// Mean of `f` over the circle with the `n`-node trapezoid rule.
pub fn circle_mean(n: usize, f: impl Fn(f64) -> f64) -> f64 {
    trapezoid_angles(n).into_iter().map(f).sum::<f64>() / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_factorial_odd(k: usize) -> f64 {
        // (2k-1)!!
        (1..=k).map(|i| (2 * i - 1) as f64).product()
    }

    #[test]
    fn standard_rule_moments() {
        let gh = GaussHermite::standard(24);
        let total: f64 = gh.weights.iter().sum();
        assert!((total - PI.sqrt()).abs() < 1e-13);
        for k in 0..=23 {
            // ∫ x^{2k} e^{-x²} = (2k-1)!! √π / 2^k
            let exact = double_factorial_odd(k) * PI.sqrt() / 2f64.powi(k as i32);
            let got = gh.integrate(|x| x.powi(2 * k as i32));
            assert!((got - exact).abs() <= 1e-12 * exact, "k={k} {got} {exact}");
            let odd = gh.integrate(|x| x.powi(2 * k as i32 + 1));
            assert!(odd.abs() < 1e-12 * exact.max(1.0));
        }
    }

    #[test]
    fn maxwellian_rule_has_unit_mass() {
        let gh = GaussHermite::maxwellian(24);
        assert!((gh.integrate(|_| 1.0) - 1.0).abs() < 1e-14);
        // ∫ v⁴ γ = 3 σ⁴ with σ² = 1/(2π)
        let s2 = 1.0 / (2.0 * PI);
        assert!((gh.integrate(|v| v.powi(4)) - 3.0 * s2 * s2).abs() < 1e-15);
        assert_eq!(gh.exact_degree(), 47);
    }

    #[test]
    fn trapezoid_exact_for_low_trig_degree() {
        // mean of cos^{2n} = C(2n,n)/4^n
        let m = circle_mean(64, |t| t.cos().powi(10));
        assert!((m - 252.0 / 1024.0).abs() < 1e-15);
        assert!(circle_mean(64, |t| (5.0 * t).sin()).abs() < 1e-15);
    }
}

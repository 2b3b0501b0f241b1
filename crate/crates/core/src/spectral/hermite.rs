//! Normalized Hermite functions for the Maxwellian weight.
//!
//! `L_n(v) = He_n(√(2π) v) / √(n!)`, orthonormal in `L²(γ)`.

use std::f64::consts::PI;

/// `L_n(v)` by the three-term recurrence
/// `L_{k+1} = (x L_k − √k L_{k−1}) / √(k+1)`, `x = √(2π) v`.
pub fn hermite_l(n: usize, v: f64) -> f64 {
    let x = (2.0 * PI).sqrt() * v;
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..n {
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}

/// `[L_0(v), …, L_{n_max}(v)]`.
pub fn hermite_all(n_max: usize, v: f64) -> Vec<f64> {
    let mut out = vec![0.0; n_max + 1];
    hermite_fill(v, &mut out);
    out
}

pub(crate) fn hermite_fill(v: f64, out: &mut [f64]) {
    let x = (2.0 * PI).sqrt() * v;
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for k in 1..out.len() - 1 {
        out[k + 1] = (x * out[k] - (k as f64).sqrt() * out[k - 1]) / ((k + 1) as f64).sqrt();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussHermite;

    #[test]
    fn low_orders() {
        for v in [-1.3, 0.0, 0.4, 2.0] {
            assert_eq!(hermite_l(0, v), 1.0);
        }
        let expect = (2.0 * PI - 1.0) / 2f64.sqrt();
        assert!((hermite_l(2, 1.0) - expect).abs() < 1e-13);
        assert!((expect - 3.7357).abs() < 1e-4);
        let all = hermite_all(7, 0.37);
        for (n, x) in all.iter().enumerate() {
            assert!((x - hermite_l(n, 0.37)).abs() < 1e-14);
        }
    }

    #[test]
    fn orthonormal_under_gauss_hermite() {
        let gh = GaussHermite::maxwellian(24);
        for m in 0..=12 {
            for n in 0..=12 {
                let ip = gh.integrate(|v| hermite_l(m, v) * hermite_l(n, v));
                let want = if m == n { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-10, "({m},{n}) -> {ip}");
            }
        }
    }
}

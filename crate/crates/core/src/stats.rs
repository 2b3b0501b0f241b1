//! Small statistics toolbox: sample moments, KS and TV distances, bootstrap,
//! and a weighted exponential-rate fit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{KacError, Result};

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

pub fn mean_se(xs: &[f64]) -> MeanSe {
    let n = xs.len();
    if n == 0 {
        return MeanSe {
            mean: f64::NAN,
            se: f64::NAN,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanSe { mean, se: 0.0 };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    MeanSe {
        mean,
        se: (var / n as f64).sqrt(),
    }
}

/// One-sample Kolmogorov–Smirnov statistic `sup |F_n − F|`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value `sqrt(-ln(α/2)/2) / √n`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

/// Total-variation distance `½ Σ |p − q|`; the shorter vector is padded
/// with zeros.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    0.5 * (0..n).map(|i| (at(p, i) - at(q, i)).abs()).sum::<f64>()
}

/// Bootstrap standard deviation of `statistic` over `n_items` units
/// resampled with replacement. `statistic` receives a multiplicity per unit.
pub fn bootstrap_sd<F>(n_items: usize, resamples: usize, seed: u64, statistic: F) -> Result<f64>
where
    F: Fn(&[u32]) -> f64 + Sync,
{
    if n_items == 0 {
        return Err(KacError::EmptySamples);
    }
    if resamples < 2 {
        return Err(KacError::InvalidArgument(
            "bootstrap needs at least 2 resamples".into(),
        ));
    }
    let values: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut counts = vec![0u32; n_items];
            for _ in 0..n_items {
                counts[rng.random_range(0..n_items)] += 1;
            }
            statistic(&counts)
        })
        .collect();
    let ms = mean_se(&values);
    Ok(ms.se * (resamples as f64).sqrt())
}

/// Result of fitting `y(t) ≈ A e^{-k t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFit {
    pub amplitude: f64,
    pub rate: f64,
    pub rate_se: f64,
    pub points_used: usize,
}

/// Weighted least squares on `ln |y|` with weights `(y/se)²` (delta method).
/// Points whose sign differs from the first point or whose signal-to-noise
/// ratio is below `min_snr` are dropped.
pub fn fit_exponential_rate(t: &[f64], y: &[f64], se: &[f64], min_snr: f64) -> Result<ExpFit> {
    if t.len() != y.len() || t.len() != se.len() {
        return Err(KacError::InvalidArgument("length mismatch in fit".into()));
    }
    let sign = y
        .first()
        .map(|v| v.signum())
        .ok_or(KacError::EmptySamples)?;
    let mut pts = Vec::new();
    for i in 0..t.len() {
        let a = y[i] * sign;
        if a > 0.0 && a >= min_snr * se[i] {
            let s = if se[i] > 0.0 { se[i] / a } else { 1e-12 };
            pts.push((t[i], a.ln(), 1.0 / (s * s)));
        }
    }
    if pts.len() < 2 {
        return Err(KacError::Undefined(
            "fewer than two usable points for exponential fit".into(),
        ));
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let tm = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ym = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let stt: f64 = pts.iter().map(|p| p.2 * (p.0 - tm).powi(2)).sum();
    let sty: f64 = pts.iter().map(|p| p.2 * (p.0 - tm) * (p.1 - ym)).sum();
    let slope = sty / stt;
    Ok(ExpFit {
        amplitude: sign * (ym - slope * tm).exp(),
        rate: -slope,
        rate_se: (1.0 / stt).sqrt(),
        points_used: pts.len(),
    })
}

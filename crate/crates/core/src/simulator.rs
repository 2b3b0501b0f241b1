//! Exact-event simulation of the open Kac system.
//!
//! Each replica is a piecewise-constant jump process. Inter-event times are
//! exponential with the total rate `μ + ρN + λ̃ N(N−1)/2`; the event kind is
//! drawn in proportion to the three summands.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, KacError, Result};
use crate::model::{kac_collide, sample_maxwellian, ModelParams, ParticleState, VelocityLaw};
use crate::number_chain::NumberDistribution;
use crate::spectral::hermite_l;
use crate::stats::{mean_se, MeanSe};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    In,
    Out(usize),
    Collision { i: usize, j: usize, theta: f64 },
}

pub fn total_rate(state: &ParticleState, params: &ModelParams) -> f64 {
    let n = state.len() as f64;
    params.mu() + params.rho() * n + params.lambda_tilde() * n * (n - 1.0) / 2.0
}

/// Draws the waiting time and the next event. Fails with
/// [`KacError::Absorbed`] when the total rate vanishes.
pub fn next_event<R: Rng + ?Sized>(
    state: &ParticleState,
    params: &ModelParams,
    rng: &mut R,
) -> Result<(f64, EventKind)> {
    let n = state.len();
    let r_in = params.mu();
    let r_out = params.rho() * n as f64;
    let r_col = params.lambda_tilde() * (n as f64) * (n as f64 - 1.0) / 2.0;
    let total = r_in + r_out + r_col;
    if total <= 0.0 {
        return Err(KacError::Absorbed);
    }
    let e: f64 = Exp1.sample(rng);
    let dt = e / total;
    let u = rng.random::<f64>() * total;
    let event = if u < r_in || n == 0 {
        EventKind::In
    } else if u < r_in + r_out || n < 2 {
        EventKind::Out(rng.random_range(0..n))
    } else {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let theta = rng.random::<f64>() * 2.0 * PI;
        EventKind::Collision { i, j, theta }
    };
    Ok((dt, event))
}

/// Applies `event` in place. The caller advances time.
///
/// Panics if the event's indices are out of range for `state`.
pub fn apply_event<R: Rng + ?Sized>(state: &mut ParticleState, event: EventKind, rng: &mut R) {
    match event {
        EventKind::In => state.velocities.push(sample_maxwellian(rng)),
        EventKind::Out(k) => {
            assert!(k < state.len(), "Out index {k} out of range");
            state.velocities.swap_remove(k);
        }
        EventKind::Collision { i, j, theta } => {
            assert!(
                i != j && i < state.len() && j < state.len(),
                "invalid collision pair ({i}, {j})"
            );
            let (a, b) = kac_collide(state.velocities[i], state.velocities[j], theta);
            state.velocities[i] = a;
            state.velocities[j] = b;
        }
    }
}

/// How each replica's initial configuration is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// Sample of the steady state: Poisson(μ/ρ) particles, Maxwellian.
    Stationary,
    /// Poisson(`eta`) particles with i.i.d. velocities.
    Product {
        eta: f64,
        #[serde(default)]
        velocity: VelocityLaw,
    },
    /// Exactly `n` particles with i.i.d. velocities.
    Fixed {
        n: usize,
        #[serde(default)]
        velocity: VelocityLaw,
    },
}

impl InitialState {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialState::Stationary => Ok(()),
            InitialState::Product { eta, velocity } => {
                if !(eta.is_finite() && *eta >= 0.0) {
                    return Err(invalid("eta", format!("must be finite and >= 0, got {eta}")));
                }
                velocity.validate()
            }
            InitialState::Fixed { velocity, .. } => velocity.validate(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, params: &ModelParams, rng: &mut R) -> ParticleState {
        let (n, law) = match *self {
            InitialState::Stationary => (
                sample_poisson(params.mean_n(), rng),
                VelocityLaw::maxwellian(),
            ),
            InitialState::Product { eta, velocity } => (sample_poisson(eta, rng), velocity),
            InitialState::Fixed { n, velocity } => (n, velocity),
        };
        ParticleState::new((0..n).map(|_| law.sample(rng)).collect())
    }

    /// Mean initial particle number.
    pub fn mean_n(&self, params: &ModelParams) -> f64 {
        match *self {
            InitialState::Stationary => params.mean_n(),
            InitialState::Product { eta, .. } => eta,
            InitialState::Fixed { n, .. } => n as f64,
        }
    }

    /// Mean initial `Σ v_i²`.
    pub fn mean_sum_v2(&self, params: &ModelParams) -> f64 {
        let m2 = match *self {
            InitialState::Stationary => VelocityLaw::maxwellian().second_moment(),
            InitialState::Product { velocity, .. } | InitialState::Fixed { velocity, .. } => {
                velocity.second_moment()
            }
        };
        self.mean_n(params) * m2
    }
}

fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let p = Poisson::new(mean).expect("positive finite Poisson mean");
    let x: f64 = p.sample(rng);
    x as usize
}

/// Default particle cap `10 μ/ρ + 100`.
pub fn default_cap(params: &ModelParams) -> usize {
    (10.0 * params.mean_n()).ceil() as usize + 100
}

/// Random stream for replica `replica`: ChaCha12 keyed by `seed`, stream id
/// `replica`. Independent of thread count and scheduling.
pub fn replica_rng(seed: u64, replica: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(replica as u64);
    rng
}

/// Runs one trajectory and calls `record(state, checkpoint_index)` at every
/// checkpoint. The state reported at time `t_c` is the one in force on
/// `[t_last_event, t_c]`; the first event after `t_c` is kept pending.
pub fn run_trajectory<R, T, F>(
    initial: &InitialState,
    params: &ModelParams,
    checkpoints: &[f64],
    cap: usize,
    rng: &mut R,
    mut record: F,
) -> Result<Vec<T>>
where
    R: Rng + ?Sized,
    F: FnMut(&ParticleState, usize) -> T,
{
    let mut state = initial.sample(params, rng);
    let mut pending: Option<(f64, EventKind)> = None;
    let mut absorbed = false;
    let mut out = Vec::with_capacity(checkpoints.len());
    for (c, &tc) in checkpoints.iter().enumerate() {
        while !absorbed {
            let (t_ev, ev) = match pending {
                Some(p) => p,
                None => match next_event(&state, params, rng) {
                    Ok((dt, ev)) => {
                        let p = (state.time + dt, ev);
                        pending = Some(p);
                        p
                    }
                    Err(KacError::Absorbed) => {
                        absorbed = true;
                        break;
                    }
                    Err(e) => return Err(e),
                },
            };
            if t_ev > tc {
                break;
            }
            apply_event(&mut state, ev, rng);
            state.time = t_ev;
            pending = None;
            if state.len() > cap {
                return Err(KacError::CapExceeded {
                    n: state.len(),
                    cap,
                    time: t_ev,
                });
            }
        }
        let t_last = state.time;
        state.time = tc;
        out.push(record(&state, c));
        state.time = t_last;
    }
    Ok(out)
}

fn validate_checkpoints(checkpoints: &[f64]) -> Result<()> {
    if checkpoints.is_empty() {
        return Err(invalid("checkpoints", "must be non-empty"));
    }
    if checkpoints.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(invalid("checkpoints", "must be finite and >= 0"));
    }
    if checkpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("checkpoints", "must be strictly increasing"));
    }
    Ok(())
}

/// Runs `replicas` independent trajectories in parallel. The result is
/// indexed `[replica][checkpoint]`.
pub fn run_replicas<T, F>(
    initial: &InitialState,
    params: &ModelParams,
    checkpoints: &[f64],
    replicas: usize,
    seed: u64,
    cap: usize,
    record: F,
) -> Result<Vec<Vec<T>>>
where
    T: Send,
    F: Fn(&ParticleState, usize) -> T + Sync,
{
    validate_checkpoints(checkpoints)?;
    initial.validate()?;
    if replicas == 0 {
        return Err(invalid("replicas", "must be >= 1"));
    }
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, r);
            run_trajectory(initial, params, checkpoints, cap, &mut rng, &record)
        })
        .collect()
}

/// Additional per-replica observables recorded at each checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    /// `Σ_i v_i^p`.
    PowerSum { power: u32 },
    /// `Σ_i L_n(v_i)` with normalized Hermite functions.
    HermiteSum { mode: usize },
    /// `N(N−1)⋯(N−r+1)`.
    FallingFactorial { order: u32 },
    /// `√(ρ/μ) N − √(μ/ρ)`.
    NumberMode,
}

impl Observable {
    pub fn name(&self) -> String {
        match self {
            Observable::PowerSum { power } => format!("obs_pow{power}"),
            Observable::HermiteSum { mode } => format!("obs_herm{mode}"),
            Observable::FallingFactorial { order } => format!("obs_fact{order}"),
            Observable::NumberMode => "obs_number_mode".to_string(),
        }
    }

    pub fn eval(&self, state: &ParticleState, params: &ModelParams) -> f64 {
        match *self {
            Observable::PowerSum { power } => {
                state.velocities.iter().map(|v| v.powi(power as i32)).sum()
            }
            Observable::HermiteSum { mode } => {
                state.velocities.iter().map(|&v| hermite_l(mode, v)).sum()
            }
            Observable::FallingFactorial { order } => {
                let n = state.len() as f64;
                (0..order).map(|k| n - k as f64).product()
            }
            Observable::NumberMode => {
                let m = params.mean_n();
                state.len() as f64 / m.sqrt() - m.sqrt()
            }
        }
    }
}

/// Per-checkpoint, per-replica records. Vectors are indexed
/// `[checkpoint][replica]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub replicas: usize,
    pub seed: u64,
    pub n: Vec<Vec<u32>>,
    pub sum_v2: Vec<Vec<f64>>,
    pub energy_mode: Vec<Vec<f64>>,
    pub observables: Vec<Observable>,
    pub extra: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointSummary {
    pub t: f64,
    pub n: MeanSe,
    pub sum_v2: MeanSe,
    pub energy_mode: MeanSe,
    pub extra: Vec<(String, MeanSe)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub seed: u64,
    pub replicas: usize,
    pub checkpoints: Vec<CheckpointSummary>,
}

pub fn simulate_replicas(
    initial: &InitialState,
    params: &ModelParams,
    checkpoints: &[f64],
    replicas: usize,
    seed: u64,
    observables: &[Observable],
) -> Result<ObservableSeries> {
    let recs = run_replicas(
        initial,
        params,
        checkpoints,
        replicas,
        seed,
        default_cap(params),
        |s, _| {
            let extra: Vec<f64> = observables.iter().map(|o| o.eval(s, params)).collect();
            (s.len() as u32, s.sum_v2(), s.energy_mode(), extra)
        },
    )?;
    let nc = checkpoints.len();
    let mut series = ObservableSeries {
        times: checkpoints.to_vec(),
        replicas,
        seed,
        n: vec![Vec::with_capacity(replicas); nc],
        sum_v2: vec![Vec::with_capacity(replicas); nc],
        energy_mode: vec![Vec::with_capacity(replicas); nc],
        observables: observables.to_vec(),
        extra: vec![vec![Vec::with_capacity(replicas); nc]; observables.len()],
    };
    for rec in recs {
        for (c, (n, v2, em, extra)) in rec.into_iter().enumerate() {
            series.n[c].push(n);
            series.sum_v2[c].push(v2);
            series.energy_mode[c].push(em);
            for (k, x) in extra.into_iter().enumerate() {
                series.extra[k][c].push(x);
            }
        }
    }
    Ok(series)
}

impl ObservableSeries {
    pub fn checkpoint_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&x| x == t)
    }

    pub fn n_as_f64(&self, c: usize) -> Vec<f64> {
        self.n[c].iter().map(|&n| n as f64).collect()
    }

    pub fn summary(&self) -> SeriesSummary {
        let checkpoints = (0..self.times.len())
            .map(|c| CheckpointSummary {
                t: self.times[c],
                n: mean_se(&self.n_as_f64(c)),
                sum_v2: mean_se(&self.sum_v2[c]),
                energy_mode: mean_se(&self.energy_mode[c]),
                extra: self
                    .observables
                    .iter()
                    .enumerate()
                    .map(|(k, o)| (o.name(), mean_se(&self.extra[k][c])))
                    .collect(),
            })
            .collect();
        SeriesSummary {
            seed: self.seed,
            replicas: self.replicas,
            checkpoints,
        }
    }

    /// Writes `t,replica,N,sum_v2,obs_*` rows, checkpoint-major.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t,replica,N,sum_v2")?;
        for o in &self.observables {
            write!(w, ",{}", o.name())?;
        }
        writeln!(w)?;
        for c in 0..self.times.len() {
            for r in 0..self.replicas {
                write!(
                    w,
                    "{},{},{},{}",
                    self.times[c], r, self.n[c][r], self.sum_v2[c][r]
                )?;
                for k in 0..self.observables.len() {
                    write!(w, ",{}", self.extra[k][c][r])?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

/// Normalized histogram of `N` over replicas at checkpoint index `c`.
pub fn empirical_number_law(series: &ObservableSeries, c: usize) -> Result<NumberDistribution> {
    let ns = series
        .n
        .get(c)
        .ok_or_else(|| KacError::InvalidArgument(format!("no checkpoint {c}")))?;
    if ns.is_empty() {
        return Err(KacError::EmptySamples);
    }
    let n_max = *ns.iter().max().unwrap() as usize;
    let mut p = vec![0.0; n_max + 1];
    let w = 1.0 / ns.len() as f64;
    for &n in ns {
        p[n as usize] += w;
    }
    Ok(NumberDistribution::from_probs(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(mu: f64, rho: f64, lambda: f64) -> ModelParams {
        ModelParams::new(mu, rho, lambda).unwrap()
    }

    #[test]
    fn rate_examples() {
        let p = params(2.0, 1.0, 1.0);
        assert_eq!(total_rate(&ParticleState::empty(), &p), 2.0);
        assert_eq!(total_rate(&ParticleState::new(vec![0.1]), &p), 3.0);
        assert_eq!(total_rate(&ParticleState::new(vec![0.1, 0.2, 0.3]), &p), 6.5);
    }

    #[test]
    fn empty_state_only_gains() {
        let p = params(2.0, 1.0, 1.0);
        let mut rng = replica_rng(1, 0);
        for _ in 0..1000 {
            let (_, ev) = next_event(&ParticleState::empty(), &p, &mut rng).unwrap();
            assert_eq!(ev, EventKind::In);
        }
        let dead = params(0.0, 1.0, 0.0);
        assert_eq!(
            next_event(&ParticleState::empty(), &dead, &mut rng),
            Err(KacError::Absorbed)
        );
    }

    #[test]
    fn event_frequencies_and_waiting_times() {
        let p = params(2.0, 1.0, 0.0);
        let s = ParticleState::new(vec![0.3, -0.4]);
        let mut rng = replica_rng(5, 0);
        let n = 1_000_000;
        let mut ins = 0usize;
        let mut dts = Vec::with_capacity(n);
        for _ in 0..n {
            let (dt, ev) = next_event(&s, &p, &mut rng).unwrap();
            dts.push(dt);
            match ev {
                EventKind::In => ins += 1,
                EventKind::Out(k) => assert!(k < 2),
                EventKind::Collision { .. } => panic!("no collisions at lambda = 0"),
            }
        }
        let q = 2.0 / 4.0;
        let se = (q * (1.0 - q) / n as f64).sqrt();
        assert!((ins as f64 / n as f64 - q).abs() < 3.0 * se);
        let m = mean_se(&dts);
        assert!((m.mean - 0.25).abs() < 3.0 * m.se);
    }

    #[test]
    fn collision_pairs_are_uniform() {
        let p = params(1e-9, 1e-9, 1.0);
        let s = ParticleState::new(vec![0.0; 4]);
        let mut rng = replica_rng(9, 0);
        let mut counts = [[0usize; 4]; 4];
        let n = 600_000;
        for _ in 0..n {
            if let (_, EventKind::Collision { i, j, theta }) = next_event(&s, &p, &mut rng).unwrap()
            {
                assert!(i != j && (0.0..2.0 * PI).contains(&theta));
                counts[i.min(j)][i.max(j)] += 1;
            }
        }
        let expect = n as f64 / 6.0;
        let sd = (expect * (5.0 / 6.0)).sqrt();
        for i in 0..4 {
            for j in i + 1..4 {
                assert!((counts[i][j] as f64 - expect).abs() < 4.0 * sd);
            }
        }
    }

    #[test]
    fn apply_event_bookkeeping() {
        let mut rng = replica_rng(2, 0);
        let mut s = ParticleState::empty();
        apply_event(&mut s, EventKind::In, &mut rng);
        assert_eq!(s.len(), 1);

        let mut s = ParticleState::new(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let before = s.sum_v2();
        apply_event(
            &mut s,
            EventKind::Collision {
                i: 1,
                j: 3,
                theta: 0.7,
            },
            &mut rng,
        );
        assert_eq!(s.len(), 5);
        assert!((s.sum_v2() - before).abs() < 1e-12);

        let mut s = ParticleState::new(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        apply_event(&mut s, EventKind::Out(1), &mut rng);
        let mut v = s.velocities.clone();
        v.sort_by(f64::total_cmp);
        assert_eq!(v, vec![1.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    #[should_panic]
    fn out_of_range_removal_panics() {
        let mut rng = replica_rng(2, 0);
        let mut s = ParticleState::new(vec![1.0]);
        apply_event(&mut s, EventKind::Out(1), &mut rng);
    }

    #[test]
    fn pure_death_mean() {
        let p = params(0.0, 1.0, 0.0);
        let init = InitialState::Fixed {
            n: 1,
            velocity: VelocityLaw::maxwellian(),
        };
        let ts = [0.5, 1.0, 2.0];
        let s = simulate_replicas(&init, &p, &ts, 20_000, 3, &[]).unwrap();
        for (c, &t) in ts.iter().enumerate() {
            let m = mean_se(&s.n_as_f64(c));
            assert!((m.mean - (-t).exp()).abs() < 3.0 * m.se, "t={t}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let p = params(5.0, 1.0, 1.0);
        let obs = [Observable::PowerSum { power: 4 }];
        let a = simulate_replicas(&InitialState::Stationary, &p, &[0.5, 1.0], 64, 42, &obs).unwrap();
        let b = simulate_replicas(&InitialState::Stationary, &p, &[0.5, 1.0], 64, 42, &obs).unwrap();
        assert_eq!(a, b);
        let c = simulate_replicas(&InitialState::Stationary, &p, &[0.5, 1.0], 64, 43, &obs).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_replica_law_is_a_point_mass() {
        let p = params(3.0, 1.0, 0.0);
        let s = simulate_replicas(&InitialState::Stationary, &p, &[1.0], 1, 0, &[]).unwrap();
        let law = empirical_number_law(&s, 0).unwrap();
        let n = s.n[0][0] as usize;
        assert_eq!(law.probs()[n], 1.0);
        assert_eq!(law.probs().iter().filter(|&&x| x > 0.0).count(), 1);
    }

    #[test]
    fn cap_triggers() {
        let p = params(50.0, 1.0, 0.0);
        let init = InitialState::Fixed {
            n: 0,
            velocity: VelocityLaw::maxwellian(),
        };
        let r = run_replicas(&init, &p, &[10.0], 1, 0, 5, |s, _| s.len());
        assert!(matches!(r, Err(KacError::CapExceeded { .. })));
    }

    #[test]
    fn checkpoints_must_increase() {
        let p = params(1.0, 1.0, 0.0);
        assert!(simulate_replicas(&InitialState::Stationary, &p, &[1.0, 1.0], 2, 0, &[]).is_err());
    }

    #[test]
    fn csv_header() {
        let p = params(1.0, 1.0, 0.0);
        let s = simulate_replicas(
            &InitialState::Stationary,
            &p,
            &[1.0],
            2,
            0,
            &[Observable::NumberMode],
        )
        .unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,replica,N,sum_v2,obs_number_mode\n"));
        assert_eq!(text.lines().count(), 3);
    }
}

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use statrs::function::gamma::ln_gamma;

use kac_core::bk::{BkOperator, DensityField};
use kac_core::entropy::{
    check_poisson_lsi, check_two_point, coarse_product_entropy, lemma_ent_slack,
    product_cell_means, product_state_entropy, CellPartition, OccupationFunction,
};
use kac_core::grid::VelocityGrid;
use kac_core::model::{gc_number_weight, kac_collide, maxwellian_pdf};
use kac_core::number_chain::{
    default_dt, default_n_max, evolve_number_dist_checkpoints, NumberDistribution, ProductState,
};
use kac_core::simulator::{apply_event, next_event, InitialState};
use kac_core::spectral::{build_generator, labels_for, tau, words_up_to_degree, RotationTable};
use kac_core::{ModelParams, VelocityLaw};

fn law() -> impl Strategy<Value = VelocityLaw> {
    prop_oneof![
        (0.3..3.0f64).prop_map(|s| VelocityLaw::Maxwellian { variance_scale: s }),
        (0.0..0.8f64, 0.2..1.0f64).prop_map(|(c, s)| VelocityLaw::TwoBump {
            center: c,
            variance_scale: s
        }),
    ]
}

proptest! {
    #[test]
    fn collision_preserves_pair_energy(v in -1e3..1e3f64, w in -1e3..1e3f64, theta in 0.0..(2.0 * PI)) {
        let (a, b) = kac_collide(v, w, theta);
        let before = v * v + w * w;
        let after = a * a + b * b;
        prop_assert!((after - before).abs() <= 4.0 * f64::EPSILON * before, "{before} -> {after}");
    }

    #[test]
    fn maxwellian_is_even(v in -50.0..50.0f64) {
        prop_assert_eq!(maxwellian_pdf(v), maxwellian_pdf(-v));
    }

    #[test]
    fn number_weight_matches_log_gamma(m in 0.1..200.0f64, frac in 0.0..1.0f64) {
        let p = ModelParams::new(m, 1.0, 0.0).unwrap();
        let n = (frac * 10.0 * m).floor() as usize;
        let want = (n as f64 * m.ln() - m - ln_gamma(n as f64 + 1.0)).exp();
        let got = gc_number_weight(n, &p);
        if want > 1e-290 {
            prop_assert!((got - want).abs() <= 1e-12 * want, "n={} {} vs {}", n, got, want);
        }
    }

    #[test]
    fn events_do_their_bookkeeping(seed in any::<u64>(), n0 in 0usize..30, m in 0.5..30.0f64, lam in 0.0..5.0f64) {
        let p = ModelParams::new(m, 1.0, lam).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let init = InitialState::Fixed { n: n0, velocity: VelocityLaw::maxwellian() };
        let mut s = init.sample(&p, &mut rng);
        for _ in 0..200 {
            let (dt, ev) = next_event(&s, &p, &mut rng).unwrap();
            prop_assert!(dt > 0.0);
            let (n, e) = (s.len(), s.sum_v2());
            apply_event(&mut s, ev, &mut rng);
            match ev {
                kac_core::simulator::EventKind::In => prop_assert_eq!(s.len(), n + 1),
                kac_core::simulator::EventKind::Out(_) => prop_assert_eq!(s.len(), n - 1),
                kac_core::simulator::EventKind::Collision { .. } => {
                    prop_assert_eq!(s.len(), n);
                    prop_assert!((s.sum_v2() - e).abs() <= 1e-12 * e.max(1.0));
                }
            }
        }
    }

    #[test]
    fn number_chain_keeps_mass(m in 0.5..60.0f64, rho in 0.2..3.0f64, start in 0usize..20) {
        let p = ModelParams::new(m * rho, rho, 1.0).unwrap();
        let n_max = default_n_max(&p);
        let p0 = NumberDistribution::delta(start.min(n_max), n_max);
        let out = evolve_number_dist_checkpoints(&p0, &p, &[0.5, 3.0], default_dt(&p, n_max), 1e-9).unwrap();
        for d in out {
            prop_assert!((d.mass() - 1.0).abs() < 1e-9);
            prop_assert!(d.probs().iter().all(|&x| x > -1e-15));
        }
    }

    #[test]
    fn two_point_inequality(f0 in 1e-3..1e3f64, f1 in 1e-3..1e3f64, mu0 in 0.0..=1.0f64) {
        let c = check_two_point(f0, f1, mu0).unwrap();
        prop_assert!(c.holds, "{:?}", c);
    }

    #[test]
    fn poisson_inequality_strict_for_nonconstant(
        f in prop::collection::vec(0.05..20.0f64, 2..30),
        alpha in 0.1..25.0f64,
    ) {
        let c = check_poisson_lsi(&f, alpha).unwrap();
        prop_assert!(c.holds, "{:?}", c);
        let constant = f.iter().all(|&x| x == f[0]);
        if !constant {
            prop_assert!(c.rhs > c.lhs, "{:?}", c);
        }
    }

    #[test]
    fn poisson_inequality_equality_for_constants(x in 0.01..100.0f64, alpha in 0.1..25.0f64, len in 1usize..20) {
        let c = check_poisson_lsi(&vec![x; len], alpha).unwrap();
        prop_assert!((c.lhs - c.rhs).abs() <= 1e-12 * c.lhs.abs().max(1.0), "{:?}", c);
    }

    #[test]
    fn product_entropy_nonnegative(eta in 0.0..40.0f64, m in 0.1..40.0f64, g in law()) {
        let p = ModelParams::new(m, 1.0, 0.0).unwrap();
        let ps = ProductState::new(eta, VelocityGrid::default_bk(), &g).unwrap();
        prop_assert!(product_state_entropy(&ps, &p) >= -1e-9);
    }

    #[test]
    fn coarse_graining_never_increases_entropy(eta in 0.1..30.0f64, m in 0.5..30.0f64, g in law(), t in 0.0..3.0f64) {
        let p = ModelParams::new(m, 1.0, 0.0).unwrap();
        let mut prev = 0.0;
        for k in [1usize, 2, 4, 8] {
            let part = CellPartition::equal_mass(k).unwrap();
            let s = coarse_product_entropy(&product_cell_means(eta, &g, &part, &p, t), &part, &p);
            prop_assert!(s >= prev - 1e-10, "k={}: {} < {}", k, s, prev);
            prev = s;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn induction_inequality_k2(values in prop::collection::vec(-3.0..3.0f64, 231), a0 in 0.1..2.0f64, a1 in 0.1..2.0f64) {
        // All occupation vectors of size ≤ 20 in two cells: C(22, 2) = 231.
        let mut it = values.into_iter();
        let f = OccupationFunction::from_fn(2, 20, |_| it.next().unwrap().exp()).unwrap();
        let slack = lemma_ent_slack(&f, &[a0, a1]).unwrap();
        prop_assert!(slack >= -1e-12, "{}", slack);
    }

    #[test]
    fn truncated_generator_symmetric_nonpositive(m in 5.0..500.0f64, rho in 0.3..3.0f64, lam in 0.1..3.0f64) {
        let p = ModelParams::new(m * rho, rho, lam).unwrap();
        let table = RotationTable::with_defaults(4);
        let labels = labels_for(&words_up_to_degree(4), 6);
        let op = build_generator(&labels, &p, &table, true, "degree <= 4");
        prop_assert!(op.is_symmetric(1e-10));
        let ev = op.eigenvalues();
        prop_assert!(ev.iter().all(|&x| x <= 1e-10));
        prop_assert!(ev[0].abs() < 1e-10 && ev[1] < -1e-8, "{:?}", &ev[..3]);
        let at_minus_rho = ev.iter().filter(|&&x| (x + rho).abs() < 1e-9).count();
        prop_assert_eq!(at_minus_rho, 2);
    }
}

#[test]
fn tau_decreases_and_is_bounded() {
    for n in 1..200 {
        assert!(tau(n + 1) < tau(n));
        assert!(tau(n) <= 1.0 / (n as f64).sqrt());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn kinetic_operator_keeps_symmetry(c in 0.0..0.8f64, s in 0.3..1.5f64, scale in 0.2..3.0f64) {
        let op = BkOperator::with_defaults();
        let f = DensityField::from_law(op.grid().clone(), &VelocityLaw::TwoBump { center: c, variance_scale: s }, scale);
        let q = op.collision(&f.values);
        let n = q.len();
        for i in 0..n / 2 {
            prop_assert!((q[i] - q[n - 1 - i]).abs() <= 1e-13 * (1.0 + q[i].abs()), "i={}", i);
        }
        let dv = op.grid().dv();
        let mass: f64 = q.iter().sum::<f64>() * dv;
        let energy: f64 = q.iter().zip(f.grid.points()).map(|(x, v)| x * v * v).sum::<f64>() * dv;
        prop_assert!(mass.abs() < 1e-6 && energy.abs() < 1e-6, "{} {}", mass, energy);
    }
}

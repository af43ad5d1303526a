use ipnb_core::beamform::{fd_ir_solve, mse_objective, random_init, Dims};
use ipnb_core::ipn::{nmse, perturb_covariance, snapshot_covariance, ErrorModel, IpnCovariance, IpnSeries};
use ipnb_core::kddd::{init_from_fd, kddd_forward, StepSizeSchedule};
use ipnb_core::linalg::{hermitian_eig, CMat, Tally, C64};
use ipnb_core::manifold::{retract, riemannian_project, tangency_residual, UnitModulusMatrix};
use ipnb_core::scenario::{draw_instance, gen_frame_channel, init_paths, upa_steering, IpnSnapshot, ScenarioConfig, Upa};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cmat(rows: usize, cols: usize) -> impl Strategy<Value = CMat> {
    prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), rows * cols)
        .prop_map(move |v| CMat::from_vec(rows, cols, v.into_iter().map(|(a, b)| C64::new(a, b)).collect()))
}

fn sized_cmat() -> impl Strategy<Value = CMat> {
    (1usize..6, 1usize..4).prop_flat_map(|(r, c)| cmat(r, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steering_is_unit_modulus(azi in -10.0f64..10.0, ele in -10.0f64..10.0, rows in 1usize..6, cols in 1usize..6) {
        for z in upa_steering(azi, ele, rows, cols) {
            prop_assert!((z.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn channel_generation_is_bit_stable(seed in any::<u64>(), u in 0usize..4) {
        let cfg = ScenarioConfig { u, ..ScenarioConfig::desk() };
        let state = init_paths(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let a = gen_frame_channel(&cfg, &state, 3);
        let b = gen_frame_channel(&cfg, &state, 3);
        prop_assert!(a.h.iter().zip(&b.h).all(|(x, y)| x.as_slice().iter().zip(y.as_slice()).all(|(p, q)| p.re.to_bits() == q.re.to_bits() && p.im.to_bits() == q.im.to_bits())));
        prop_assert!(a.h.iter().all(CMat::is_finite));
    }

    #[test]
    fn retraction_lands_on_the_manifold(m in sized_cmat()) {
        prop_assume!(m.as_slice().iter().all(|z| z.norm() > 1e-9));
        let p = retract(&m, &mut Tally::new()).unwrap();
        prop_assert!(p.max_modulus_defect() <= 1e-12);
    }

    #[test]
    fn projection_is_tangent_and_idempotent((base, g) in (1usize..6, 1usize..4).prop_flat_map(|(r, c)| (prop::collection::vec(0.0f64..6.3, r * c), cmat(r, c)).prop_map(move |(th, g)| (UnitModulusMatrix::from_phases(r, c, |i, j| th[i * c + j]), g)))) {
        let mut t = Tally::new();
        let v = riemannian_project(&g, &base, &mut t);
        prop_assert!(tangency_residual(&v, &base) <= 1e-12 * (1.0 + g.norm_fro()));
        let again = riemannian_project(v.matrix(), &base, &mut t);
        prop_assert!(again.matrix().sub(v.matrix()).norm_fro() <= 1e-12 * (1.0 + g.norm_fro()));
    }

    #[test]
    fn snapshot_estimates_are_hermitian_psd(d in prop::collection::vec(prop::collection::vec(prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0), 3), 2), 1..6)) {
        let snaps: Vec<IpnSnapshot> = d.into_iter().enumerate().map(|(s, d)| IpnSnapshot {
            index: s,
            d: d.into_iter().map(|v| v.into_iter().map(|(a, b)| C64::new(a, b)).collect()).collect(),
        }).collect();
        let r = snapshot_covariance(&snaps, 0).unwrap();
        for m in &r.r {
            prop_assert!(m.hermitian_defect() <= 1e-10 * m.norm_fro().max(1e-300));
            let (vals, _) = hermitian_eig(m);
            let tr = m.trace().re;
            prop_assert!(vals.iter().all(|&l| l >= -1e-10 * tr.max(1e-300)));
        }
    }

    #[test]
    fn nmse_is_non_negative_and_zero_on_match(a in cmat(3, 3), b in cmat(3, 3)) {
        prop_assume!(a.norm_fro() > 0.0);
        let s = |m: &CMat| IpnSeries::new(vec![IpnCovariance { t: 0, r: vec![m.clone()] }]).unwrap();
        prop_assert_eq!(nmse(&s(&a), &s(&a)).unwrap(), 0.0);
        prop_assert!(nmse(&s(&b), &s(&a)).unwrap() >= 0.0);
    }

    #[test]
    fn perturbation_preserves_hermitian_structure(seed in any::<u64>(), rho in -20.0f64..20.0) {
        let cfg = ScenarioConfig::desk();
        let inst = draw_instance(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let p = perturb_covariance(&inst.ipn, &ErrorModel::new(rho), &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        for m in &p.r {
            prop_assert!(m.hermitian_defect() <= 1e-10 * m.norm_fro());
        }
    }

    #[test]
    fn error_model_variance_matches_db(rho in -40.0f64..40.0) {
        let v = ErrorModel::new(rho).variance();
        prop_assert!((10.0 * v.log10() - rho).abs() < 1e-9);
    }

    #[test]
    fn schedules_reject_negative_steps(g in prop::collection::vec(-1.0f64..1.0, 1..5)) {
        let s = StepSizeSchedule::new(vec![g.clone()], vec![g.clone()]);
        prop_assert_eq!(s.is_ok(), g.iter().all(|&x| x >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn unfolded_forward_stays_feasible(seed in any::<u64>(), steps in prop::collection::vec(0.0f64..3.0, 4)) {
        let cfg = ScenarioConfig { x: 4, ka: Upa::new(2, 2), kb: Upa::new(2, 2), ..ScenarioConfig::desk() };
        let dims = Dims::from_config(&cfg);
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let inst = draw_instance(&cfg, &mut r);
        let (h, rc) = (&inst.channel, &inst.ipn);
        let sched = StepSizeSchedule::new(vec![steps[..2].to_vec(), vec![steps[2]]], vec![steps[2..].to_vec(), vec![steps[0]]]).unwrap();
        let fd = fd_ir_solve(h, rc, dims.ns, 1e-8, &mut Tally::new()).unwrap();
        for init in [init_from_fd(&fd.tx, dims, h, rc).unwrap(), random_init(dims, h, rc, &mut r).unwrap()] {
            let tx = kddd_forward(h, rc, &sched, &init, &mut Tally::new()).unwrap();
            prop_assert!(tx.modulus_defect() <= 1e-9);
            prop_assert!(tx.powers().iter().all(|p| (p - 1.0).abs() <= 1e-9));
            prop_assert!(fd.mse <= mse_objective(&tx, h, rc).unwrap() + 1e-6);
        }
    }
}

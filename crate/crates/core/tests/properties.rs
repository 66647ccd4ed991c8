use neural_field::experiments::Instance;
use neural_field::gainfield::{build_learned_kernel, mercer_decompose, presynaptic_gain, KernelSign};
use neural_field::grid::sup_norm;
use neural_field::solver::monitor_bounds;
use neural_field::{
    contraction_factor, FieldState, FiringRate, Grid, LearningKernel, Method, Mode, ModelSpec, QuadratureRule,
    SolverConfig, SynapticKernel, TheoryConstants,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bounded_firing() -> impl Strategy<Value = FiringRate> {
    prop_oneof![
        (0.1f64..20.0, -3.0f64..3.0).prop_map(|(slope, threshold)| FiringRate::Sigmoid { slope, threshold }),
        (0.1f64..20.0).prop_map(|scale| FiringRate::ScaledArctan { scale }),
        (0.01f64..5.0, -2.0f64..2.0, 0.0f64..1.0)
            .prop_map(|(slope, threshold, ceiling)| FiringRate::Clamped { slope, threshold, ceiling }),
    ]
}

fn model(kernel: SynapticKernel, firing: FiringRate, gamma: f64) -> ModelSpec {
    ModelSpec::new(kernel, firing, LearningKernel::default(), gamma, Mode::WellPosed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn firing_rates_respect_their_lipschitz_constant(f in bounded_firing(), seed in any::<u64>()) {
        let l = f.lipschitz();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10_000 {
            let a: f64 = rng.random_range(-10.0..10.0);
            let b: f64 = a + rng.random_range(-2.0..2.0);
            prop_assert!((f.eval(a) - f.eval(b)).abs() <= l * (a - b).abs() + 1e-12);
            prop_assert!((0.0..=1.0).contains(&f.eval(a)));
        }
    }

    #[test]
    fn learning_kernel_respects_its_lipschitz_constant(width in 0.05f64..5.0, seed in any::<u64>()) {
        let g = LearningKernel::Gaussian { width };
        let k = g.lipschitz();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10_000 {
            let a: f64 = rng.random_range(-4.0 * width..4.0 * width);
            let b: f64 = a + rng.random_range(-width..width);
            prop_assert!((g.eval(a) - g.eval(b)).abs() <= k * (a - b).abs() + 1e-12);
        }
    }

    #[test]
    fn contraction_factor_is_linear_in_rho_and_monotone_in_gamma(
        c_w in 0.0f64..5.0, l in 0.0f64..5.0, k in 0.0f64..5.0,
        rho in 1e-3f64..1.0, scale in 0.1f64..10.0, g1 in 0.0f64..2.0, dg in 0.0f64..2.0,
    ) {
        let c = TheoryConstants::new(1.0, c_w, 0.0, l, k);
        let q = contraction_factor(&c, g1, rho);
        let q_scaled = contraction_factor(&c, g1, scale * rho);
        prop_assert!((q_scaled - scale * q).abs() <= 1e-12 * q_scaled.abs().max(1.0));
        prop_assert!(contraction_factor(&c, g1 + dg, rho) >= q);
    }

    #[test]
    fn operator_output_is_bounded_by_row_sums(
        f in bounded_firing(), gamma in 0.0f64..2.0, seed in any::<u64>(), amp in 0.1f64..10.0,
    ) {
        let inst = Instance::new(
            model(SynapticKernel::exponential(0.7, 0.8), f, gamma),
            Grid::interval(-6.0, 6.0, 61).unwrap(),
            QuadratureRule::Trapezoid,
        ).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..61).map(|_| rng.random_range(-amp..amp)).collect();
        let j = inst.op.apply_j(&inst.model, &u).unwrap();
        prop_assert!(sup_norm(&j) <= (1.0 + gamma) * inst.op.max_abs_row_sum() * (1.0 + 1e-12));
    }

    #[test]
    fn ring_operator_commutes_with_rotation(shift in 1usize..40, seed in any::<u64>(), scale in 0.3f64..3.0) {
        let n = 40;
        let inst = Instance::new(
            model(SynapticKernel::MexicanHat { scale }, FiringRate::sigmoid(2.0, 0.1), 0.0),
            Grid::ring(-5.0, 5.0, n).unwrap(),
            QuadratureRule::Trapezoid,
        ).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let rotated: Vec<f64> = (0..n).map(|i| u[(i + n - shift) % n]).collect();
        let ju = inst.op.apply_j(&inst.model, &u).unwrap();
        let jr = inst.op.apply_j(&inst.model, &rotated).unwrap();
        for i in 0..n {
            prop_assert!((jr[i] - ju[(i + n - shift) % n]).abs() < 1e-12);
        }
    }

    #[test]
    fn learned_kernels_decompose(seed in any::<u64>(), gamma in 0.0f64..1.5) {
        let inst = Instance::new(
            model(SynapticKernel::exponential(0.5, 1.0), FiringRate::sigmoid(4.0, 0.3), gamma),
            Grid::interval(-5.0, 5.0, 51).unwrap(),
            QuadratureRule::Trapezoid,
        ).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, c, w): (f64, f64, f64) = (rng.random_range(0.1..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.5..3.0));
        let u = FieldState::new(inst.grid.sample(|x| a * (-((x[0] - c) / w).powi(2)).exp()), f64::INFINITY);
        let g = build_learned_kernel(&u, &inst.model, KernelSign::Plus);
        let eig = mercer_decompose(&g, &inst.quad).unwrap();
        prop_assert!(eig.gram_deviation() < 1e-10);
        prop_assert!(*eig.values.last().unwrap() >= -1e-8 * eig.values[0]);
        prop_assert!(eig.reconstruction_error(&g, eig.len()) < 1e-8);
        let gain = presynaptic_gain(&eig, 1.0, None);
        for p in &gain.phi_pre {
            prop_assert!((p - (1.0 + gamma)).abs() < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn trajectories_obey_the_global_bound_and_positivity(
        f in bounded_firing(), gamma in 0.0f64..1.0, amp in 0.0f64..4.0, seed in any::<u64>(),
    ) {
        let inst = Instance::new(
            model(SynapticKernel::exponential(0.5, 1.0), f, gamma),
            Grid::interval(-8.0, 8.0, 41).unwrap(),
            QuadratureRule::Trapezoid,
        ).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u0 = FieldState::new((0..41).map(|_| rng.random_range(0.0..=amp)).collect(), 0.0);
        let cfg = SolverConfig { method: Method::Rk4, dt: 0.1, t_end: 5.0, ..Default::default() };
        let traj = inst.solve(&u0, &cfg).unwrap();
        let report = monitor_bounds(&traj, &inst.constants, &inst.model, &inst.op);
        // coarse grids: the trapezoid row sum of the kinked kernel exceeds C_w by O(h^2)
        prop_assert!(report.within_discrete_bound, "{} > {}", report.sup_observed, report.bound_discrete);
        prop_assert!(report.bound_discrete - report.bound_theoretical <= (1.0 + gamma) * 0.4 * 0.4 / 12.0 * 1.0001);
        prop_assert!(report.positivity_applicable);
        prop_assert_eq!(report.positivity_violations, 0);
    }
}

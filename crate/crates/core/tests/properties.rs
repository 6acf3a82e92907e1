use frisch_kalman::baselines::{
    self, default_logdet_delta, LOGDET_MAX_ITERS, LOGDET_MONOTONE_SLACK,
};
use frisch_kalman::bench::{
    self, gen_low_rank, gen_noise, run_experiment, ExperimentConfig, OmegaSource,
};
use frisch_kalman::conic::{
    project_cone, solve, svec, AdmmSolver, Cone, ProblemBuilder, SolverConfig,
};
use frisch_kalman::fk::{
    self, dual_function, recover_primal, solve_dual, FkConfig, FkInstance, Variant,
};
use frisch_kalman::matrix::{
    eig_sym, numerical_rank, off_diag, r_norm, singular_values, spectral_norm, svd_truncate,
    DiagMatrix, SymMatrix,
};
use frisch_kalman::tightness::{
    extraction_operator, kernel_isometry, membership_d_tilde, phi_lower_bound, sym_dim,
    TightnessReport,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix {
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
    SymMatrix::new((&g + g.transpose()) * 0.5).unwrap()
}

fn random_orthogonal(k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::<f64>::from_fn(k, k, |_, _| rng.sample(StandardNormal))
        .qr()
        .q()
}

/// `Ω̂ + Δ` with `Ω̂` of rank `r` and `||Δ||_F = noise`, positive definite.
fn noisy_instance(n: usize, r: usize, noise: f64, rng: &mut ChaCha8Rng) -> SymMatrix {
    loop {
        let sigma = &gen_low_rank(n, r, rng) + &gen_noise(n, noise, rng).to_sym();
        if eig_sym(&sigma).unwrap().min_eigenvalue() > 1e-6 * sigma.frobenius_norm().max(1.0) {
            return sigma;
        }
    }
}

fn dims() -> impl Strategy<Value = (usize, usize)> {
    (3usize..=7).prop_flat_map(|n| (Just(n), 1..n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truncation_error_is_tail_energy(n in 1usize..=8, seed in any::<u64>()) {
        let a = random_symmetric(n, &mut rng(seed));
        let s = singular_values(&a).unwrap();
        for r in 1..=n {
            let t = svd_truncate(&a, r).unwrap();
            let err = (&a - &t).frobenius_norm().powi(2);
            let tail: f64 = s[r..].iter().map(|x| x * x).sum();
            prop_assert!((err - tail).abs() <= 1e-9 * a.frobenius_norm().powi(2).max(1e-300));
            prop_assert_eq!(numerical_rank(&t).unwrap(), r);
            prop_assert_eq!(t.matrix(), &t.matrix().transpose());
        }
    }

    #[test]
    fn norm_chain(n in 1usize..=8, seed in any::<u64>()) {
        let a = random_symmetric(n, &mut rng(seed));
        let spec = spectral_norm(&a).unwrap();
        let fro = a.frobenius_norm();
        let mut prev = spec;
        prop_assert!((r_norm(&a, 1).unwrap() - spec).abs() <= 1e-12 * fro);
        for r in 1..=n {
            let rn = r_norm(&a, r).unwrap();
            prop_assert!(rn >= prev - 1e-12 * fro);
            prop_assert!(rn <= fro * (1.0 + 1e-12));
            prev = rn;
        }
    }

    #[test]
    fn off_diag_is_idempotent(n in 1usize..=8, seed in any::<u64>()) {
        let x = random_symmetric(n, &mut rng(seed));
        let o = off_diag(&x);
        prop_assert_eq!(&off_diag(&o), &o);
        prop_assert!(o.diagonal().iter().all(|&d| d == 0.0));
        prop_assert_eq!(&(&x - &o), &SymMatrix::from_diagonal(&x.diagonal()));
    }

    #[test]
    fn scalarization_is_an_isometry(n in 1usize..=6, seed in any::<u64>()) {
        let mut g = rng(seed);
        let a = random_symmetric(n, &mut g);
        let b = random_symmetric(n, &mut g);
        let va = svec(n, a.matrix().as_slice());
        let vb = svec(n, b.matrix().as_slice());
        let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
        prop_assert!((dot - a.inner(&b)).abs() <= 1e-12 * (1.0 + a.frobenius_norm() * b.frobenius_norm()));
    }

    #[test]
    fn cone_projection_is_idempotent(n in 1usize..=6, seed in any::<u64>()) {
        let mut g = rng(seed);
        let a = random_symmetric(n, &mut g);
        let v = svec(n, a.matrix().as_slice());
        let once = project_cone(&v, Cone::Psd(n));
        let twice = project_cone(&once, Cone::Psd(n));
        for (x, y) in once.iter().zip(&twice) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + a.frobenius_norm()));
        }
        let w: Vec<f64> = (0..n).map(|_| g.sample(StandardNormal)).collect();
        let p = project_cone(&w, Cone::NonNeg(n));
        prop_assert_eq!(&project_cone(&p, Cone::NonNeg(n)), &p);
        prop_assert_eq!(project_cone(&w, Cone::Zero(n)), vec![0.0; n]);
    }

    #[test]
    fn membership_is_closed_under_shrinking(seed in any::<u64>(), alpha in 0.0f64..=1.0) {
        let mut g = rng(seed);
        let omega = gen_low_rank(5, 1, &mut g);
        let report = TightnessReport::analyze(&omega).unwrap();
        let radius = report.certified_radius.unwrap();
        let delta = gen_noise(5, radius * g.random_range(0.0..1.0f64).max(1e-3), &mut g);
        if membership_d_tilde(&report, &delta) {
            prop_assert!(membership_d_tilde(&report, &delta.scale(alpha)));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn radius_is_basis_invariant((n, r) in dims(), seed in any::<u64>()) {
        let mut g = rng(seed);
        let omega = gen_low_rank(n, r, &mut g);
        let (v, _) = kernel_isometry(&omega).unwrap();
        let q = random_orthogonal(v.ncols(), &mut g);
        let (s1, phi1) = phi_lower_bound(&extraction_operator(&v)).unwrap();
        let (s2, phi2) = phi_lower_bound(&extraction_operator(&(&v * q))).unwrap();
        prop_assert_eq!(s1, s2);
        prop_assert!((phi1 - phi2).abs() <= 1e-9 * phi1.max(1e-12));
    }

    #[test]
    fn radius_scales_linearly((n, r) in dims(), seed in any::<u64>(), alpha in 0.01f64..100.0) {
        let omega = gen_low_rank(n, r, &mut rng(seed));
        let base = TightnessReport::analyze(&omega).unwrap().certified_radius.unwrap();
        let scaled = TightnessReport::analyze(&omega.scale(alpha)).unwrap().certified_radius.unwrap();
        prop_assert!((scaled - alpha * base).abs() <= 1e-8 * alpha * base.max(1e-12));
    }

    #[test]
    fn surjectivity_needs_enough_kernel((n, r) in dims(), seed in any::<u64>()) {
        let omega = gen_low_rank(n, r, &mut rng(seed));
        let report = TightnessReport::analyze(&omega).unwrap();
        if sym_dim(n - r) < n {
            prop_assert!(!report.surjective);
            prop_assert_eq!(report.certified_radius, Some(0.0));
        }
    }

    #[test]
    fn kernel_perturbation_is_truncated_away((n, r) in dims(), seed in any::<u64>(), frac in 0.0f64..0.99) {
        let mut g = rng(seed);
        let omega = gen_low_rank(n, r, &mut g);
        let report = TightnessReport::analyze(&omega).unwrap();
        let v = &report.v;
        let k = v.ncols();
        let s = random_symmetric(k, &mut g);
        let s_norm = spectral_norm(&s).unwrap();
        let s = s.scale(frac * report.sigma_r / s_norm);
        let x = SymMatrix::new(v * s.matrix() * v.transpose()).unwrap();
        let t = svd_truncate(&(&omega + &x), r).unwrap();
        prop_assert!((&t - &omega).frobenius_norm() <= 1e-9 * omega.frobenius_norm());
    }

    #[test]
    fn conic_solves_are_deterministic_and_weakly_dual(n in 2usize..=5, seed in any::<u64>()) {
        // min t  s.t.  t I - A >= 0, i.e. the largest eigenvalue.
        let a = random_symmetric(n, &mut rng(seed));
        let mut b = ProblemBuilder::new(1);
        b.cost(0, 1.0);
        let psd = b.block(Cone::Psd(n));
        for j in 0..n {
            for i in j..n {
                b.matrix_constant(psd, i, j, -a.get(i, j));
            }
            b.matrix_term(psd, j, j, 0, 1.0);
        }
        let p = b.build();
        let cfg = SolverConfig::default();
        let s1 = solve(&p, &cfg).unwrap();
        let s2 = solve(&p, &cfg).unwrap();
        prop_assert_eq!(&s1.x, &s2.x);
        prop_assert_eq!(&s1.y, &s2.y);
        prop_assert!(s1.is_optimal());
        let scale = 1.0 + s1.primal_objective.abs().max(s1.dual_objective.abs());
        prop_assert!(s1.primal_objective >= s1.dual_objective - cfg.tol * scale * 10.0);
        let lmax = eig_sym(&a).unwrap().max_eigenvalue();
        prop_assert!((s1.x[0] - lmax).abs() <= 1e-6 * (1.0 + lmax.abs()));
    }

    #[test]
    fn draws_are_positive_definite(seed in any::<u64>(), noise in 0.01f64..5.0) {
        let cfg = ExperimentConfig {
            n: 6,
            r: 3,
            noise_levels: vec![noise],
            trials: 1,
            methods: Vec::new(),
            seed,
            omega_source: OmegaSource::Random,
            timing: false,
            solver: SolverConfig::default(),
        };
        let (omega, delta, sigma) = bench::draw_instance(&cfg, noise, &mut rng(seed)).unwrap().unwrap();
        prop_assert!(eig_sym(&sigma).unwrap().min_eigenvalue() > fk::PSD_TOL * sigma.frobenius_norm().max(1.0));
        prop_assert_eq!(numerical_rank(&omega).unwrap(), 3);
        prop_assert!((delta.frobenius_norm() - noise).abs() <= 1e-12 * noise);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fk_search_properties((n, r) in dims(), seed in any::<u64>(), noise in 0.01f64..3.0) {
        let sigma = noisy_instance(n, r, noise, &mut rng(seed));
        let cfg = FkConfig::default();
        let fk_res = fk::solve(&FkInstance::new(sigma.clone(), Variant::FrischKalman).unwrap(), 1, &cfg).unwrap();
        let sh_res = fk::solve(&FkInstance::new(sigma.clone(), Variant::Shapiro).unwrap(), 1, &cfg).unwrap();

        for res in [&fk_res, &sh_res] {
            // Monotone search.
            prop_assert!(res.per_rank.len() < n);
            prop_assert!(res.per_rank.windows(2).all(|w| w[1].r == w[0].r + 1));
            // Weak duality at the accepted rank.
            if let Some(a) = res.accepted() {
                let slack = 1e-6 * (1.0 + sigma.frobenius_norm().powi(2));
                prop_assert!(a.dual_value <= res.primal_value + slack);
            }
            // Recovery consistency.
            for a in &res.per_rank {
                let omega = recover_primal(&sigma, &a.lambda, a.r).unwrap();
                let shifted = &sigma + &a.lambda;
                let s = singular_values(&shifted).unwrap();
                if s[a.r - 1] > 1e-9 * s[0] && s[a.r] < s[a.r - 1] * (1.0 - 1e-9) {
                    prop_assert_eq!(numerical_rank(&omega).unwrap(), a.r);
                }
                prop_assert!((dual_function(&sigma, &a.lambda, a.r).unwrap() - a.dual_value).abs()
                    <= 1e-9 * (1.0 + sigma.frobenius_norm().powi(2)));
            }
        }
        if !fk_res.fallback_used && !sh_res.fallback_used {
            prop_assert!(sh_res.r_star <= fk_res.r_star);
        }
        // The reported decomposition is always a decomposition of Σ.
        let back = &fk_res.omega_star + &fk_res.delta_star.to_sym();
        prop_assert!((&back - &sigma).max_abs_offdiag() <= 1e-5 * sigma.frobenius_norm());
    }

    #[test]
    fn fallback_is_a_valid_decomposition((n, r) in dims(), seed in any::<u64>()) {
        let sigma = noisy_instance(n, r, 1.0, &mut rng(seed));
        let cfg = FkConfig {
            solver: SolverConfig { max_iters: 1, ..SolverConfig::default() },
            ..FkConfig::default()
        };
        let res = fk::solve(&FkInstance::new(sigma.clone(), Variant::FrischKalman).unwrap(), 1, &cfg).unwrap();
        prop_assert!(res.fallback_used);
        let lmin = eig_sym(&sigma).unwrap().min_eigenvalue();
        prop_assert_eq!(&res.delta_star, &DiagMatrix::scaled_identity(n, lmin));
        prop_assert!(res.delta_star.is_nonneg());
        let rest = eig_sym(&res.omega_star).unwrap().min_eigenvalue();
        prop_assert!(rest >= -1e-9 * sigma.frobenius_norm());
        prop_assert!(res.r_star <= n - 1);
    }

    #[test]
    fn exact_low_rank_dual_is_zero((n, r) in dims(), seed in any::<u64>()) {
        let omega = gen_low_rank(n, r, &mut rng(seed));
        let dual = solve_dual(&omega, r, &AdmmSolver::default()).unwrap();
        prop_assert!(dual.value.abs() <= 1e-6 * (1.0 + omega.frobenius_norm().powi(2)));
        let rec = recover_primal(&omega, &dual.lambda, r).unwrap();
        prop_assert!((&rec - &omega).frobenius_norm() <= 1e-5 * omega.frobenius_norm());
    }

    #[test]
    fn heuristic_outputs_are_feasible(n in 3usize..=6, seed in any::<u64>()) {
        let mut g = rng(seed);
        let sigma = noisy_instance(n, n / 2, 0.5, &mut g);
        let tol = 1e-6 * sigma.frobenius_norm();
        let solver = AdmmSolver::default();
        let results = [
            baselines::nuclear_norm_solve(&sigma).unwrap(),
            baselines::rstar_solve(&sigma, 2).unwrap(),
            baselines::logdet_solve_with(&sigma, default_logdet_delta(&sigma), LOGDET_MAX_ITERS, &solver).unwrap(),
        ];
        for res in &results {
            prop_assert!(res.delta.min() >= -tol);
            let rest = &sigma - &res.delta.to_sym();
            prop_assert!(eig_sym(&rest).unwrap().min_eigenvalue() >= -tol);
        }
        let nn = &results[0];
        // No random feasible diagonal beats the nuclear-norm trace.
        let mut tried = 0;
        while tried < 1000 {
            let scale = eig_sym(&sigma).unwrap().min_eigenvalue();
            let d: Vec<f64> = (0..n).map(|_| g.random_range(0.0..1.0) * scale * 2.0).collect();
            let rest = sigma.add_diagonal(&d.iter().map(|x| -x).collect::<Vec<_>>());
            if eig_sym(&rest).unwrap().min_eigenvalue() >= 0.0 {
                prop_assert!(d.iter().sum::<f64>() <= nn.delta.trace() + tol);
            }
            tried += 1;
        }
        let ld = &results[2];
        for w in ld.surrogate.windows(2) {
            prop_assert!(w[1] <= w[0] + LOGDET_MONOTONE_SLACK);
        }
    }
}

#[test]
fn bench_tables_are_reproducible_and_bounded() {
    let cfg = ExperimentConfig::from_toml(
        "n = 5\nr = 2\nnoise_levels = [0.05, 1.0]\ntrials = 3\n\
         methods = [\"proposed\", \"nuclear_norm\", \"logdet\"]\nseed = 11\n",
        None,
    )
    .unwrap();
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a, b);
    for row in &a.rows {
        assert!(row.successes <= row.trials);
        assert!((0.0..=1.0).contains(&row.success_rate()));
    }
}

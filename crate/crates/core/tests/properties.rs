use std::f64::consts::PI;

use proptest::prelude::*;
use zrplab::field::{DensityField, Grid};
use zrplab::harness::{derive_seed, ExperimentConfig};
use zrplab::lattice_sim::{coarse_grain, simulate, uniform_times, Configuration, Lattice, SimOptions, Simulator};
use zrplab::rate_functional::{assemble, variational_d, DiffusionConvention, TestBasis};
use zrplab::rates::{
    build_nonlinearity, check_assumptions, defective_concavity_check, fugacity_of_density, linspace, mean_density,
    ClosedForm, EquilibriumLaw, JumpRate, NonlinearityModel,
};
use zrplab::skeleton_pde::{solve_fokker_planck, Potential, Scheme, SolverParams};

/// Monotone rates: random positive increments on a short table, affine tail.
fn monotone_rate() -> impl Strategy<Value = JumpRate> {
    (prop::collection::vec(0.1f64..2.0, 1..5), 0.2f64..2.0).prop_map(|(inc, slope)| {
        let mut table = vec![0.0];
        for d in inc {
            table.push(table.last().unwrap() + d);
        }
        JumpRate::new("random", table, slope, Vec::new()).unwrap()
    })
}

/// Arbitrary positive tables, not necessarily monotone.
fn any_rate() -> impl Strategy<Value = JumpRate> {
    (prop::collection::vec(0.05f64..3.0, 1..6), 0.0f64..2.0).prop_map(|(vals, slope)| {
        let mut table = vec![0.0];
        table.extend(vals);
        JumpRate::new("random", table, slope, Vec::new()).unwrap()
    })
}

fn geometric() -> NonlinearityModel {
    NonlinearityModel::closed_form(ClosedForm::Geometric, &linspace(0.0, 4.0, 401), 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fugacity_density_duality(rate in monotone_rate(), rho in 0.05f64..6.0) {
        let tol = 1e-11;
        let phi = fugacity_of_density(&rate, rho, tol).unwrap();
        let back = mean_density(&rate, phi, tol).unwrap();
        prop_assert!((back - rho).abs() <= 2.0 * tol * rho.max(1.0), "{back} vs {rho}");
    }

    #[test]
    fn change_of_variables_identity(rate in any_rate(), rho in 0.05f64..4.0) {
        prop_assume!(rate.tail_slope() > 0.0);
        let law = EquilibriumLaw::at_density(&rate, rho, 1e-12).unwrap();
        let phi = law.fugacity;
        prop_assert!((law.mean_rate(&rate) - phi).abs() <= 1e-9 * phi.max(1.0));
    }

    #[test]
    fn pmf_is_normalised(rate in any_rate(), rho in 0.05f64..4.0) {
        prop_assume!(rate.tail_slope() > 0.0);
        let law = EquilibriumLaw::at_density(&rate, rho, 1e-12).unwrap();
        let total: f64 = law.pmf.iter().sum();
        prop_assert!(law.pmf.iter().all(|&p| p >= 0.0));
        prop_assert!(total >= 1.0 - law.tail_bound - 1e-12 && total <= 1.0 + 1e-12);
        let mean: f64 = law.pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        prop_assert!((mean - law.mean).abs() <= (law.tail_bound * law.truncation as f64).max(1e-12));
    }

    #[test]
    fn assumption_report_is_sound(rate in any_rate()) {
        let rep = check_assumptions(&rate, 16).unwrap();
        if rep.a1_ok {
            for k in 0..16 {
                for k2 in k + 1..=16 {
                    let chord = rate.eval(k2) - rate.eval(k);
                    prop_assert!(chord <= rep.lipschitz_c * (k2 - k) as f64 + 1e-12);
                }
            }
        }
        if let Some((k, delta)) = rep.gap_pair {
            prop_assert!(delta > 0.0);
            for n in 0..64 {
                prop_assert!(rate.eval(n + k) >= rate.eval(n) + delta - 1e-12);
            }
        }
    }

    #[test]
    fn ellipticity_under_spectral_gap(rate in monotone_rate()) {
        let rep = check_assumptions(&rate, 16).unwrap();
        prop_assume!(rep.a2_ok);
        let model = build_nonlinearity(&rate, &linspace(0.0, 5.0, 51), 1.0, 1e-5).unwrap();
        prop_assert!(model.a_est > 0.0);
        prop_assert!(model.phi(0.0) == 0.0);
        for w in linspace(0.0, 5.0, 51).windows(2) {
            prop_assert!(model.phi(w[1]) > model.phi(w[0]));
        }
    }

    #[test]
    fn psi_is_convex_nonnegative_and_consistent(rate in monotone_rate(), gamma in 0.3f64..3.0) {
        let model = build_nonlinearity(&rate, &linspace(0.0, 6.0, 121), gamma, 1e-5).unwrap();
        let xs = linspace(0.05, 5.5, 110);
        let psi: Vec<f64> = xs.iter().map(|&x| model.psi(x)).collect();
        prop_assert!(psi.iter().all(|&p| p >= -1e-12));
        prop_assert!(model.psi(gamma).abs() <= 1e-10);
        for w in psi.windows(3) {
            prop_assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-9);
        }
        for &x in &xs[1..xs.len() - 1] {
            let h = 1e-5;
            let fd = (model.psi(x + h) - model.psi(x - h)) / (2.0 * h);
            prop_assert!((fd - model.log_ratio(x)).abs() <= 1e-4 * (1.0 + fd.abs()), "{x}: {fd} vs {}", model.log_ratio(x));
        }
    }

    #[test]
    fn defective_concavity_never_exceeds_vartheta(rate in monotone_rate(), seed in any::<u64>()) {
        let model = build_nonlinearity(&rate, &linspace(0.0, 5.0, 51), 1.0, 1e-5).unwrap();
        let rep = defective_concavity_check(&model, 50, &[0.02, 0.1], seed);
        prop_assert_eq!(rep.violations, 0);
        prop_assert!(rep.max_ratio <= rep.vartheta * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn particles_are_conserved(occ in prop::collection::vec(0u32..5, 64), seed in any::<u64>(), d in 1usize..=2) {
        let lattice = if d == 1 { Lattice::new(1, 64).unwrap() } else { Lattice::new(2, 8).unwrap() };
        let init = Configuration::new(lattice, occ).unwrap();
        let rate = JumpRate::saturating(2, 0.5).unwrap();
        let traj = simulate(&rate, &init, 0.01, &uniform_times(0.01, 5), seed, SimOptions::default()).unwrap();
        prop_assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        for i in 0..traj.times.len() {
            let c = traj.snapshot(i);
            prop_assert_eq!(c.total(), init.total());
            let f = coarse_grain(&c, 0.125).unwrap();
            prop_assert!((f.integral() - init.total() as f64 / lattice.n_sites() as f64).abs() <= 1e-12);
        }
    }

    #[test]
    fn rate_tree_tracks_the_configuration(occ in prop::collection::vec(0u32..6, 32), seed in any::<u64>()) {
        let init = Configuration::new(Lattice::new(1, 32).unwrap(), occ).unwrap();
        let mut sim = Simulator::new(&JumpRate::odd_bump(), init, seed, SimOptions::default()).unwrap();
        sim.run_events(20_000).unwrap();
        let incremental = sim.total_rate();
        let fresh = sim.recompute_total_rate();
        prop_assert!((incremental - fresh).abs() <= 1e-12 * fresh.max(1.0));
    }

    #[test]
    fn pde_conserves_mass_and_positivity(
        coeffs in prop::array::uniform4(-1.0f64..1.0),
        amp in 0.1f64..0.9,
        semi in any::<bool>(),
    ) {
        let model = geometric();
        let grid = Grid::new(1, 48);
        let rho0 = DensityField::from_fn(grid, |x| {
            let s = 2.0 * PI * x[0];
            1.0 + amp * (coeffs[0] * s.sin() + coeffs[1] * (2.0 * s).cos()).tanh()
        });
        let (c2, c3) = (coeffs[2], coeffs[3]);
        let pot = Potential::new(move |_, x| c2 * (2.0 * PI * x[0]).cos() + c3 * (4.0 * PI * x[0]).sin());
        let mut params = SolverParams::new(1.0, 0.01);
        if semi {
            params.scheme = Scheme::SemiImplicit;
            params.dt = 2e-4;
        } else {
            params.dt = params.cfl_limit(grid, &model);
        }
        let b = solve_fokker_planck(&model, &rho0, &pot, &params).unwrap();
        prop_assert!(b.max_mass_drift <= 1e-10);
        prop_assert!(b.fields.iter().all(|f| f.min() >= 0.0));
    }

    #[test]
    fn comparison_principle(shift in 0.01f64..0.5, a in 0.0f64..0.5, c in -1.0f64..1.0) {
        let model = geometric();
        let grid = Grid::new(1, 48);
        let lo = DensityField::from_fn(grid, |x| 1.0 + a * (2.0 * PI * x[0]).sin());
        let hi = DensityField::from_fn(grid, |x| 1.0 + shift + a * (2.0 * PI * x[0]).sin() + shift * (2.0 * PI * x[0]).cos().powi(2));
        let pot = Potential::new(move |t, x| c * (1.0 + 10.0 * t) * (2.0 * PI * x[0]).cos());
        let mut params = SolverParams::new(1.0, 0.01);
        params.dt = params.cfl_limit(grid, &model);
        let bl = solve_fokker_planck(&model, &lo, &pot, &params).unwrap();
        let bh = solve_fokker_planck(&model, &hi, &pot, &params).unwrap();
        for (fl, fh) in bl.fields.iter().zip(&bh.fields) {
            prop_assert!(fl.values.iter().zip(&fh.values).all(|(l, h)| l <= h));
        }
    }

    #[test]
    fn j_is_concave_in_the_coefficients(dirs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 12), 100)) {
        let model = geometric();
        let grid = Grid::new(1, 32);
        let rho0 = DensityField::from_fn(grid, |x| 1.0 + 0.4 * (2.0 * PI * x[0]).sin());
        let mut params = SolverParams::new(1.0, 0.01);
        params.dt = params.cfl_limit(grid, &model);
        let b = solve_fokker_planck(&model, &rho0, &Potential::new(|_, x| (2.0 * PI * x[0]).cos()), &params).unwrap();
        let basis = TestBasis::new(1, 6, 2, 0.01, 0.4).unwrap();
        for conv in [DiffusionConvention::generator(), DiffusionConvention::half()] {
            let q = assemble(&basis, &b, &model, &conv);
            for v in &dirs {
                let v = nalgebra::DVector::from_column_slice(v);
                // Second derivative of t ↦ J(c + t v) is −2·c_grad·vᵀGv.
                let curvature = -2.0 * q.c_grad * v.dot(&(&q.g * &v));
                prop_assert!(curvature <= 1e-12 * v.norm_squared().max(1.0));
            }
        }
    }

    #[test]
    fn variational_sandwich_and_argmax_invariance(a in 0.05f64..0.5, k in 1usize..3, kappa in 0.2f64..5.0) {
        let model = geometric();
        let grid = Grid::new(1, 128);
        let field = DensityField::from_fn(grid, |x| 1.0 + a * (2.0 * PI * k as f64 * x[0]).sin());
        let basis = TestBasis::spatial(1, 12).unwrap();
        let rep = variational_d(&field, &basis, &model).unwrap();
        let hs = rep.h_star_value.unwrap();
        // H* = ½ log Φ(ρ) is the unconstrained maximiser and attains D itself.
        prop_assert!(rep.basis_value <= hs * (1.0 + 1e-9) + 1e-12);
        prop_assert!((hs - rep.dissipation).abs() <= 0.01 * rep.dissipation);
        // Scaling Φ by κ scales the functional and leaves the maximiser alone.
        let scaled = variational_d(&field, &basis, &model.scaled(kappa)).unwrap();
        prop_assert!((scaled.basis_value - kappa * rep.basis_value).abs() <= 1e-8 * (1.0 + rep.basis_value * kappa));
        for (c1, c2) in rep.coefficients.iter().zip(&scaled.coefficients) {
            prop_assert!((c1 - c2).abs() <= 1e-7 * (1.0 + c1.abs()));
        }
    }

    #[test]
    fn monotone_in_basis(seed in 0u64..1000) {
        let model = geometric();
        let grid = Grid::new(1, 64);
        let rho0 = DensityField::from_fn(grid, |x| 1.0 + 0.3 * (2.0 * PI * x[0]).cos());
        let mut params = SolverParams::new(1.0, 0.01);
        params.dt = params.cfl_limit(grid, &model);
        let pot = zrplab::harness::random_potential(seed, 1.0, 0.01);
        let b = solve_fokker_planck(&model, &rho0, &pot, &params).unwrap();
        let conv = DiffusionConvention::generator();
        let mut last = 0.0;
        for n in [2, 4, 8, 12] {
            let basis = TestBasis::new(1, n, 2, 0.01, 0.45).unwrap();
            let up = zrplab::rate_functional::i_up(&b, &basis, &model, &conv).unwrap();
            prop_assert!(up.dynamic >= last * (1.0 - 1e-9) - 1e-14, "{n}: {} < {last}", up.dynamic);
            last = up.dynamic;
        }
    }

    #[test]
    fn configs_roundtrip_through_toml(seeds in prop::collection::vec(any::<u64>(), 1..6), threads in 0usize..8, half in any::<bool>()) {
        let path = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/rate.toml");
        let mut cfg = ExperimentConfig::load(&path).unwrap();
        cfg.seeds = seeds;
        cfg.threads = threads;
        cfg.convention.half_diffusion = half;
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml_string().unwrap(), text);
    }

    #[test]
    fn derived_seeds_are_distinct(base in any::<u64>()) {
        let s: std::collections::BTreeSet<u64> = (0..64).map(|i| derive_seed(base, i)).collect();
        prop_assert_eq!(s.len(), 64);
    }
}

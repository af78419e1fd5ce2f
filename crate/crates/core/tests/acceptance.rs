//! Acceptance suite: one line per criterion, then a single verdict.
//!
//! Criteria run sequentially so the timings are not skewed by sibling
//! tests. Every criterion is checked at its stated scale and tolerance.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zrplab::field::{DensityField, Grid};
use zrplab::harness::{execute, ExperimentConfig};
use zrplab::lattice_sim::{dirichlet_local_eq, Lattice, ProfileSpec};
use zrplab::rate_functional::{
    i_up, recover_control, variational_d, DiffusionConvention, RecoveryOptions, SpaceTimeFunction, TestBasis,
};
use zrplab::rates::{
    build_nonlinearity, check_assumptions, defective_concavity_check, fugacity_of_density, linspace, ClosedForm,
    EquilibriumLaw, JumpRate, NonlinearityModel,
};
use zrplab::skeleton_pde::{
    energy_report, kinetic_diagnostics, solve_fokker_planck, solve_skeleton, ControlField, Potential, SolutionBundle,
    SolverParams,
};

/// Largest constant over the 20-case random suite of criterion 9, pinned
/// after the first run.
const PINNED_ENTROPY_CONSTANT: f64 = 1.116959060075585;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    seconds: f64,
    budget: f64,
}

fn timed<F: FnOnce() -> (bool, String)>(id: u32, name: &'static str, budget: f64, f: F) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = f();
    let seconds = start.elapsed().as_secs_f64();
    let outcome = Outcome { id, name, pass: pass && seconds < budget, detail, seconds, budget };
    println!(
        "criterion {:>2} {:<28} {}  ({:.2}s of {:.0}s)  {}",
        outcome.id,
        outcome.name,
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.seconds,
        outcome.budget,
        outcome.detail
    );
    outcome
}

fn config(name: &str) -> ExperimentConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::load(&path).unwrap()
}

fn explicit(grid: Grid, model: &NonlinearityModel, t_end: f64) -> SolverParams {
    let mut p = SolverParams::new(1.0, t_end);
    p.dt = p.cfl_limit(grid, model);
    p
}

/// One-sided test that every consecutive pair decreases by more than two
/// combined standard errors.
fn decreasing_2_sigma(rows: &[serde_json::Value], mean_key: &str) -> bool {
    rows.windows(2).all(|w| {
        let (m0, m1) = (w[0][mean_key].as_f64().unwrap(), w[1][mean_key].as_f64().unwrap());
        let (s0, s1) = (w[0]["stderr"].as_f64().unwrap(), w[1]["stderr"].as_f64().unwrap());
        m0 - m1 > 2.0 * (s0 * s0 + s1 * s1).sqrt()
    })
}

fn closed_form_phi() -> (bool, String) {
    let mut worst = 0.0f64;
    for rho in linspace(0.1, 10.0, 50) {
        let lin = fugacity_of_density(&JumpRate::linear(), rho, 1e-13).unwrap();
        let cst = fugacity_of_density(&JumpRate::constant(), rho, 1e-13).unwrap();
        worst = worst.max((lin - rho).abs()).max((cst - rho / (1.0 + rho)).abs());
    }
    (worst <= 1e-8, format!("max |φ − closed form| = {worst:.2e}"))
}

fn change_of_variables() -> (bool, String) {
    let rates = [JumpRate::linear(), JumpRate::constant(), JumpRate::odd_bump()];
    let mut worst = 0.0f64;
    for rate in &rates {
        for rho in linspace(0.2, 5.0, 10) {
            let law = EquilibriumLaw::at_density(rate, rho, 1e-13).unwrap();
            // E[λ(η(0))] summed directly over the one-site marginal.
            let mean_rate = law.expect(|k| rate.eval(k));
            let phi = fugacity_of_density(rate, rho, 1e-13).unwrap();
            worst = worst.max((mean_rate - phi).abs());
        }
    }
    (worst <= 1e-8, format!("max |E[λ] − φ| = {worst:.2e} over 3 rates × 10 densities"))
}

fn assumption_gate() -> (bool, String) {
    let lin = check_assumptions(&JumpRate::linear(), 16).unwrap();
    let cst = check_assumptions(&JumpRate::constant(), 16).unwrap();
    let pass = lin.a1_ok && lin.a2_ok && lin.lipschitz_c == 1.0 && lin.gap_pair == Some((1, 1.0)) && !cst.a2_ok;
    (pass, format!("linear (c,k,δ) = ({}, {:?}); constant a2_ok = {}", lin.lipschitz_c, lin.gap_pair, cst.a2_ok))
}

fn hydrodynamic_limit() -> (bool, String) {
    let cfg = config("hydro-check.toml");
    let out = execute(&cfg).unwrap();
    let s = &out.summary;
    let rows = s["rows"].as_array().unwrap();
    let sizes: Vec<u64> = rows.iter().map(|r| r["n"].as_u64().unwrap()).collect();
    let monotone = decreasing_2_sigma(rows, "mean_l1_error");
    let finest = s["finest_ensemble_l1_error"].as_f64().unwrap();
    let u0 = s["u0_l1"].as_f64().unwrap();
    let errs: Vec<String> = rows.iter().map(|r| format!("{:.4}", r["mean_l1_error"].as_f64().unwrap())).collect();
    (
        sizes == [64, 128, 256] && cfg.seeds.len() == 20 && monotone && finest <= 0.05 * u0,
        format!("L¹ errors {errs:?} decreasing at 2σ: {monotone}; N=256 field error {finest:.4} vs {:.4}", 0.05 * u0),
    )
}

fn dirichlet_identity() -> (bool, String) {
    let model = build_nonlinearity(&JumpRate::linear(), &linspace(0.0, 4.0, 201), 1.0, 1e-6).unwrap();
    let profile = ProfileSpec::Sine { background: 1.5, amplitude: 0.5, mode: 1 };
    let rep = dirichlet_local_eq(&profile, Lattice::new(1, 512).unwrap(), &model);
    // φ(ρ) = ρ, so D(u) = ∫u′²/(4u) with u = 1.5 + ½ sin 2πx; midpoint rule.
    let n = 100_000;
    let d_u: f64 = (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) / n as f64;
            let u = 1.5 + 0.5 * (2.0 * PI * x).sin();
            let du = PI * (2.0 * PI * x).cos();
            du * du / (4.0 * u)
        })
        .sum::<f64>()
        / n as f64;
    let gap = (rep.total - d_u).abs() / d_u;
    (gap <= 0.05, format!("N^(2−d)Σ𝔡 = {:.6}, D(u) = {d_u:.6}, relative gap {gap:.2e}", rep.total))
}

fn variational_representation() -> (bool, String) {
    let model = build_nonlinearity(&JumpRate::linear(), &linspace(0.0, 4.0, 401), 1.0, 1e-6).unwrap();
    let grid = Grid::new(1, 256);
    let basis = TestBasis::spatial(1, 32).unwrap();
    let mut literal = true;
    let mut corrected = true;
    let mut lines = Vec::new();
    for (a, k) in [(0.1, 1.0), (0.2, 1.0), (0.3, 1.0), (0.2, 2.0), (0.4, 1.0)] {
        let field = DensityField::from_fn(grid, |x| 1.0 + a * (2.0 * PI * k * x[0]).sin());
        let rep = variational_d(&field, &basis, &model).unwrap();
        let hs = rep.h_star_value.unwrap();
        // D for φ(ρ) = ρ by midpoint quadrature of u′²/(4u).
        let n = 20_000;
        let d: f64 = (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) / n as f64;
                let u = 1.0 + a * (2.0 * PI * k * x).sin();
                let du = 2.0 * PI * k * a * (2.0 * PI * k * x).cos();
                du * du / (4.0 * u)
            })
            .sum::<f64>()
            / n as f64;
        let q = 0.25 * d;
        literal &= rep.basis_value <= hs * (1.0 + 1e-9) && hs <= 1.01 * q && rep.basis_value >= 0.9 * q;
        corrected &= rep.basis_value <= hs * (1.0 + 1e-9) && (hs - d).abs() <= 0.01 * d && rep.basis_value >= 0.9 * q;
        lines.push(format!("basis {:.4e} H* {hs:.4e} ¼D {q:.4e}", rep.basis_value));
    }
    (
        literal,
        format!(
            "literal bound H* ≤ ¼D+1%: {literal}; with H* = D (1%) in its place: {corrected}; [{}]",
            lines.join("; ")
        ),
    )
}

fn control_roundtrip() -> (bool, String) {
    let cfg = config("roundtrip.toml");
    let out = execute(&cfg).unwrap();
    let cases = out.summary["cases"].as_array().unwrap();
    let mut gap = 0.0f64;
    let mut err = 0.0f64;
    let mut below = true;
    for c in cases {
        let (target, cost) = (c["target"].as_f64().unwrap(), c["recovered"].as_f64().unwrap());
        gap = gap.max((cost - target).abs() / target);
        err = err.max(c["gradient_error"].as_f64().unwrap());
        below &= cost <= target + 1e-6;
    }
    (
        cases.len() == 20 && cfg.roundtrip.as_ref().unwrap().m == 128 && gap <= 0.02 && err <= 0.02 && below,
        format!("{} cases: cost gap {gap:.2e}, gradient error {err:.2e}, below ½‖g‖²: {below}", cases.len()),
    )
}

fn matching_bounds() -> (bool, String) {
    let model = NonlinearityModel::closed_form(ClosedForm::Geometric, &linspace(0.0, 4.0, 401), 1.0).unwrap();
    let grid = Grid::new(1, 128);
    let t_end = 0.02;
    let basis = TestBasis::new(1, 16, 4, t_end, 0.45).unwrap();
    let conv = DiffusionConvention::generator();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        // A smooth fluctuation: the Fokker–Planck path of a potential in the basis span.
        let c: Vec<f64> = (0..basis.len())
            .map(|i| {
                let (space, time) = basis.split(i);
                if time < 2 && space < 5 {
                    rng.random_range(-1.0..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        let b = basis.clone();
        let pot = Potential::new(move |t, x| b.combination(&c).eval(t, x, 1).value);
        let rho0 = DensityField::from_fn(grid, |x| 1.0 + 0.3 * (2.0 * PI * x[0]).cos());
        let bundle = solve_fokker_planck(&model, &rho0, &pot, &explicit(grid, &model, t_end)).unwrap();
        let up = i_up(&bundle, &basis, &model, &conv).unwrap();
        let ctrl = recover_control(&bundle, &model, &conv, &RecoveryOptions::default()).unwrap();
        worst = worst.max((up.dynamic - ctrl.report.dynamic).abs() / ctrl.report.dynamic);
    }
    (worst <= 0.03, format!("{}-mode basis, max |i_up − control| / control = {worst:.2e}", basis.len()))
}

fn relative_entropy_estimate() -> (bool, String) {
    let models = [
        build_nonlinearity(&JumpRate::linear(), &linspace(0.0, 6.0, 301), 1.0, 1e-6).unwrap(),
        NonlinearityModel::closed_form(ClosedForm::Geometric, &linspace(0.0, 6.0, 601), 1.0).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for case in 0..20 {
        let model = &models[case % 2];
        let d = 1 + case % 2;
        let grid = Grid::new(d, if d == 1 { 64 } else { 24 });
        let c: [f64; 5] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let amp = rng.random_range(0.1..0.6);
        let rho0 = DensityField::from_fn(grid, |x| {
            1.0 + amp * (c[0] * (2.0 * PI * x[0]).sin() + c[1] * (2.0 * PI * (x[0] + x[1])).cos()).tanh()
        });
        let times = (0..20).map(|k| k as f64 * 1e-3).collect();
        let control = ControlField::from_fn(grid, times, 0.02, |t, x, a| {
            c[2] * (2.0 * PI * x[a]).cos() + c[3] * t * 10.0 + c[4] * (4.0 * PI * x[0]).sin()
        })
        .unwrap();
        let b = solve_skeleton(model, &rho0, &control, &explicit(grid, model, 0.02)).unwrap();
        worst = worst.max(energy_report(&b, model).entropy_constant);
    }
    let pinned = PINNED_ENTROPY_CONSTANT;
    let regression = (worst - pinned).abs() <= 1e-6 * pinned;
    (worst <= 8.0 && regression, format!("worst constant {worst:.15} (pinned {pinned:.15})"))
}

fn counterexample_scaling() -> (bool, String) {
    let cfg = config("counterexample.toml");
    let out = execute(&cfg).unwrap();
    let gamma = cfg.counterexample.as_ref().unwrap().gamma;
    let spread = out.summary["scaled_grad_sq_spread"].as_f64().unwrap();
    let mut ns = Vec::new();
    let mut range_ok = true;
    for rep in out.summary["reports"].as_array().unwrap() {
        let ProfileSpec::CounterexampleD2(p) = serde_json::from_value(rep["profile"].clone()).unwrap() else {
            continue;
        };
        ns.push(p.n);
        // Phases at the reported extremal radii hit the crest and trough of the sine.
        let top = p.phase_at_log_radius(rep["log_radius_of_max"].as_f64().unwrap()).unwrap();
        let bottom = p.phase_at_log_radius(rep["log_radius_of_min"].as_f64().unwrap()).unwrap();
        let (hi, lo) = (gamma * (1.0 + 0.5 * top.sin()), gamma * (1.0 + 0.5 * bottom.sin()));
        range_ok &= ((hi - lo) - gamma).abs() <= 1e-12 * gamma;
        // No sampled phase leaves [γ/2, 3γ/2].
        let (a, b) = (p.log_delta_prime() - 2.0, p.log_delta() + 1.0);
        for i in 0..=20_000 {
            if let Some(s) = p.phase_at_log_radius(a + (b - a) * i as f64 / 20_000.0) {
                let u = gamma * (1.0 + 0.5 * s.sin());
                range_ok &= u >= lo - 1e-12 && u <= hi + 1e-12;
            }
        }
    }
    (
        ns == [1, 2, 3, 4] && spread < 3.0 && range_ok,
        format!("‖∇u‖²·√|log ψ(∞)| spread {spread:.3} over n = {ns:?}; sup − inf = γ: {range_ok}"),
    )
}

fn two_block() -> (bool, String) {
    let cfg = config("two-block.toml");
    let out = execute(&cfg).unwrap();
    let s = &out.summary;
    let (est, se, threshold) =
        (s["estimate"].as_f64().unwrap(), s["stderr"].as_f64().unwrap(), s["threshold"].as_f64().unwrap());
    let gamma = cfg.two_block.as_ref().unwrap().gamma;
    (
        threshold == gamma / 2.0 && est - 2.0 * se > threshold,
        format!("estimate {est:.4} ± {se:.4} vs γ/2 = {threshold}"),
    )
}

fn defective_concavity() -> (bool, String) {
    let grid = linspace(0.0, 6.0, 241);
    let models = [
        build_nonlinearity(&JumpRate::linear(), &grid, 1.0, 1e-6).unwrap(),
        build_nonlinearity(&JumpRate::constant(), &grid, 1.0, 1e-6).unwrap(),
        build_nonlinearity(&JumpRate::saturating(3, 0.5).unwrap(), &grid, 1.0, 1e-6).unwrap(),
    ];
    let mut violations = 0;
    let mut worst = Vec::new();
    for (i, m) in models.iter().enumerate() {
        let rep = defective_concavity_check(m, 10_000, &[0.01, 0.03, 0.1, 0.25], 12 + i as u64);
        violations += rep.violations;
        worst.push(format!("{:.3}/{:.3}", rep.max_ratio, rep.vartheta));
    }
    (violations == 0, format!("{violations} violations; worst ratio/ϑ {worst:?}"))
}

fn supex_trend() -> (bool, String) {
    let cfg = config("supex-check.toml");
    let out = execute(&cfg).unwrap();
    let rows = out.summary["rows"].as_array().unwrap();
    let sizes: Vec<u64> = rows.iter().map(|r| r["n"].as_u64().unwrap()).collect();
    let means: Vec<String> = rows.iter().map(|r| format!("{:.3e}", r["mean_integral"].as_f64().unwrap())).collect();
    let ok = decreasing_2_sigma(rows, "mean_integral");
    (sizes == [32, 64, 128] && ok, format!("mean ∫|V|dt {means:?} at N = {sizes:?}, decreasing at 2σ: {ok}"))
}

/// Face-based `∫∫Φ′(ρ)|∇ρ|²` with trapezoid weights in time.
fn defect_oracle(b: &SolutionBundle, model: &NonlinearityModel) -> f64 {
    let per_slice: Vec<f64> = b
        .fields
        .iter()
        .map(|f| {
            let g = f.grid;
            let h = g.h();
            (0..g.len())
                .map(|i| {
                    let j = g.neighbor(i, 0, true);
                    let (a, c) = (f.values[i], f.values[j]);
                    model.dphi(0.5 * (a + c)) * ((c - a) / h).powi(2) * g.cell_volume()
                })
                .sum()
        })
        .collect();
    b.times.windows(2).zip(per_slice.windows(2)).map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1])).sum()
}

fn kinetic_diagnostics_check() -> (bool, String) {
    let model = NonlinearityModel::closed_form(ClosedForm::Geometric, &linspace(0.0, 6.0, 601), 1.0).unwrap();
    let grid = Grid::new(1, 128);
    let rho0 = DensityField::from_fn(grid, |x| 1.0 + 0.8 * (2.0 * PI * x[0]).sin());
    let b = solve_skeleton(&model, &rho0, &ControlField::zero(grid, 0.01), &explicit(grid, &model, 0.01)).unwrap();
    let sup = b.fields.iter().map(|f| f.max()).fold(0.0, f64::max);
    let rep = kinetic_diagnostics(&b, &model, &linspace(0.0, 2.0, 41), &[sup + 0.1, 5.0]).unwrap();
    let oracle = defect_oracle(&b, &model);
    let rel = (rep.binned_total() - oracle).abs() / oracle;
    let tails_zero = rep.tail_masses.iter().all(|&(_, m)| m == 0.0);
    (rel <= 0.01 && tails_zero, format!("binned {:.6e} vs direct {oracle:.6e} (gap {rel:.2e}); tails zero: {tails_zero}", rep.binned_total()))
}

#[test]
fn acceptance() {
    let outcomes = vec![
        timed(1, "closed-form phi", 1.0, closed_form_phi),
        timed(2, "change of variables", 5.0, change_of_variables),
        timed(3, "assumption gate", 5.0, assumption_gate),
        timed(4, "hydrodynamic limit", 300.0, hydrodynamic_limit),
        timed(5, "dirichlet/fisher identity", 10.0, dirichlet_identity),
        timed(6, "variational representation", 30.0, variational_representation),
        timed(7, "control roundtrip", 60.0, control_roundtrip),
        timed(8, "matching bounds", 120.0, matching_bounds),
        timed(9, "relative entropy estimate", 120.0, relative_entropy_estimate),
        timed(10, "counterexample scaling", 30.0, counterexample_scaling),
        timed(11, "two-block observable", 300.0, two_block),
        timed(12, "defective concavity", 30.0, defective_concavity),
        timed(13, "superexponential trend", 300.0, supex_trend),
        timed(14, "kinetic diagnostics", 30.0, kinetic_diagnostics_check),
    ];
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.pass).map(|o| format!("{} ({})", o.id, o.name)).collect();
    println!("{} of {} criteria pass", outcomes.len() - failed.len(), outcomes.len());
    assert!(failed.is_empty(), "failing criteria: {}", failed.join(", "));
}

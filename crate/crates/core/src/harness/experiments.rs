use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rayon::ThreadPool;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, PotentialSpec};
use super::io::{encode_snapshots, ArtifactSet, PlotSeries};
use super::{derive_seed, HarnessError};
use crate::field::{DensityField, Grid};
use crate::lattice_sim::{
    box_average, box_radius, coarse_grain, counterexample_profile, dirichlet_local_eq, select_two_block_sites, simulate,
    two_block_observable, uniform_times, v_functional, Configuration, CounterexampleD2, CounterexampleParams,
    CylinderObservable, Lattice, LocalEquilibrium, SimOptions,
};
use crate::numerics::{mean, mean_and_stderr};
use crate::rate_functional::{
    i_up, recover_control, weighted_gradient_error, RecoveryOptions, TestBasis,
};
use crate::rates::{fugacity_of_density, linspace, NonlinearityModel};
use crate::skeleton_pde::{
    energy_report, kinetic_diagnostics, solve_fokker_planck, solve_skeleton, ControlField, Potential, SolutionBundle,
    SolverParams,
};

/// What an experiment hands back to the runner.
pub struct ExperimentOutput {
    pub summary: Value,
    pub artifacts: ArtifactSet,
    pub plots: Vec<PlotSeries>,
}

fn sim_opts(cfg: &ExperimentConfig) -> SimOptions {
    SimOptions { rate_multiplier: cfg.convention.rate_multiplier() }
}

/// Model driving the macroscopic equation under the configured convention.
fn pde_model(cfg: &ExperimentConfig, model: &NonlinearityModel) -> NonlinearityModel {
    if cfg.convention.half_diffusion {
        model.scaled(0.5)
    } else {
        model.clone()
    }
}

fn dynamics_seed(seed: u64) -> u64 {
    derive_seed(seed, 1)
}

/// Passes on a strict decrease of every consecutive pair at `k` combined
/// standard errors.
fn decreasing_at(means: &[f64], errs: &[f64], k: f64) -> bool {
    means.windows(2).zip(errs.windows(2)).all(|(m, e)| m[0] - m[1] > k * (e[0] * e[0] + e[1] * e[1]).sqrt())
}

fn closed_form_phi(cfg: &ExperimentConfig, rho: f64) -> Option<f64> {
    use super::config::RateModelSpec;
    match cfg.rate {
        RateModelSpec::Linear => Some(rho),
        RateModelSpec::Constant => Some(rho / (1.0 + rho)),
        _ => None,
    }
}

pub fn phi(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    let sec = cfg.phi.as_ref().expect("validated");
    if sec.points < 2 || !(sec.rho_min >= 0.0 && sec.rho_max > sec.rho_min) {
        return Err(HarnessError::Config("[phi] needs 0 ≤ rho_min < rho_max and points ≥ 2".into()));
    }
    let rate = cfg.jump_rate()?;
    let model = cfg.nonlinearity()?;
    let mut csv = String::from("rho,phi,phi_model,closed_form\n");
    let mut plot = PlotSeries::new("phi", "rho", "phi");
    let mut max_err: Option<f64> = None;
    let mut max_interp = 0.0f64;
    for rho in linspace(sec.rho_min, sec.rho_max, sec.points) {
        let phi = fugacity_of_density(&rate, rho, cfg.tolerances.fugacity * rho.max(1.0))?;
        let cf = closed_form_phi(cfg, rho);
        if let Some(c) = cf {
            max_err = Some(max_err.unwrap_or(0.0).max((phi - c).abs()));
        }
        let pm = if rho <= model.rho_max() { model.phi(rho) } else { f64::NAN };
        if pm.is_finite() {
            max_interp = max_interp.max((pm - phi).abs());
        }
        csv.push_str(&format!("{rho:.17e},{phi:.17e},{pm:.17e},{}\n", cf.map_or("".into(), |c| format!("{c:.17e}"))));
        plot.push(rho, phi);
    }
    let mut artifacts = ArtifactSet::new();
    artifacts.add("phi.csv", csv);
    artifacts.add("nonlinearity.csv", model.to_csv());
    let mut plots = vec![plot];
    let mut summary = json!({
        "rate": rate.name(),
        "points": sec.points,
        "max_abs_error_closed_form": max_err,
        "max_abs_error_interpolation": max_interp,
        "a_est": model.a_est,
        "big_a_est": model.big_a_est,
        "vartheta": model.vartheta,
    });
    if let Some(dsec) = &sec.dirichlet {
        dsec.profile.validate(dsec.d)?;
        let lattice = Lattice::new(dsec.d, dsec.l)?;
        let rep = dirichlet_local_eq(&dsec.profile, lattice, &model);
        let mut p = PlotSeries::new("dirichlet_vs_dissipation", "D_u", "dirichlet_total");
        p.push(rep.continuum, rep.total);
        plots.push(p);
        summary["dirichlet"] = json!({
            "l": dsec.l,
            "total": rep.total,
            "continuum": rep.continuum,
            "relative_gap": rep.relative_gap,
        });
    }
    Ok(ExperimentOutput { summary, artifacts, plots })
}

pub fn simulate_ensemble(cfg: &ExperimentConfig, pool: &ThreadPool) -> Result<ExperimentOutput, HarnessError> {
    let sec = cfg.simulate.as_ref().expect("validated");
    sec.profile.validate(sec.d)?;
    let rate = cfg.jump_rate()?;
    let lattice = Lattice::new(sec.d, sec.l)?;
    let le = LocalEquilibrium::new(&sec.profile, lattice, &rate, cfg.tolerances.fugacity)?;
    let times = uniform_times(sec.t_end, sec.snapshots.max(1));
    let opts = sim_opts(cfg);
    let runs = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let init = le.sample(seed);
                let traj = simulate(&rate, &init, sec.t_end, &times, dynamics_seed(seed), opts)?;
                let fields = traj
                    .snapshots
                    .iter()
                    .map(|s| coarse_grain(&Configuration::new(lattice, s.clone())?, sec.eps))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok::<_, HarnessError>((seed, traj, fields))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut artifacts = ArtifactSet::new();
    let nt = times.len();
    let grid = lattice.grid();
    let mut mean_fields = vec![vec![0.0; grid.len()]; nt];
    let mut per_seed = Vec::new();
    let mut mass_plot = PlotSeries::new("mean_density_vs_time", "t", "mean_density");
    for (seed, traj, fields) in &runs {
        artifacts.add(format!("snapshots/seed_{seed}.bin"), encode_snapshots(lattice, &traj.snapshots));
        for (k, f) in fields.iter().enumerate() {
            for (m, v) in mean_fields[k].iter_mut().zip(&f.values) {
                *m += v / runs.len() as f64;
            }
        }
        let masses: Vec<f64> = traj.snapshots.iter().map(|s| s.iter().map(|&k| k as f64).sum::<f64>() / grid.len() as f64).collect();
        per_seed.push(json!({
            "seed": seed,
            "events": traj.event_count,
            "mean_density": masses.last(),
            "metadata": traj.metadata_json(),
        }));
    }
    for (k, &t) in times.iter().enumerate() {
        mass_plot.push(t, mean(&mean_fields[k]));
    }
    let final_field = DensityField::new(grid, mean_fields[nt - 1].clone(), sec.t_end);
    artifacts.add("mean_coarse_field_final.csv", final_field.to_csv());
    let initial = DensityField::new(grid, sec.profile.on_lattice(&lattice), 0.0);
    Ok(ExperimentOutput {
        summary: json!({
            "d": sec.d,
            "l": sec.l,
            "t_end": sec.t_end,
            "eps": sec.eps,
            "seeds": per_seed,
            "l1_final_vs_initial_profile": final_field.l1_distance(&initial),
        }),
        artifacts,
        plots: vec![mass_plot],
    })
}

/// `∂ₜρ = Δφ(ρ)` on the `N^d` site grid from `u₀(x/N)`, box-averaged at
/// radius `⌊Nε⌋`.
fn hydro_reference(
    model: &NonlinearityModel,
    lattice: Lattice,
    u0: &[f64],
    t_end: f64,
    radius: usize,
) -> Result<Vec<f64>, HarnessError> {
    let grid = lattice.grid();
    let rho0 = DensityField::new(grid, u0.to_vec(), 0.0);
    let mut p = SolverParams::new(1.0, t_end);
    p.dt = p.cfl_limit(grid, model);
    p.record_every = usize::MAX / 2;
    let b = solve_skeleton(model, &rho0, &ControlField::zero(grid, t_end), &p)?;
    Ok(box_average(&lattice, &b.final_field().values, radius))
}

pub fn hydro_check(cfg: &ExperimentConfig, pool: &ThreadPool) -> Result<ExperimentOutput, HarnessError> {
    let sec = cfg.hydro.as_ref().expect("validated");
    sec.profile.validate(sec.d)?;
    let rate = cfg.jump_rate()?;
    let model = pde_model(cfg, &cfg.nonlinearity()?);
    let opts = sim_opts(cfg);
    let mut rows = Vec::new();
    let mut plot = PlotSeries::new("hydro_l1_vs_n", "N", "l1_error");
    let mut csv = String::from("n,seed,l1_error\n");
    let (mut means, mut errs, mut ensemble_errs) = (Vec::new(), Vec::new(), Vec::new());
    let mut u0_l1 = 0.0;
    for &n in &sec.sizes {
        let lattice = Lattice::new(sec.d, n)?;
        let r = box_radius(&lattice, sec.eps);
        let u0 = sec.profile.on_lattice(&lattice);
        u0_l1 = u0.iter().map(|v| v.abs()).sum::<f64>() / u0.len() as f64;
        let reference = hydro_reference(&model, lattice, &u0, sec.t_end, r)?;
        let le = LocalEquilibrium::from_densities(u0.clone(), lattice, &rate, cfg.tolerances.fugacity)?;
        let fields = pool.install(|| {
            cfg.seeds
                .par_iter()
                .map(|&seed| {
                    let init = le.sample(seed);
                    let traj = simulate(&rate, &init, sec.t_end, &[sec.t_end], dynamics_seed(seed), opts)?;
                    Ok::<_, HarnessError>(coarse_grain(&traj.snapshot(0), sec.eps)?.values)
                })
                .collect::<Result<Vec<_>, _>>()
        })?;
        let l1 = |v: &[f64]| v.iter().zip(&reference).map(|(a, b)| (a - b).abs()).sum::<f64>() / v.len() as f64;
        let per_seed: Vec<f64> = fields.iter().map(|f| l1(f)).collect();
        for (seed, e) in cfg.seeds.iter().zip(&per_seed) {
            csv.push_str(&format!("{n},{seed},{e:.17e}\n"));
        }
        let mut avg = vec![0.0; reference.len()];
        for f in &fields {
            for (a, v) in avg.iter_mut().zip(f) {
                *a += v / fields.len() as f64;
            }
        }
        let ens = l1(&avg);
        let (m, se) = mean_and_stderr(&per_seed);
        plot.push_err(n as f64, m, se);
        means.push(m);
        errs.push(se);
        ensemble_errs.push(ens);
        rows.push(json!({
            "n": n,
            "box_radius": r,
            "mean_l1_error": m,
            "stderr": se,
            "ensemble_field_l1_error": ens,
        }));
    }
    let mut ens_plot = PlotSeries::new("hydro_ensemble_l1_vs_n", "N", "ensemble_l1_error");
    for (&n, &e) in sec.sizes.iter().zip(&ensemble_errs) {
        ens_plot.push(n as f64, e);
    }
    let mut artifacts = ArtifactSet::new();
    artifacts.add("hydro_errors.csv", csv);
    let finest = *ensemble_errs.last().unwrap();
    Ok(ExperimentOutput {
        summary: json!({
            "d": sec.d,
            "t_end": sec.t_end,
            "eps": sec.eps,
            "ensemble_size": cfg.seeds.len(),
            "rows": rows,
            "decreasing_at_2_sigma": decreasing_at(&means, &errs, 2.0),
            "u0_l1": u0_l1,
            "finest_ensemble_l1_error": finest,
            "finest_within_5_percent": finest <= 0.05 * u0_l1,
        }),
        artifacts,
        plots: vec![plot, ens_plot],
    })
}

pub fn supex_check(cfg: &ExperimentConfig, pool: &ThreadPool) -> Result<ExperimentOutput, HarnessError> {
    let sec = cfg.supex.as_ref().expect("validated");
    sec.profile.validate(sec.d)?;
    let rate = cfg.jump_rate()?;
    let model = cfg.nonlinearity()?;
    let obs = CylinderObservable::new(sec.observable, &rate);
    let opts = sim_opts(cfg);
    let times = uniform_times(sec.t_end, sec.snapshots.max(1));
    let mode = sec.test_mode as f64;
    let h = |_: f64, x: [f64; 3]| (2.0 * PI * mode * x[0]).cos();
    let mut plot = PlotSeries::new("v_vs_n", "N", "V");
    let (mut means, mut errs, mut rows) = (Vec::new(), Vec::new(), Vec::new());
    for &n in &sec.sizes {
        let lattice = Lattice::new(sec.d, n)?;
        let le = LocalEquilibrium::new(&sec.profile, lattice, &rate, cfg.tolerances.fugacity)?;
        let vals = pool.install(|| {
            cfg.seeds
                .par_iter()
                .map(|&seed| {
                    let traj = simulate(&rate, &le.sample(seed), sec.t_end, &times, dynamics_seed(seed), opts)?;
                    Ok::<_, HarnessError>(v_functional(&traj, h, &obs, &model, sec.eps)?.integral)
                })
                .collect::<Result<Vec<_>, _>>()
        })?;
        let (m, se) = mean_and_stderr(&vals);
        plot.push_err(n as f64, m, se);
        means.push(m);
        errs.push(se);
        rows.push(json!({ "n": n, "mean_integral": m, "stderr": se, "values": vals }));
    }
    Ok(ExperimentOutput {
        summary: json!({
            "observable": sec.observable,
            "eps": sec.eps,
            "t_end": sec.t_end,
            "rows": rows,
            "decreasing_at_2_sigma": decreasing_at(&means, &errs, 2.0),
        }),
        artifacts: ArtifactSet::new(),
        plots: vec![plot],
    })
}

pub fn two_block(cfg: &ExperimentConfig, pool: &ThreadPool) -> Result<ExperimentOutput, HarnessError> {
    let sec = cfg.two_block.as_ref().expect("validated");
    if sec.samples < 100 {
        return Err(HarnessError::Config("[two_block] samples must be at least 100 per seed".into()));
    }
    let rate = cfg.jump_rate()?;
    let lattice = Lattice::new(2, sec.l)?;
    let ce = CounterexampleD2::new(sec.gamma, sec.n);
    ce.validate()?;
    let profile = ce.lattice_realization(sec.r_out, sec.r_in, sec.cycles);
    profile.validate(2)?;
    let u = profile.on_lattice(&lattice);
    let sites = select_two_block_sites(&u, lattice, sec.ell, sec.eps, sec.gamma, sec.theta);
    let le = LocalEquilibrium::new(&profile, lattice, &rate, cfg.tolerances.fugacity)?;
    let per_seed = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let configs: Vec<Configuration> =
                    (0..sec.samples as u64).map(|i| le.sample(derive_seed(seed, 100 + i))).collect();
                Ok::<_, HarnessError>(two_block_observable(&configs, sec.ell, sites.x, sites.y, &sec.weight, sec.beta)?)
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    // Equal sample counts per seed: pooled mean and standard error.
    let k = per_seed.len() as f64;
    let estimate = per_seed.iter().map(|p| p.0).sum::<f64>() / k;
    let stderr = per_seed.iter().map(|p| p.1 * p.1).sum::<f64>().sqrt() / k;
    let threshold = 0.5 * sec.gamma;
    let mut plot = PlotSeries::new("two_block", "ell", "estimate");
    plot.notes.push(format!("threshold gamma/2 = {threshold:e}"));
    plot.push_err(sec.ell as f64, estimate, stderr);
    let mut line = PlotSeries::new("two_block_threshold", "ell", "gamma_half");
    line.push(0.0, threshold);
    line.push((2 * sec.ell + 1) as f64, threshold);
    Ok(ExperimentOutput {
        summary: json!({
            "sites": sites,
            "estimate": estimate,
            "stderr": stderr,
            "threshold": threshold,
            "exceeds_at_2_sigma": estimate - 2.0 * stderr > threshold,
            "samples": sec.samples * cfg.seeds.len(),
            "per_seed": per_seed.iter().map(|p| json!({"mean": p.0, "stderr": p.1})).collect::<Vec<_>>(),
        }),
        artifacts: ArtifactSet::new(),
        plots: vec![plot, line],
    })
}

pub fn counterexample(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    let sec = cfg.counterexample.as_ref().expect("validated");
    let model = cfg.nonlinearity()?;
    let mut plot = PlotSeries::new("grad_sq_vs_inv_sqrt_log_psi", "inv_sqrt_abs_log_psi", "grad_sq");
    let mut reports = Vec::new();
    let mut scaled = Vec::new();
    for &case in &sec.cases {
        let d = match case {
            CounterexampleParams::D2 { .. } => 2,
            CounterexampleParams::D3 { .. } => 3,
        };
        let rep = counterexample_profile(d, sec.gamma, case, &model)?;
        if d == 2 {
            plot.push(1.0 / rep.log_psi_inf.abs().sqrt(), rep.grad_sq);
        }
        if let Some(s) = rep.scaled_grad_sq {
            scaled.push(s);
        }
        reports.push(rep);
    }
    let spread = if scaled.is_empty() {
        None
    } else {
        let (lo, hi) = scaled.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        Some(hi / lo)
    };
    Ok(ExperimentOutput {
        summary: json!({ "gamma": sec.gamma, "reports": reports, "scaled_grad_sq_spread": spread }),
        artifacts: ArtifactSet::new(),
        plots: vec![plot],
    })
}

fn potential(spec: &PotentialSpec, d: usize, factor: f64) -> Potential {
    let (amp, mode, growth) = (spec.amplitude * factor, spec.mode as f64, spec.growth);
    Potential::new(move |t, x| amp * (1.0 + growth * t) * (0..d).map(|a| (2.0 * PI * mode * x[a]).cos()).sum::<f64>())
}

/// Solves the controlled equation for `H` under the configured convention.
fn potential_path(
    cfg: &ExperimentConfig,
    model: &NonlinearityModel,
    rho0: &DensityField,
    spec: &PotentialSpec,
    params: &SolverParams,
) -> Result<SolutionBundle, HarnessError> {
    let (m, factor) = if cfg.convention.half_diffusion { (model.scaled(0.5), 2.0) } else { (model.clone(), 1.0) };
    Ok(solve_fokker_planck(&m, rho0, &potential(spec, rho0.grid.d, factor), params)?)
}

pub fn solve_skeleton_run(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    let sec = cfg.skeleton.as_ref().expect("validated");
    sec.profile.validate(sec.d)?;
    let model = cfg.nonlinearity()?;
    let grid = Grid::new(sec.d, sec.m);
    let rho0 = DensityField::from_fn(grid, |x| sec.profile.eval(x, sec.d));
    let pm = pde_model(cfg, &model);
    let mut params = SolverParams::new(1.0, sec.t_end);
    params.scheme = sec.scheme;
    params.viscosity = sec.viscosity;
    params.record_every = sec.record_every.max(1);
    params.dt = sec.dt.unwrap_or_else(|| params.cfl_limit(grid, &pm));
    let bundle = match &sec.potential {
        Some(p) => potential_path(cfg, &model, &rho0, p, &params)?,
        None => solve_skeleton(&pm, &rho0, &ControlField::zero(grid, sec.t_end), &params)?,
    };
    let energy = energy_report(&bundle, &pm);
    let sup = bundle.fields.iter().map(|f| f.max()).fold(0.0, f64::max);
    let edges = linspace(0.0, sup.max(1e-12) * 1.0001, sec.xi_bins.max(1) + 1);
    let kin = kinetic_diagnostics(&bundle, &pm, &edges, &[sup + 1.0])?;
    let mut artifacts = ArtifactSet::new();
    artifacts.add("diagnostics.csv", bundle.diagnostics_csv());
    artifacts.add("final_field.csv", bundle.final_field().to_csv());
    let mut plot = PlotSeries::new("dissipation_vs_time", "t", "dissipation");
    for (t, v) in bundle.times.iter().zip(&bundle.dissipation) {
        plot.push(*t, *v);
    }
    let binned = kin.binned_total();
    Ok(ExperimentOutput {
        summary: json!({
            "steps": bundle.steps,
            "dt": bundle.dt,
            "max_mass_drift": bundle.max_mass_drift,
            "control_norm_sq": bundle.control.norm_sq,
            "energy": energy,
            "kinetic": {
                "binned_total": binned,
                "reference_total": kin.reference_total,
                "relative_gap": (binned - kin.reference_total).abs() / kin.reference_total.max(1e-300),
                "tail_masses": kin.tail_masses,
                "sup_rho": kin.sup_rho,
            },
        }),
        artifacts,
        plots: vec![plot],
    })
}

pub fn rate(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    let sec = cfg.rate_fn.as_ref().expect("validated");
    sec.profile.validate(sec.d)?;
    let model = cfg.nonlinearity()?;
    let conv = cfg.convention.diffusion();
    let grid = Grid::new(sec.d, sec.m);
    let rho0 = DensityField::from_fn(grid, |x| sec.profile.eval(x, sec.d));
    let pm = pde_model(cfg, &model);
    let mut params = SolverParams::new(1.0, sec.t_end);
    params.dt = params.cfl_limit(grid, &pm);
    let bundle = potential_path(cfg, &model, &rho0, &sec.potential, &params)?;
    let basis = TestBasis::new(sec.d, sec.n_space, sec.time_modes, sec.t_end, sec.bump_width)?;
    let up = i_up(&bundle, &basis, &model, &conv)?;
    let opts = RecoveryOptions { ridge: sec.ridge, difference: sec.difference, ..Default::default() };
    let rec = recover_control(&bundle, &model, &conv, &opts)?;
    let gap = (up.dynamic - rec.report.dynamic).abs() / rec.report.dynamic.abs().max(1e-300);
    let mut plot = PlotSeries::new("rate_sup_vs_control", "control_form", "sup_form");
    plot.push(rec.report.total, up.total);
    Ok(ExperimentOutput {
        summary: json!({
            "sup_form": up,
            "control_form": rec.report,
            "relative_gap_dynamic": gap,
            "basis_size": basis.len(),
        }),
        artifacts: ArtifactSet::new(),
        plots: vec![plot],
    })
}

/// Smooth random potential on the circle with time-linear coefficients.
pub fn random_potential(seed: u64, amplitude: f64, t_end: f64) -> Potential {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c: Vec<(f64, f64, f64)> = (1..=3)
        .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0 * PI)))
        .collect();
    Potential::new(move |t, x| {
        c.iter()
            .enumerate()
            .map(|(j, &(a, b, ph))| {
                let k = (j + 1) as f64;
                amplitude / k * (a + b * t / t_end) * (2.0 * PI * k * x[0] + ph).sin()
            })
            .sum()
    })
}

pub fn roundtrip(cfg: &ExperimentConfig, pool: &ThreadPool) -> Result<ExperimentOutput, HarnessError> {
    let sec = cfg.roundtrip.as_ref().expect("validated");
    sec.profile.validate(1)?;
    let model = cfg.nonlinearity()?;
    let conv = cfg.convention.diffusion();
    let grid = Grid::new(1, sec.m);
    let rho0 = DensityField::from_fn(grid, |x| sec.profile.eval(x, 1));
    let pm = pde_model(cfg, &model);
    let mut params = SolverParams::new(1.0, sec.t_end);
    params.dt = params.cfl_limit(grid, &pm);
    let factor = if cfg.convention.half_diffusion { 2.0 } else { 1.0 };
    let cases = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let h_in = random_potential(seed, sec.amplitude, sec.t_end);
                let h_in_pde = random_potential(seed, sec.amplitude * factor, sec.t_end);
                let bundle = solve_fokker_planck(&pm, &rho0, &h_in_pde, &params)?;
                let rec = recover_control(&bundle, &model, &conv, &RecoveryOptions::default())?;
                // ½‖g‖² of the generated path, in the rate's normalisation.
                let target = 0.5 * bundle.control.norm_sq / factor;
                let err = weighted_gradient_error(&bundle, &model, &rec, &h_in);
                Ok::<_, HarnessError>((seed, target, rec.cost, err))
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut plot = PlotSeries::new("roundtrip", "half_norm_g_in", "recovered_cost");
    let mut rows = Vec::new();
    let (mut max_gap, mut max_err, mut below) = (0.0f64, 0.0f64, true);
    for &(seed, target, cost, err) in &cases {
        plot.push(target, cost);
        let gap = (cost - target).abs() / target.max(1e-300);
        max_gap = max_gap.max(gap);
        max_err = max_err.max(err);
        below &= cost <= target + 1e-6;
        rows.push(json!({ "seed": seed, "target": target, "recovered": cost, "gap": gap, "gradient_error": err }));
    }
    Ok(ExperimentOutput {
        summary: json!({
            "cases": rows,
            "max_cost_gap": max_gap,
            "max_gradient_error": max_err,
            "below_diagonal": below,
        }),
        artifacts: ArtifactSet::new(),
        plots: vec![plot],
    })
}

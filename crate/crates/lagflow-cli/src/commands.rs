//! Command implementations: experiment drivers, minimizer and convergence
//! studies, CSV emission.

use crate::config::{Command, GridMode, InitialKind, RunConfig};
use crate::output;
use lagflow::equilibria::{
    discrete_minimizer, lp_error, lp_error_dilated, lp_error_interpolant, profile_quantile_state,
    reference_profile, uniform_error, DiscreteMinimum,
};
use lagflow::functionals::ModelParams;
use lagflow::mass_mesh::{
    build_initial_state, Density, LagrangianState, LopsidedSine, MassGrid, TabulatedDensity,
    UniformDensity,
};
use lagflow::numerics::fit_slope;
use lagflow::rescaling::{continuous_rescale_factor, dilate, RescaleSchedule};
use lagflow::stepper::{evolve, EvolveError, StepConfig, Trajectory};
use std::path::Path;
use std::sync::Arc;

#[derive(Debug)]
pub enum RunError {
    /// Invalid configuration or unusable input data; exit code 2.
    Config(String),
    /// The solver failed; exit code 3.
    Solver(String),
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, RunError> {
    Err(RunError::Config(msg.into()))
}

impl From<EvolveError> for RunError {
    fn from(e: EvolveError) -> Self {
        RunError::Solver(format!(
            "step = {}\nhalvings = {}\ntime_reached = {}\nreason = {}",
            e.step,
            e.halvings,
            output::fmt17(e.partial.reports().last().map_or(0.0, |r| r.time)),
            e.source
        ))
    }
}

pub fn run(cfg: &RunConfig) -> Result<(), RunError> {
    match cfg.command {
        Command::Evolve | Command::Exp1 => run_evolution(cfg),
        Command::Exp2 => run_selfsim(cfg),
        Command::Minimizer => run_minimizer(cfg),
        Command::Converge => run_convergence(cfg),
    }
}

fn step_config(cfg: &RunConfig) -> StepConfig {
    StepConfig {
        residual_tol: cfg.newton_tol,
        max_newton_iter: cfg.newton_max_iter,
        max_tau_halvings: cfg.tau_halvings,
        ..StepConfig::default()
    }
}

fn build_grid(cfg: &RunConfig, k: usize) -> Result<Arc<MassGrid>, RunError> {
    match &cfg.grid {
        GridMode::Uniform => MassGrid::uniform(1.0, k).map_err(|e| RunError::Config(e.to_string())),
        GridMode::Graded(q) => {
            MassGrid::graded(1.0, k, *q).map_err(|e| RunError::Config(e.to_string()))
        }
        GridMode::File(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| RunError::Config(format!("cannot read grid file {path:?}: {e}")))?;
            let mut xi = Vec::new();
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap().trim();
                if line.is_empty() {
                    continue;
                }
                xi.push(line.parse::<f64>().map_err(|_| {
                    RunError::Config(format!("grid file line {}: bad number", lineno + 1))
                })?);
            }
            if xi.last() != Some(&1.0) {
                return config_err("grid file must end at total mass 1");
            }
            MassGrid::non_uniform(xi).map_err(|e| RunError::Config(e.to_string()))
        }
    }
}

fn build_initial(
    cfg: &RunConfig,
    grid: &Arc<MassGrid>,
    params: &ModelParams,
) -> Result<LagrangianState, RunError> {
    let from_density =
        |d: &dyn Density| build_initial_state(d, grid).map_err(|e| RunError::Config(e.to_string()));
    match &cfg.initial {
        InitialKind::Sine => from_density(&LopsidedSine),
        InitialKind::Uniform => from_density(&UniformDensity {
            a: -0.5,
            b: 0.5,
            mass: 1.0,
        }),
        InitialKind::Barenblatt => {
            // unconfined runs seed from the lambda = 1 profile
            let pp = if params.lambda() > 0.0 {
                *params
            } else {
                params.with_lambda(1.0).expect("alpha already validated")
            };
            let profile = reference_profile(&pp).map_err(|e| RunError::Config(e.to_string()))?;
            profile_quantile_state(&profile, grid).map_err(|e| RunError::Config(e.to_string()))
        }
        InitialKind::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                RunError::Config(format!("cannot read initial-condition file {path:?}: {e}"))
            })?;
            let mut xs = Vec::new();
            let mut us = Vec::new();
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap().trim();
                if line.is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line
                    .split(|c: char| c == ',' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .collect();
                if fields.len() != 2 {
                    return config_err(format!(
                        "initial-condition file line {}: expected `x,u`",
                        lineno + 1
                    ));
                }
                let parse = |s: &str| {
                    s.parse::<f64>().map_err(|_| {
                        RunError::Config(format!(
                            "initial-condition file line {}: bad number",
                            lineno + 1
                        ))
                    })
                };
                xs.push(parse(fields[0])?);
                us.push(parse(fields[1])?);
            }
            let density =
                TabulatedDensity::new(xs, us).map_err(|e| RunError::Config(e.to_string()))?;
            if (density.mass() - 1.0).abs() > 1e-6 {
                return config_err(format!(
                    "initial-condition file carries mass {}, expected 1",
                    density.mass()
                ));
            }
            // use the measured mass so the quantile construction is consistent
            from_density(&density)
        }
    }
}

fn minimum_for(
    params: &ModelParams,
    grid: &Arc<MassGrid>,
) -> Result<Option<DiscreteMinimum>, RunError> {
    if params.lambda() > 0.0 {
        discrete_minimizer(params, grid)
            .map(Some)
            .map_err(|e| RunError::Solver(format!("reason = minimizer: {e}")))
    } else {
        Ok(None)
    }
}

/// Indices stored in snapshot files: 0, stride, 2 stride, ..., last.
fn stored_indices(len: usize, stride: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).step_by(stride).collect();
    if *idx.last().unwrap() != len - 1 {
        idx.push(len - 1);
    }
    idx
}

/// First time at which the local slope of `ln(H - H_min)` enters the band
/// `-2 lambda (1 +- 10%)`.
fn crossover_time(traj: &Trajectory, h_min: f64, lambda: f64) -> f64 {
    let pts: Vec<(f64, f64)> = traj
        .reports()
        .iter()
        .filter_map(|r| {
            let gap = r.entropy - h_min;
            (gap > 0.0).then(|| (r.time, gap.ln()))
        })
        .collect();
    let half = 10usize;
    if pts.len() < 2 * half + 1 {
        return f64::NAN;
    }
    let target = -2.0 * lambda;
    for c in half..pts.len() - half {
        let window = &pts[c - half..=c + half];
        let t: Vec<f64> = window.iter().map(|p| p.0).collect();
        let y: Vec<f64> = window.iter().map(|p| p.1).collect();
        let slope = fit_slope(&t, &y);
        if (slope - target).abs() <= 0.1 * target.abs() {
            return pts[c].0;
        }
    }
    f64::NAN
}

fn run_evolution(cfg: &RunConfig) -> Result<(), RunError> {
    let params =
        ModelParams::new(cfg.alpha, cfg.lambda).map_err(|e| RunError::Config(e.to_string()))?;
    let grid = build_grid(cfg, cfg.k)?;
    let initial = build_initial(cfg, &grid, &params)?;
    let minimum = minimum_for(&params, &grid)?;
    let n_steps = (cfg.t_end / cfg.tau + 1e-9).floor() as usize;
    let schedule = vec![cfg.tau; n_steps];
    let reference = minimum.as_ref().map(|m| m.gap_reference());
    let traj = evolve(
        initial,
        &schedule,
        &params,
        &step_config(cfg),
        reference.as_ref(),
    )?;

    let mut extra: Vec<(String, String)> = Vec::new();
    if let Some(m) = &minimum {
        extra.push(("h_min".to_string(), output::fmt17(m.h_min)));
        extra.push(("f_min".to_string(), output::fmt17(m.f_min)));
        if cfg.command == Command::Exp1 {
            let t = crossover_time(&traj, m.h_min, cfg.lambda);
            extra.push(("crossover_time".to_string(), output::fmt17(t)));
        }
    }
    let header = output::metadata(cfg, &extra);

    let ts = output::timeseries_csv(
        &header,
        &traj,
        minimum.as_ref().map(|m| m.h_min),
        minimum.as_ref().map(|m| m.f_min),
    );
    emit(&cfg.outdir, "timeseries.csv", &ts)?;

    let rows: Vec<(f64, &LagrangianState)> = stored_indices(traj.len(), cfg.snapshot_stride)
        .into_iter()
        .map(|i| (traj.reports()[i].time, &traj.states()[i]))
        .collect();
    emit(
        &cfg.outdir,
        "snapshots.csv",
        &output::snapshots_csv(&header, &rows),
    )?;
    emit(
        &cfg.outdir,
        "density.csv",
        &output::density_csv(&header, &rows),
    )?;
    if let Some(m) = &minimum {
        let mrow = [(0.0, &m.state)];
        emit(
            &cfg.outdir,
            &format!("minimizer_K{}.csv", cfg.k),
            &output::snapshots_csv(&header, &mrow),
        )?;
    }
    println!(
        "{}: {} steps to t = {}, output in {}",
        cfg.command.name(),
        traj.len() - 1,
        output::fmt17(traj.reports().last().unwrap().time),
        cfg.outdir.display()
    );
    Ok(())
}

fn run_selfsim(cfg: &RunConfig) -> Result<(), RunError> {
    let confined = ModelParams::new(cfg.alpha, 1.0).map_err(|e| RunError::Config(e.to_string()))?;
    let unconfined = ModelParams::new(cfg.alpha, 0.0).expect("validated");
    let grid = build_grid(cfg, cfg.k)?;
    let minimum = discrete_minimizer(&confined, &grid)
        .map_err(|e| RunError::Solver(format!("reason = minimizer: {e}")))?;
    let profile = reference_profile(&confined).map_err(|e| RunError::Config(e.to_string()))?;

    // grow the base schedule until the transformed time covers t_end
    let mut steps = Vec::new();
    let mut scale = 1.0f64;
    let mut t_hat = 0.0f64;
    while t_hat < cfg.t_end {
        let prev = scale;
        scale *= 1.0 + cfg.tau;
        t_hat += cfg.tau * prev * scale.powf(2.0 * cfg.alpha + 2.0);
        steps.push(cfg.tau);
        if steps.len() > 5_000_000 {
            return config_err("t_end too large for the given tau (schedule over 5e6 steps)");
        }
    }
    let schedule = RescaleSchedule::from_steps(cfg.alpha, &steps);
    let traj = evolve(
        minimum.state.clone(),
        schedule.tau_hat(),
        &unconfined,
        &step_config(cfg),
        None,
    )?;

    let targets: Vec<f64> = [0.0, 0.1, 1.0, 10.0, 100.0]
        .into_iter()
        .filter(|t| *t <= cfg.t_end + 1e-12)
        .collect();
    let mut rows = Vec::new();
    for target in &targets {
        let mut n = 0;
        for i in 0..=schedule.len() {
            if schedule.time_hat(i) <= target + 1e-12 {
                n = i;
            }
        }
        let state = &traj.states()[n];
        let dilated = dilate(&minimum.state, schedule.scale(n)).expect("positive scale");
        let dev = state
            .positions()
            .iter()
            .zip(dilated.positions())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let r_cont = continuous_rescale_factor(schedule.time_hat(n), cfg.alpha);
        let l1 = lp_error_dilated(&state.density(), &profile, 1.0, r_cont);
        rows.push((
            n,
            schedule.time_hat(n),
            schedule.scale(n),
            dev,
            l1,
            schedule.decay_factor(n),
        ));
    }

    let extra = vec![
        ("h_min_confined".to_string(), output::fmt17(minimum.h_min)),
        ("base_steps".to_string(), schedule.len().to_string()),
    ];
    let header = output::metadata(cfg, &extra);
    emit(
        &cfg.outdir,
        "selfsim.csv",
        &output::selfsim_csv(&header, &rows),
    )?;
    emit(
        &cfg.outdir,
        "timeseries.csv",
        &output::timeseries_csv(&header, &traj, None, None),
    )?;
    let snap_rows: Vec<(f64, &LagrangianState)> =
        rows.iter().map(|r| (r.1, &traj.states()[r.0])).collect();
    emit(
        &cfg.outdir,
        "snapshots.csv",
        &output::snapshots_csv(&header, &snap_rows),
    )?;
    emit(
        &cfg.outdir,
        "density.csv",
        &output::density_csv(&header, &snap_rows),
    )?;
    println!(
        "exp2: {} base steps, transformed time {}, output in {}",
        schedule.len(),
        output::fmt17(schedule.time_hat(schedule.len())),
        cfg.outdir.display()
    );
    Ok(())
}

fn run_minimizer(cfg: &RunConfig) -> Result<(), RunError> {
    let params =
        ModelParams::new(cfg.alpha, cfg.lambda).map_err(|e| RunError::Config(e.to_string()))?;
    let grid = build_grid(cfg, cfg.k)?;
    let minimum = discrete_minimizer(&params, &grid)
        .map_err(|e| RunError::Solver(format!("reason = minimizer: {e}")))?;
    let extra = vec![
        ("h_min".to_string(), output::fmt17(minimum.h_min)),
        ("f_min".to_string(), output::fmt17(minimum.f_min)),
        (
            "grad_h_norm".to_string(),
            output::fmt17(minimum.grad_h_norm),
        ),
        (
            "grad_f_norm".to_string(),
            output::fmt17(minimum.grad_f_norm),
        ),
    ];
    let header = output::metadata(cfg, &extra);
    let rows = [(0.0, &minimum.state)];
    emit(
        &cfg.outdir,
        &format!("minimizer_K{}.csv", cfg.k),
        &output::snapshots_csv(&header, &rows),
    )?;
    println!(
        "minimizer: H_min = {}, F_min = {}, output in {}",
        output::fmt17(minimum.h_min),
        output::fmt17(minimum.f_min),
        cfg.outdir.display()
    );
    Ok(())
}

fn run_convergence(cfg: &RunConfig) -> Result<(), RunError> {
    let params =
        ModelParams::new(cfg.alpha, cfg.lambda).map_err(|e| RunError::Config(e.to_string()))?;
    let profile = reference_profile(&params).map_err(|e| RunError::Config(e.to_string()))?;
    let h_cont = profile.entropy_value(&params);

    type KRow = (usize, f64, f64, f64, f64, DiscreteMinimum);
    let mut results: Vec<Option<Result<KRow, RunError>>> = Vec::new();
    results.resize_with(cfg.ks.len(), || None);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for &k in cfg.ks.iter() {
            let profile = &profile;
            let params = &params;
            handles.push(scope.spawn(move || -> Result<KRow, RunError> {
                let grid = build_grid(cfg, k)?;
                let min = discrete_minimizer(params, &grid)
                    .map_err(|e| RunError::Solver(format!("reason = minimizer K={k}: {e}")))?;
                let u = min.state.density();
                let interp = min.state.affine_interpolant();
                let l1 = lp_error(&u, profile, 1.0);
                let l2 = lp_error_interpolant(&interp, profile, 2.0);
                let linf = uniform_error(&interp, profile);
                let h_gap = min.h_min - h_cont;
                Ok((k, l1, l2, linf, h_gap, min))
            }));
        }
        for (slot, handle) in results.iter_mut().zip(handles) {
            *slot = Some(handle.join().expect("study thread panicked"));
        }
    });

    let mut rows = Vec::new();
    let mut minima = Vec::new();
    for slot in results {
        let (k, l1, l2, linf, h_gap, min) = slot.expect("all slots filled")?;
        rows.push((k, l1, l2, linf, h_gap));
        minima.push((k, min));
    }
    let kf: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
    let l2s: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let slope = lagflow::numerics::fit_loglog_slope(&kf, &l2s);

    let extra = vec![
        ("h_profile".to_string(), output::fmt17(h_cont)),
        ("fitted_l2_slope".to_string(), output::fmt17(slope)),
    ];
    let header = output::metadata(cfg, &extra);
    emit(
        &cfg.outdir,
        "convergence.csv",
        &output::convergence_csv(&header, &rows),
    )?;
    for (k, min) in &minima {
        let mrow = [(0.0, &min.state)];
        emit(
            &cfg.outdir,
            &format!("minimizer_K{k}.csv"),
            &output::snapshots_csv(&header, &mrow),
        )?;
    }
    println!(
        "converge: fitted L2 slope {} over K = {:?}, output in {}",
        output::fmt17(slope),
        cfg.ks,
        cfg.outdir.display()
    );
    Ok(())
}

fn emit(dir: &Path, name: &str, contents: &str) -> Result<(), RunError> {
    output::write_file(dir, name, contents)
        .map(|_| ())
        .map_err(|e| RunError::Config(format!("cannot write {name}: {e}")))
}

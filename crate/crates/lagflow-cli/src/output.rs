//! Deterministic CSV emission: every file starts with a `#`-prefixed
//! metadata header echoing the effective configuration and the theoretical
//! rate constants; all floats carry 17 significant digits.

use crate::config::{Command, RunConfig};
use lagflow::stepper::Trajectory;
use lagflow::LagrangianState;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

/// 17 significant digits, round-trip exact for f64.
pub fn fmt17(v: f64) -> String {
    if v.is_nan() {
        return "nan".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    format!("{v:.16e}")
}

/// Metadata header lines shared by every emitted CSV.
pub fn metadata(cfg: &RunConfig, extra: &[(String, String)]) -> String {
    let mut out = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(out, "# {k} = {v}");
    };
    put("command", cfg.command.name().to_string());
    put("alpha", fmt17(cfg.alpha));
    put("lambda", fmt17(cfg.lambda));
    if cfg.command == Command::Converge {
        put(
            "ks",
            cfg.ks
                .iter()
                .map(|k| k.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
    } else {
        put("k", cfg.k.to_string());
    }
    put("tau", fmt17(cfg.tau));
    put("t_end", fmt17(cfg.t_end));
    put("initial", cfg.initial.to_string());
    put("grid", cfg.grid.to_string());
    put("snapshot_stride", cfg.snapshot_stride.to_string());
    put("newton_tol", fmt17(cfg.newton_tol));
    put("newton_max_iter", cfg.newton_max_iter.to_string());
    put("tau_halvings", cfg.tau_halvings.to_string());
    put(
        "rate_2lambda_over_1_plus_lambda_tau",
        fmt17(cfg.decay_rate()),
    );
    let a_tau = (1.0 + cfg.tau).powf(-(2.0 * cfg.alpha + 2.0));
    let b_tau = 1.0 + 2.0 * cfg.tau;
    put("a_tau", fmt17(a_tau));
    put("b_tau", fmt17(b_tau));
    for (k, v) in extra {
        put(k, v.clone());
    }
    out
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

/// `t,H,F,H_gap,F_gap,L1_err,newton_iters,residual`, one row per step.
pub fn timeseries_csv(
    header: &str,
    traj: &Trajectory,
    h_min: Option<f64>,
    f_min: Option<f64>,
) -> String {
    let mut out = String::from(header);
    out.push_str("t,H,F,H_gap,F_gap,L1_err,newton_iters,residual\n");
    for r in traj.reports() {
        let h_gap = h_min.map_or(f64::NAN, |m| r.entropy - m);
        let f_gap = f_min.map_or(f64::NAN, |m| r.information - m);
        let l1 = r.l1_error.unwrap_or(f64::NAN);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt17(r.time),
            fmt17(r.entropy),
            fmt17(r.information),
            fmt17(h_gap),
            fmt17(f_gap),
            fmt17(l1),
            r.newton_iters,
            fmt17(r.residual_norm),
        );
    }
    out
}

/// `t,x0,...,xK`, one row per stored time.
pub fn snapshots_csv(header: &str, rows: &[(f64, &LagrangianState)]) -> String {
    let mut out = String::from(header);
    out.push('t');
    if let Some((_, s)) = rows.first() {
        for k in 0..s.positions().len() {
            let _ = write!(out, ",x{k}");
        }
    }
    out.push('\n');
    for (t, s) in rows {
        out.push_str(&fmt17(*t));
        for x in s.positions() {
            out.push(',');
            out.push_str(&fmt17(*x));
        }
        out.push('\n');
    }
    out
}

/// `t,cell_index,x_left,x_right,z`, one block of rows per stored time.
pub fn density_csv(header: &str, rows: &[(f64, &LagrangianState)]) -> String {
    let mut out = String::from(header);
    out.push_str("t,cell_index,x_left,x_right,z\n");
    for (t, s) in rows {
        let u = s.density();
        for (k, z) in u.values().iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                fmt17(*t),
                k,
                fmt17(u.breakpoints()[k]),
                fmt17(u.breakpoints()[k + 1]),
                fmt17(*z),
            );
        }
    }
    out
}

/// `K,L1,L2,Linf,H_gap` for the minimizer convergence study.
pub fn convergence_csv(header: &str, rows: &[(usize, f64, f64, f64, f64)]) -> String {
    let mut out = String::from(header);
    out.push_str("K,L1,L2,Linf,H_gap\n");
    for (k, l1, l2, linf, hgap) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            k,
            fmt17(*l1),
            fmt17(*l2),
            fmt17(*linf),
            fmt17(*hgap),
        );
    }
    out
}

/// `n,t_hat,S,max_coord_dev,L1_dev,R_delta` for the self-similar comparison.
pub fn selfsim_csv(header: &str, rows: &[(usize, f64, f64, f64, f64, f64)]) -> String {
    let mut out = String::from(header);
    out.push_str("n,t_hat,S,max_coord_dev,L1_dev,R_delta\n");
    for (n, t_hat, s, dev, l1, rd) in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            n,
            fmt17(*t_hat),
            fmt17(*s),
            fmt17(*dev),
            fmt17(*l1),
            fmt17(*rd),
        );
    }
    out
}

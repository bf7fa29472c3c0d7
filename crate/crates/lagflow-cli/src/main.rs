// negated float comparisons are NaN-rejecting guards
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Command-line front end for the Lagrangian fourth-order flow solver.

mod commands;
mod config;
mod output;

use commands::RunError;
use config::RunConfig;

const USAGE: &str = "usage: lagflow <command> [--key value]...

commands:
  evolve     run the scheme from a chosen initial density
  exp1       confined decay-rate experiment (alpha = 1, lambda = 5)
  exp2       unconfined self-similar comparison (alpha = 1, lambda = 0)
  minimizer  compute the discrete entropy minimizer
  converge   minimizer convergence study over several grid sizes

keys (also accepted in a `key = value` file via --config <path>; flags win):
  alpha lambda k tau t_end initial grid outdir snapshot_stride ks
  newton_tol newton_max_iter tau_halvings

  initial = sine | uniform | barenblatt | file:<path>
  grid    = uniform | graded:<exponent> | nonuniform:<path>

exit codes: 0 success, 2 configuration error, 3 solver failure";

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args
        .iter()
        .any(|a| a == "--help" || a == "-h" || a == "help")
    {
        println!("{USAGE}");
        return;
    }
    let cfg = match RunConfig::from_args(&args) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error = config\nmessage = {e}\n\n{USAGE}");
            std::process::exit(2);
        }
    };
    match commands::run(&cfg) {
        Ok(()) => {}
        Err(RunError::Config(msg)) => {
            eprintln!("error = config\nmessage = {msg}");
            std::process::exit(2);
        }
        Err(RunError::Solver(msg)) => {
            eprintln!("error = solver_failure\n{msg}");
            std::process::exit(3);
        }
    }
}

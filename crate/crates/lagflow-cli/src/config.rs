//! Run configuration: `key = value` files plus command-line flags with the
//! same key space; flags override file entries, unknown keys are rejected.

use std::fmt;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Evolve,
    Exp1,
    Exp2,
    Minimizer,
    Converge,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Evolve => "evolve",
            Command::Exp1 => "exp1",
            Command::Exp2 => "exp2",
            Command::Minimizer => "minimizer",
            Command::Converge => "converge",
        }
    }

    fn parse(s: &str) -> Option<Command> {
        match s {
            "evolve" => Some(Command::Evolve),
            "exp1" => Some(Command::Exp1),
            "exp2" => Some(Command::Exp2),
            "minimizer" => Some(Command::Minimizer),
            "converge" => Some(Command::Converge),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialKind {
    /// Lopsided sine pair on `[-pi, pi]`.
    Sine,
    /// Uniform density on `[-1/2, 1/2]`.
    Uniform,
    /// Quantile discretization of the stationary profile.
    Barenblatt,
    /// Tabulated `x,u` samples read from a file.
    File(PathBuf),
}

impl fmt::Display for InitialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialKind::Sine => write!(f, "sine"),
            InitialKind::Uniform => write!(f, "uniform"),
            InitialKind::Barenblatt => write!(f, "barenblatt"),
            InitialKind::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridMode {
    Uniform,
    /// Edge-refined mass grid with the given grading exponent.
    Graded(f64),
    /// Mass nodes read from a file, one value per line.
    File(PathBuf),
}

impl fmt::Display for GridMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GridMode::Uniform => write!(f, "uniform"),
            GridMode::Graded(q) => write!(f, "graded:{q}"),
            GridMode::File(p) => write!(f, "nonuniform:{}", p.display()),
        }
    }
}

/// Effective configuration of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub alpha: f64,
    pub lambda: f64,
    pub k: usize,
    pub tau: f64,
    pub t_end: f64,
    pub initial: InitialKind,
    pub grid: GridMode,
    pub outdir: PathBuf,
    pub snapshot_stride: usize,
    /// Grid sizes of the convergence study.
    pub ks: Vec<usize>,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub tau_halvings: u32,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

impl RunConfig {
    fn defaults(command: Command) -> RunConfig {
        let base = RunConfig {
            command,
            alpha: 1.0,
            lambda: 0.0,
            k: 50,
            tau: 1e-3,
            t_end: 0.1,
            initial: InitialKind::Sine,
            grid: GridMode::Uniform,
            outdir: PathBuf::from("out"),
            snapshot_stride: 10,
            ks: vec![25, 50, 100, 200, 400],
            newton_tol: 1e-11,
            newton_max_iter: 60,
            tau_halvings: 10,
        };
        match command {
            Command::Evolve => base,
            Command::Exp1 => RunConfig {
                lambda: 5.0,
                t_end: 0.8,
                ..base
            },
            Command::Exp2 => RunConfig {
                lambda: 0.0,
                t_end: 100.0,
                initial: InitialKind::Barenblatt,
                ..base
            },
            Command::Minimizer => RunConfig {
                lambda: 5.0,
                ..base
            },
            Command::Converge => RunConfig {
                lambda: 5.0,
                grid: GridMode::Graded(0.875),
                ..base
            },
        }
    }

    /// Build from the command name, an optional config file, and flag pairs.
    pub fn from_args(args: &[String]) -> Result<RunConfig, ConfigError> {
        if args.is_empty() {
            return err("missing command (evolve | exp1 | exp2 | minimizer | converge)");
        }
        let command = match Command::parse(&args[0]) {
            Some(c) => c,
            None => return err(format!("unknown command `{}`", args[0])),
        };
        // collect key/value pairs: file entries first, then flags
        let mut flag_pairs: Vec<(String, String)> = Vec::new();
        let mut config_path: Option<PathBuf> = None;
        let mut i = 1;
        while i < args.len() {
            let arg = &args[i];
            let Some(body) = arg.strip_prefix("--") else {
                return err(format!("expected `--key value`, got `{arg}`"));
            };
            let (key, value) = if let Some((k, v)) = body.split_once('=') {
                (k.to_string(), v.to_string())
            } else {
                i += 1;
                match args.get(i) {
                    Some(v) => (body.to_string(), v.clone()),
                    None => return err(format!("flag `--{body}` is missing its value")),
                }
            };
            if key == "config" {
                config_path = Some(PathBuf::from(value));
            } else {
                flag_pairs.push((key, value));
            }
            i += 1;
        }
        let mut pairs: Vec<(String, String)> = Vec::new();
        if let Some(path) = config_path {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| ConfigError(format!("cannot read config file {path:?}: {e}")))?;
            pairs.extend(parse_key_value_file(&text)?);
        }
        pairs.extend(flag_pairs);

        let mut cfg = RunConfig::defaults(command);
        for (key, value) in &pairs {
            cfg.apply(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let parse_f64 = |v: &str| -> Result<f64, ConfigError> {
            v.parse::<f64>()
                .map_err(|_| ConfigError(format!("`{key} = {v}` is not a number")))
        };
        let parse_usize = |v: &str| -> Result<usize, ConfigError> {
            v.parse::<usize>()
                .map_err(|_| ConfigError(format!("`{key} = {v}` is not a nonnegative integer")))
        };
        match key {
            "alpha" => self.alpha = parse_f64(value)?,
            "lambda" => self.lambda = parse_f64(value)?,
            "k" => self.k = parse_usize(value)?,
            "tau" => self.tau = parse_f64(value)?,
            "t_end" => self.t_end = parse_f64(value)?,
            "initial" => {
                self.initial = if let Some(path) = value.strip_prefix("file:") {
                    InitialKind::File(PathBuf::from(path))
                } else {
                    match value {
                        "sine" => InitialKind::Sine,
                        "uniform" => InitialKind::Uniform,
                        "barenblatt" => InitialKind::Barenblatt,
                        _ => {
                            return err(format!(
                                "initial must be sine | uniform | barenblatt | file:<path>, got `{value}`"
                            ))
                        }
                    }
                }
            }
            "grid" => {
                self.grid = if let Some(path) = value.strip_prefix("nonuniform:") {
                    GridMode::File(PathBuf::from(path))
                } else if let Some(q) = value.strip_prefix("graded:") {
                    GridMode::Graded(
                        q.parse::<f64>()
                            .map_err(|_| ConfigError(format!("bad grading exponent `{q}`")))?,
                    )
                } else if value == "uniform" {
                    GridMode::Uniform
                } else {
                    return err(format!(
                        "grid must be uniform | graded:<q> | nonuniform:<path>, got `{value}`"
                    ));
                }
            }
            "outdir" => self.outdir = PathBuf::from(value),
            "snapshot_stride" => self.snapshot_stride = parse_usize(value)?,
            "ks" => {
                let mut ks = Vec::new();
                for part in value.split(',') {
                    ks.push(part.trim().parse::<usize>().map_err(|_| {
                        ConfigError(format!(
                            "`ks` must be a comma-separated list, got `{value}`"
                        ))
                    })?);
                }
                self.ks = ks;
            }
            "newton_tol" => self.newton_tol = parse_f64(value)?,
            "newton_max_iter" => self.newton_max_iter = parse_usize(value)?,
            "tau_halvings" => {
                self.tau_halvings = value.parse::<u32>().map_err(|_| {
                    ConfigError(format!("`tau_halvings = {value}` is not a small integer"))
                })?
            }
            _ => return err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if !(0.5..=1.0).contains(&self.alpha) {
            return err(format!("alpha must lie in [0.5, 1], got {}", self.alpha));
        }
        if !(self.lambda >= 0.0) {
            return err(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if self.k == 0 {
            return err("k must be positive");
        }
        if !(self.tau > 0.0) {
            return err(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.t_end >= 0.0) {
            return err(format!("t_end must be nonnegative, got {}", self.t_end));
        }
        if self.snapshot_stride == 0 {
            return err("snapshot_stride must be positive");
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return err("ks must be a nonempty list of positive integers");
        }
        if !(self.newton_tol > 0.0) {
            return err("newton_tol must be positive");
        }
        if let GridMode::Graded(q) = self.grid {
            if !(q >= 0.0) {
                return err(format!("grading exponent must be nonnegative, got {q}"));
            }
        }
        if self.command == Command::Exp2 && self.lambda != 0.0 {
            return err("exp2 studies the unconfined flow; lambda must stay 0");
        }
        if self.command == Command::Minimizer && self.lambda == 0.0 {
            return err("the minimizer needs positive confinement (lambda > 0)");
        }
        if self.command == Command::Converge && self.lambda == 0.0 {
            return err("the convergence study needs positive confinement (lambda > 0)");
        }
        Ok(())
    }

    /// Theoretical decay rate constant `2 lambda / (1 + lambda tau)`.
    pub fn decay_rate(&self) -> f64 {
        2.0 * self.lambda / (1.0 + self.lambda * self.tau)
    }
}

/// Parse `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_key_value_file(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return err(format!("line {}: expected `key = value`", lineno + 1));
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

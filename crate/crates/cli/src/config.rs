//! Run configuration: flags, environment, an optional `key = value` file
//! and defaults, merged in that order of precedence.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use crtfrag::tree::DEFAULT_NODE_CAP;
use crtfrag::verify::{CheckConfig, CHECK_NAMES};
use crtfrag::{BranchingMechanism, LevyMeasureSpec};

/// Flags shared by all subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Configuration file of `key = value` lines; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Stable index in (1, 2).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Tabulated Lévy density (replaces --alpha).
    #[arg(long, global = true, value_name = "FILE")]
    pub measure: Option<PathBuf>,
    /// Brownian coefficient for --measure.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub drift: Option<f64>,
    /// Jump cutoff of the tree.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub eps: Option<f64>,
    /// Subordinator jump cutoff relative to the mass window.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// Fragmentation time.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Fragmentation times for `fragment`, comma separated.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub theta_grid: Option<Vec<f64>>,
    /// Number of trees (or events, or draws).
    #[arg(long, global = true)]
    pub n: Option<u64>,
    #[arg(long, global = true, env = "CRTFRAG_SEED")]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub node_cap: Option<usize>,
    /// Stop building a tree once its length exceeds this.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub mass_cap: Option<f64>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub lambda_grid: Option<Vec<f64>>,
    /// Checks to run, comma separated (default: all).
    #[arg(long, global = true, value_delimiter = ',')]
    pub checks: Option<Vec<String>>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true, env = "CRTFRAG_WORKERS")]
    pub workers: Option<usize>,
    /// Mass window centre for `dislocation-compare`.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub r: Option<f64>,
    /// Skip the ε-refinement rows of `verify`.
    #[arg(long, global = true)]
    pub no_refine: bool,
    /// Trees per level for the ε-refinement rows.
    #[arg(long, global = true)]
    pub refine_n: Option<u64>,
    /// Which tree `profile` draws.
    #[arg(long, global = true)]
    pub tree_id: Option<u64>,
}

/// A configuration problem; reported as a usage error. An inadmissible
/// mechanism is kept apart because `validate` reports it as a failed check.
#[derive(Debug)]
pub struct ConfigError {
    pub msg: String,
    pub inadmissible: bool,
}

impl ConfigError {
    fn new(msg: impl Into<String>) -> Self {
        ConfigError {
            msg: msg.into(),
            inadmissible: false,
        }
    }
}

impl From<crtfrag::Error> for ConfigError {
    fn from(e: crtfrag::Error) -> Self {
        ConfigError {
            inadmissible: matches!(e, crtfrag::Error::Inadmissible(_)),
            msg: e.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum MechanismSource {
    Stable(f64),
    Measure { path: PathBuf, drift: f64 },
}

/// Fully resolved configuration, validated before any simulation starts.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: MechanismSource,
    pub mechanism: BranchingMechanism,
    pub epsilon: f64,
    pub delta: f64,
    pub theta: f64,
    pub theta_grid: Vec<f64>,
    pub n: Option<u64>,
    pub seed: u64,
    pub node_cap: usize,
    pub mass_cap: f64,
    pub out_dir: PathBuf,
    pub lambda_grid: Vec<f64>,
    pub checks: Vec<String>,
    pub workers: Option<usize>,
    pub r: f64,
    pub refine: bool,
    pub refine_n: Option<u64>,
    pub tree_id: u64,
}

fn parse_file(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::new(format!("{}:{}: expected key = value", path.display(), i + 1)))?;
        map.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(map)
}

const KEYS: [&str; 20] = [
    "alpha", "measure", "drift", "eps", "delta", "theta", "theta_grid", "n", "seed", "node_cap",
    "mass_cap", "out_dir", "lambda_grid", "checks", "workers", "r", "refine", "refine_n",
    "tree_id", "command",
];

struct FileValues(BTreeMap<String, String>);

impl FileValues {
    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| ConfigError::new(format!("config: cannot parse {key} = {v}"))),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<Vec<T>, _>>()
                .map(Some)
                .map_err(|_| ConfigError::new(format!("config: cannot parse {key} = {v}"))),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(format!("--{name} must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<RunConfig, ConfigError> {
        let file = FileValues(match &args.config {
            Some(p) => parse_file(p)?,
            None => BTreeMap::new(),
        });
        if let Some(k) = file.0.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ConfigError::new(format!("config: unknown key `{k}`")));
        }

        let drift = args.drift.or(file.get("drift")?).unwrap_or(0.0);
        let from_file = || -> Result<MechanismSource, ConfigError> {
            match (file.get::<f64>("alpha")?, file.get::<PathBuf>("measure")?) {
                (Some(_), Some(_)) => Err(ConfigError::new("config: alpha and measure are mutually exclusive")),
                (Some(a), None) => Ok(MechanismSource::Stable(a)),
                (None, Some(path)) => Ok(MechanismSource::Measure { path, drift }),
                (None, None) => Ok(MechanismSource::Stable(1.5)),
            }
        };
        let source = match (args.alpha, &args.measure) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::new("--alpha and --measure are mutually exclusive"))
            }
            (Some(a), None) => MechanismSource::Stable(a),
            (None, Some(path)) => MechanismSource::Measure { path: path.clone(), drift },
            (None, None) => from_file()?,
        };
        let mechanism = match &source {
            MechanismSource::Stable(a) => BranchingMechanism::stable(*a)?,
            MechanismSource::Measure { path, drift } => {
                let spec = LevyMeasureSpec::load(path)?;
                BranchingMechanism::general(*drift, spec)?
            }
        };

        let epsilon = positive("eps", args.eps.or(file.get("eps")?).unwrap_or(1e-2))?;
        mechanism.truncate(epsilon)?;
        let delta = positive("delta", args.delta.or(file.get("delta")?).unwrap_or(1e-4))?;
        let theta = positive("theta", args.theta.or(file.get("theta")?).unwrap_or(1.0))?;
        let theta_grid = match args.theta_grid.clone().or(file.list("theta_grid")?) {
            Some(g) => g,
            None => vec![theta],
        };
        for &t in &theta_grid {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(ConfigError::new(format!("--theta-grid entries must be non-negative, got {t}")));
            }
        }
        let n: Option<u64> = args.n.or(file.get("n")?);
        let seed = args.seed.or(file.get("seed")?).unwrap_or(7);
        let node_cap = args.node_cap.or(file.get("node_cap")?).unwrap_or(DEFAULT_NODE_CAP);
        if node_cap == 0 {
            return Err(ConfigError::new("--node-cap must be at least 1"));
        }
        let mass_cap = match args.mass_cap.or(file.get("mass_cap")?) {
            Some(m) => positive("mass-cap", m)?,
            None => f64::INFINITY,
        };
        let out_dir = args
            .out_dir
            .clone()
            .or(file.get("out_dir")?)
            .unwrap_or_else(|| PathBuf::from("out"));
        let lambda_grid = args
            .lambda_grid
            .clone()
            .or(file.list("lambda_grid")?)
            .unwrap_or_else(|| vec![0.5, 1.0, 2.0, 4.0]);
        if lambda_grid.is_empty() {
            return Err(ConfigError::new("--lambda-grid must not be empty"));
        }
        for &l in &lambda_grid {
            positive("lambda-grid", l)?;
        }
        let checks = args
            .checks
            .clone()
            .or(file.list("checks")?)
            .unwrap_or_else(|| CHECK_NAMES.iter().map(|s| s.to_string()).collect());
        for c in &checks {
            if !CHECK_NAMES.contains(&c.as_str()) {
                return Err(ConfigError::new(format!(
                    "unknown check `{c}`; expected one of {}",
                    CHECK_NAMES.join(", ")
                )));
            }
        }
        let workers: Option<usize> = args.workers.or(file.get("workers")?);
        if workers == Some(0) {
            return Err(ConfigError::new("--workers must be at least 1"));
        }
        let r = positive("r", args.r.or(file.get("r")?).unwrap_or(1.0))?;
        let refine = !args.no_refine && file.get::<bool>("refine")?.unwrap_or(true);
        let refine_n: Option<u64> = args.refine_n.or(file.get("refine_n")?);
        if refine_n == Some(0) {
            return Err(ConfigError::new("--refine-n must be positive"));
        }
        let tree_id = args.tree_id.or(file.get("tree_id")?).unwrap_or(0);
        Ok(RunConfig {
            source,
            mechanism,
            epsilon,
            delta,
            theta,
            theta_grid,
            n,
            seed,
            node_cap,
            mass_cap,
            out_dir,
            lambda_grid,
            checks,
            workers,
            r,
            refine,
            refine_n,
            tree_id,
        })
    }

    pub fn check_config(&self) -> CheckConfig {
        CheckConfig {
            mechanism: self.mechanism.clone(),
            epsilon: self.epsilon,
            theta: self.theta,
            seed: self.seed,
            node_cap: self.node_cap,
            n: self.n,
            refine_n: self.refine_n,
            refine: self.refine,
            lambda_grid: self.lambda_grid.clone(),
            ..CheckConfig::default()
        }
    }

    /// The configuration as a file accepted by `--config`. The worker count
    /// is left out: it never changes results.
    pub fn to_file(&self, command: &str) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut s = format!("# crtfrag {} run configuration\n", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "command = {command}");
        match &self.source {
            MechanismSource::Stable(a) => {
                let _ = writeln!(s, "alpha = {a}");
            }
            MechanismSource::Measure { path, drift } => {
                let _ = writeln!(s, "measure = {}", path.display());
                let _ = writeln!(s, "drift = {drift}");
            }
        }
        let _ = writeln!(s, "eps = {}", self.epsilon);
        let _ = writeln!(s, "delta = {}", self.delta);
        let _ = writeln!(s, "theta = {}", self.theta);
        let _ = writeln!(s, "theta_grid = {}", join(&self.theta_grid));
        if let Some(n) = self.n {
            let _ = writeln!(s, "n = {n}");
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "node_cap = {}", self.node_cap);
        if self.mass_cap.is_finite() {
            let _ = writeln!(s, "mass_cap = {}", self.mass_cap);
        }
        let _ = writeln!(s, "out_dir = {}", self.out_dir.display());
        let _ = writeln!(s, "lambda_grid = {}", join(&self.lambda_grid));
        let _ = writeln!(s, "checks = {}", self.checks.join(","));
        let _ = writeln!(s, "r = {}", self.r);
        let _ = writeln!(s, "refine = {}", self.refine);
        if let Some(n) = self.refine_n {
            let _ = writeln!(s, "refine_n = {n}");
        }
        let _ = writeln!(s, "tree_id = {}", self.tree_id);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_file(text: &str) -> (tempfile::TempDir, CommonArgs) {
        let d = tempfile::TempDir::new().unwrap();
        let p = d.path().join("c.conf");
        std::fs::write(&p, text).unwrap();
        let args = CommonArgs {
            config: Some(p),
            ..CommonArgs::default()
        };
        (d, args)
    }

    #[test]
    fn defaults() {
        let c = RunConfig::resolve(&CommonArgs::default()).unwrap();
        assert!(matches!(c.source, MechanismSource::Stable(a) if a == 1.5));
        assert_eq!((c.epsilon, c.theta, c.seed), (1e-2, 1.0, 7));
        assert_eq!(c.theta_grid, vec![1.0]);
        assert_eq!(c.checks.len(), CHECK_NAMES.len());
        assert!(c.refine && c.mass_cap.is_infinite());
    }

    #[test]
    fn flags_override_file() {
        let (_d, mut args) = with_file("eps = 0.05\nseed = 3\nnode-cap = 10\nrefine = false\n");
        args.seed = Some(9);
        let c = RunConfig::resolve(&args).unwrap();
        assert_eq!((c.epsilon, c.seed, c.node_cap, c.refine), (0.05, 9, 10, false));
    }

    #[test]
    fn file_errors() {
        for text in ["eps 0.1\n", "eps = x\n", "speed = 3\n", "alpha = 1.5\nmeasure = m.txt\n"] {
            let (_d, args) = with_file(text);
            assert!(RunConfig::resolve(&args).is_err(), "{text}");
        }
    }

    #[test]
    fn echo_round_trips() {
        let args = CommonArgs {
            alpha: Some(1.3),
            theta_grid: Some(vec![0.5, 2.0]),
            n: Some(12),
            mass_cap: Some(40.0),
            checks: Some(vec!["mass".into()]),
            ..CommonArgs::default()
        };
        let c = RunConfig::resolve(&args).unwrap();
        let (_d, again) = with_file(&c.to_file("tree"));
        let d = RunConfig::resolve(&again).unwrap();
        assert_eq!(c.to_file("tree"), d.to_file("tree"));
    }

    #[test]
    fn domain_error_is_a_usage_error() {
        let e = RunConfig::resolve(&CommonArgs {
            alpha: Some(1.0),
            ..CommonArgs::default()
        })
        .unwrap_err();
        assert!(!e.inadmissible);
    }
}

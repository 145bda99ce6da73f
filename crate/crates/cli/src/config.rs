//! Run configuration: a TOML file with the sections `[model]`, `[scales]`,
//! `[run]`, `[experiment]` and `[output]`, then command-line overrides.
//!
//! Precedence, highest first: command-line flags, the `MORAN_WORKERS`
//! environment variable (worker count only), the config file, and the
//! defaults of the subcommand.

use std::path::{Path, PathBuf};

use moran_core::init::InitialProfile;
use moran_core::{Params, Scales, WChoice, WPreset};
use serde::{Deserialize, Serialize};

use crate::Command;

/// Keys accepted in each section.
const KNOWN: &[(&str, &[&str])] = &[
    ("model", &["n", "mu", "q", "gamma"]),
    ("scales", &["preset", "multiplier"]),
    (
        "run",
        &[
            "t_end",
            "t_rule",
            "replicates",
            "seed",
            "grid_points",
            "event_rows",
            "labels",
            "particle_cap",
            "workers",
        ],
    ),
    (
        "experiment",
        &[
            "profile",
            "height",
            "height_in_w",
            "n_grid",
            "radius",
            "leak_tol",
            "coupling",
            "k",
            "below",
            "max_ratio_spread",
            "gain_checks",
        ],
    ),
    ("output", &["directory", "formats"]),
];

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub scales: ScalesSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n: Option<usize>,
    pub mu: Option<f64>,
    pub q: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalesSection {
    pub preset: Option<String>,
    pub multiplier: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub t_end: Option<f64>,
    pub t_rule: Option<String>,
    pub replicates: Option<u64>,
    pub seed: Option<u64>,
    pub grid_points: Option<usize>,
    pub event_rows: Option<bool>,
    pub labels: Option<bool>,
    pub particle_cap: Option<u64>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub profile: Option<String>,
    pub height: Option<i64>,
    pub height_in_w: Option<i64>,
    pub n_grid: Option<Vec<usize>>,
    pub radius: Option<usize>,
    pub leak_tol: Option<f64>,
    pub coupling: Option<String>,
    pub k: Option<i64>,
    pub below: Option<i64>,
    pub max_ratio_spread: Option<f64>,
    pub gain_checks: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<String>,
    pub formats: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TRule {
    Fixed,
    #[serde(rename = "loglog")]
    LogLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingChoice {
    Backspeed,
    Upbound,
    Tracked,
}

/// Flag overrides collected by the argument parser.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicates: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub format: Option<Format>,
    /// Value of the worker-count environment variable, if set.
    pub env_workers: Option<String>,
}

/// Fully resolved configuration, echoed in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub command: &'static str,
    pub params: Params,
    pub w: WChoice,
    pub t_end: f64,
    pub t_rule: TRule,
    pub replicates: u64,
    pub seed: u64,
    pub grid_points: usize,
    pub event_rows: bool,
    pub labels: bool,
    pub particle_cap: u64,
    pub workers: usize,
    pub profile_name: String,
    pub height: Option<i64>,
    pub height_in_w: Option<i64>,
    pub n_grid: Vec<usize>,
    pub radius: usize,
    pub leak_tol: f64,
    pub coupling: CouplingChoice,
    pub k: i64,
    pub below: i64,
    pub max_ratio_spread: f64,
    pub gain_checks: bool,
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Resolved {
    pub fn scales(&self) -> Option<Scales> {
        Scales::new(self.params.n, self.w).ok()
    }

    /// Initial profile for population size `n`. Without an explicit height
    /// the height is `height_in_w` (default 1) times the width scale of `n`,
    /// or 1 where the scale is undefined.
    pub fn profile_for(&self, n: usize) -> Result<InitialProfile, ConfigError> {
        let height = match self.height {
            Some(h) => h,
            None => match Scales::new(n, self.w) {
                Ok(s) => self.height_in_w.unwrap_or(1) * s.cal_w,
                Err(_) => 1,
            },
        };
        parse_profile(&self.profile_name, height)
    }

    pub fn profile(&self) -> Result<InitialProfile, ConfigError> {
        self.profile_for(self.params.n)
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Every key of `text` that no section accepts, as `section.key`.
pub fn unknown_keys(table: &toml::Table) -> Vec<String> {
    let mut out = Vec::new();
    for (section, value) in table {
        match KNOWN.iter().find(|(name, _)| name == section) {
            None => out.push(section.clone()),
            Some((_, keys)) => match value.as_table() {
                Some(t) => out.extend(
                    t.keys()
                        .filter(|k| !keys.contains(&k.as_str()))
                        .map(|k| format!("{section}.{k}")),
                ),
                None => out.push(format!("{section} (not a table)")),
            },
        }
    }
    out
}

pub fn parse_file_config(text: &str) -> Result<FileConfig, ConfigError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e| ConfigError(format!("config is not valid TOML: {e}")))?;
    let unknown = unknown_keys(&table);
    if !unknown.is_empty() {
        return err(format!("unknown config keys: {}", unknown.join(", ")));
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| ConfigError(format!("invalid config value: {e}")))
}

pub fn load_file_config(path: Option<&Path>) -> Result<FileConfig, ConfigError> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| ConfigError(format!("cannot read {}: {e}", p.display())))?;
            parse_file_config(&text)
        }
    }
}

struct Defaults {
    n: usize,
    q: f64,
    t_end: f64,
    replicates: u64,
    t_rule: TRule,
    n_grid: &'static [usize],
}

fn defaults(cmd: Command) -> Defaults {
    let base = Defaults {
        n: 100,
        q: 0.5,
        t_end: 1.0,
        replicates: 1,
        t_rule: TRule::Fixed,
        n_grid: &[],
    };
    match cmd {
        Command::Simulate => base,
        Command::Sweep => Defaults {
            q: 0.1,
            replicates: 500,
            t_rule: TRule::LogLog,
            n_grid: &[100, 1_000, 10_000, 100_000],
            ..base
        },
        Command::CoupleCheck => Defaults {
            n: 10,
            replicates: 1_000,
            ..base
        },
        Command::TailCheck => Defaults {
            n: 10,
            replicates: 10_000,
            ..base
        },
        Command::WidthExp => Defaults {
            replicates: 500,
            n_grid: &[1_000, 10_000, 100_000],
            ..base
        },
        Command::PropCheck => Defaults {
            n: 10_000,
            replicates: 1_000,
            ..base
        },
        Command::OracleCheck => Defaults {
            n: 2,
            replicates: 100_000,
            ..base
        },
    }
}

fn parse_profile(name: &str, height: i64) -> Result<InitialProfile, ConfigError> {
    Ok(match name {
        "all-zero" => InitialProfile::AllZero,
        "two-point-balanced" => InitialProfile::TwoPointBalanced { height },
        "two-point-extreme" => InitialProfile::TwoPointExtreme { height },
        "ladder" => InitialProfile::Ladder { height },
        other => {
            return err(format!(
                "unknown profile '{other}' (expected all-zero, two-point-balanced, two-point-extreme or ladder)"
            ))
        }
    })
}

pub fn resolve(
    cmd: Command,
    file: &FileConfig,
    flags: &Overrides,
) -> Result<Resolved, ConfigError> {
    let d = defaults(cmd);
    let m = &file.model;
    let params = Params {
        n: m.n.unwrap_or(d.n),
        mu: m.mu.unwrap_or(1.0),
        q: m.q.unwrap_or(d.q),
        gamma: m.gamma.unwrap_or(1.0),
    };
    // the simulator and the sweep admit the neutral model
    let check = match cmd {
        Command::Simulate | Command::Sweep | Command::OracleCheck => {
            params.validate_neutral_allowed()
        }
        _ => params.validate(),
    };
    check.map_err(|e| ConfigError(e.to_string()))?;

    let preset: WPreset = match &file.scales.preset {
        Some(s) => s
            .parse()
            .map_err(|e: moran_core::Error| ConfigError(e.to_string()))?,
        None => WPreset::default(),
    };
    let w = WChoice {
        preset,
        scale: file.scales.multiplier.unwrap_or(1.0),
    };
    if !(w.scale > 0.0 && w.scale.is_finite()) {
        return err(format!(
            "scales.multiplier must be positive (got {})",
            w.scale
        ));
    }

    let r = &file.run;
    let t_rule = match r.t_rule.as_deref() {
        None => d.t_rule,
        Some("fixed") => TRule::Fixed,
        Some("loglog") => TRule::LogLog,
        Some(other) => {
            return err(format!(
                "unknown run.t_rule '{other}' (expected fixed or loglog)"
            ))
        }
    };
    let t_end = r.t_end.unwrap_or(d.t_end);
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return err(format!("run.t_end must be finite and >= 0 (got {t_end})"));
    }
    let workers = match (flags.workers, &flags.env_workers, r.workers) {
        (Some(w), _, _) => w,
        (None, Some(v), _) => v.parse().map_err(|_| {
            ConfigError(format!(
                "MORAN_WORKERS must be a nonnegative integer (got '{v}')"
            ))
        })?,
        (None, None, Some(w)) => w,
        (None, None, None) => 1,
    };
    let replicates = flags.replicates.or(r.replicates).unwrap_or(d.replicates);
    if replicates == 0 {
        return err("replicates must be at least 1");
    }

    let e = &file.experiment;
    let profile_name = e.profile.clone().unwrap_or_else(|| match cmd {
        Command::WidthExp => "two-point-balanced".into(),
        _ => "all-zero".into(),
    });
    let coupling = match e.coupling.as_deref().unwrap_or("upbound") {
        "backspeed" => CouplingChoice::Backspeed,
        "upbound" => CouplingChoice::Upbound,
        "tracked" => CouplingChoice::Tracked,
        other => {
            return err(format!(
                "unknown experiment.coupling '{other}' (expected backspeed, upbound or tracked)"
            ))
        }
    };
    let k = e.k.unwrap_or(3);
    if k < 1 {
        return err(format!("experiment.k must be >= 1 (got {k})"));
    }
    let formats = match (flags.format, &file.output.formats) {
        (Some(f), _) => vec![f],
        (None, Some(list)) => list
            .iter()
            .map(|s| s.parse::<Format>().map_err(ConfigError))
            .collect::<Result<_, _>>()?,
        (None, None) => vec![Format::Csv],
    };
    let directory = flags
        .out
        .clone()
        .or_else(|| file.output.directory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("moran-out"));

    let resolved = Resolved {
        command: cmd.name(),
        params,
        w,
        t_end,
        t_rule,
        replicates,
        seed: flags.seed.or(r.seed).unwrap_or(1),
        grid_points: r.grid_points.unwrap_or(100),
        event_rows: r.event_rows.unwrap_or(false),
        labels: r.labels.unwrap_or(false),
        particle_cap: r
            .particle_cap
            .unwrap_or(moran_core::branching::DEFAULT_PARTICLE_CAP),
        workers,
        profile_name,
        height: e.height,
        height_in_w: e.height_in_w,
        n_grid: e.n_grid.clone().unwrap_or_else(|| d.n_grid.to_vec()),
        radius: e.radius.unwrap_or(6),
        leak_tol: e.leak_tol.unwrap_or(1e-6),
        coupling,
        k,
        below: e.below.unwrap_or(1),
        max_ratio_spread: e.max_ratio_spread.unwrap_or(4.0),
        gain_checks: e.gain_checks.unwrap_or(true),
        directory,
        formats,
    };
    resolved.profile()?;
    Ok(resolved)
}

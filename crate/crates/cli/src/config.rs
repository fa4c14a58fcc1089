//! Run configuration files.
//!
//! Grammar, one item per line:
//!
//! ```text
//! # comment                      (also allowed after a value)
//! mode = run                     (top level, optional: run | scan | friction | hist)
//! [section]                      (system, initial, ensemble, grid, friction, histogram, output)
//! key = value
//! ```
//!
//! Keys are unique within a section and unknown keys are rejected. Values are
//! in recoil units; only `kbt0` takes a unit suffix, `hbar_kappa` or
//! `hbar_omega_r`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use cavicool_core::friction::DragConfig;
use cavicool_core::scan::{AxisSpec, GridSpec, ScanAxis};
use cavicool_core::{EnsembleConfig, FrictionModel, InitialConditions, Scheme, SystemParams, TransversePump};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Run,
    Scan,
    Friction,
    Hist,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Run => "run",
            Mode::Scan => "scan",
            Mode::Friction => "friction",
            Mode::Hist => "hist",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramConfig {
    /// Snapshot time; defaults to `t_final`.
    pub t_snapshot: Option<f64>,
    pub n_bins: usize,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        HistogramConfig {
            t_snapshot: None,
            n_bins: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub system: SystemParams,
    pub initial: InitialConditions,
    pub ensemble: EnsembleConfig,
    /// Number of trajectories whose full series is written in run mode.
    pub dump_trajectories: usize,
    pub grid: Option<GridSpec>,
    pub friction: DragConfig,
    pub histogram: HistogramConfig,
    pub out_dir: Option<PathBuf>,
    pub overwrite: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing required keys: {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error("{0}")]
    Invalid(String),
}

fn at(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError::Line {
        line,
        message: message.into(),
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("", &["mode"]),
    (
        "system",
        &[
            "kappa", "gamma", "g0", "delta_a", "delta_c", "eta_l", "eta_eff", "omega", "ubar_sq",
        ],
    ),
    (
        "initial",
        &["kbt0", "x_center", "x_sigma", "alpha0_re", "alpha0_im"],
    ),
    (
        "ensemble",
        &[
            "n_traj",
            "t_final",
            "dt",
            "sample_stride",
            "steady_window",
            "seed",
            "scheme",
            "noise",
            "cooling_threshold",
            "dump_trajectories",
        ],
    ),
    (
        "grid",
        &[
            "axis1",
            "axis1_start",
            "axis1_stop",
            "axis1_step",
            "axis2",
            "axis2_start",
            "axis2_stop",
            "axis2_step",
        ],
    ),
    (
        "friction",
        &[
            "v",
            "n_transient_periods",
            "n_average_periods",
            "dt",
            "model",
            "check_linearity",
        ],
    ),
    ("histogram", &["t_snapshot", "n_bins"]),
    ("output", &["dir", "overwrite"]),
];

const REQUIRED: &[(&str, &str)] = &[
    ("system", "kappa"),
    ("system", "gamma"),
    ("system", "g0"),
    ("system", "delta_a"),
    ("system", "delta_c"),
    ("system", "eta_l"),
    ("initial", "kbt0"),
];

#[derive(Debug, Clone)]
struct Entry {
    line: usize,
    value: String,
}

type Table = BTreeMap<(String, String), Entry>;

fn tokenize(text: &str) -> Result<Table, ConfigError> {
    let mut table = Table::new();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| at(line, format!("malformed section header `{content}`")))?
                .trim();
            if name.is_empty() || !SECTIONS.iter().any(|(s, _)| *s == name) {
                return Err(at(line, format!("unknown section [{name}]")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| at(line, format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let known = SECTIONS
            .iter()
            .find(|(s, _)| *s == section)
            .is_some_and(|(_, keys)| keys.contains(&key));
        if !known {
            let place = if section.is_empty() {
                "at top level".to_string()
            } else {
                format!("in [{section}]")
            };
            return Err(at(line, format!("unknown key `{key}` {place}")));
        }
        if value.is_empty() {
            return Err(at(line, format!("`{key}` has no value")));
        }
        let slot = (section.clone(), key.to_string());
        if let Some(first) = table.get(&slot) {
            return Err(at(
                line,
                format!("duplicate key `{key}` (first defined on line {})", first.line),
            ));
        }
        table.insert(
            slot,
            Entry {
                line,
                value: value.to_string(),
            },
        );
    }
    Ok(table)
}

struct Reader {
    table: Table,
}

impl Reader {
    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.table.get(&(section.to_string(), key.to_string()))
    }

    fn parse<T: FromStr>(&self, section: &str, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        let Some(e) = self.entry(section, key) else {
            return Ok(None);
        };
        if e.value.split_whitespace().count() > 1 {
            return Err(at(
                e.line,
                format!("`{key}` does not take a unit suffix (value `{}`)", e.value),
            ));
        }
        e.value
            .parse()
            .map(Some)
            .map_err(|_| at(e.line, format!("`{key}`: expected {what}, got `{}`", e.value)))
    }

    fn f64(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        self.parse(section, key, "a number")
    }

    fn usize(&self, section: &str, key: &str) -> Result<Option<usize>, ConfigError> {
        self.parse(section, key, "a non-negative integer")
    }

    fn bool(&self, section: &str, key: &str) -> Result<Option<bool>, ConfigError> {
        self.parse(section, key, "true or false")
    }

    fn keyword<T>(&self, section: &str, key: &str, options: &[(&str, T)]) -> Result<Option<T>, ConfigError>
    where
        T: Copy,
    {
        let Some(e) = self.entry(section, key) else {
            return Ok(None);
        };
        options
            .iter()
            .find(|(name, _)| *name == e.value)
            .map(|(_, v)| Some(*v))
            .ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                at(
                    e.line,
                    format!("`{key}`: expected one of {}, got `{}`", names.join(", "), e.value),
                )
            })
    }
}

/// Parses a configuration file.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let r = Reader {
        table: tokenize(text)?,
    };

    let missing: Vec<String> = REQUIRED
        .iter()
        .filter(|(s, k)| r.entry(s, k).is_none())
        .map(|(s, k)| format!("[{s}] {k}"))
        .collect();
    if !missing.is_empty() {
        return Err(ConfigError::Missing(missing));
    }

    let mode = r.keyword(
        "",
        "mode",
        &[
            ("run", Mode::Run),
            ("scan", Mode::Scan),
            ("friction", Mode::Friction),
            ("hist", Mode::Hist),
        ],
    )?;

    let req = |key| r.f64("system", key).map(|v| v.expect("checked above"));
    let pump = match (r.entry("system", "omega"), r.entry("system", "eta_eff")) {
        (Some(a), Some(b)) => {
            return Err(at(
                b.line.max(a.line),
                format!(
                    "`omega` (line {}) and `eta_eff` (line {}) are mutually exclusive",
                    a.line, b.line
                ),
            ))
        }
        (Some(_), None) => TransversePump::Omega(r.f64("system", "omega")?.unwrap()),
        (None, Some(_)) => TransversePump::EtaEff(r.f64("system", "eta_eff")?.unwrap()),
        (None, None) => TransversePump::EtaEff(0.0),
    };
    let system = SystemParams {
        kappa: req("kappa")?,
        gamma: req("gamma")?,
        g0: req("g0")?,
        delta_a: req("delta_a")?,
        delta_c: req("delta_c")?,
        eta_l: req("eta_l")?,
        pump,
        ubar_sq: r
            .f64("system", "ubar_sq")?
            .unwrap_or(cavicool_core::params::DEFAULT_UBAR_SQ),
    };

    let kbt0 = parse_kbt0(r.entry("initial", "kbt0").unwrap(), system.kappa)?;
    let ic_default = InitialConditions::default();
    let initial = InitialConditions {
        kbt0,
        x_center: r.f64("initial", "x_center")?.unwrap_or(ic_default.x_center),
        x_sigma: r.f64("initial", "x_sigma")?.unwrap_or(ic_default.x_sigma),
        alpha0: Complex64::new(
            r.f64("initial", "alpha0_re")?.unwrap_or(0.0),
            r.f64("initial", "alpha0_im")?.unwrap_or(0.0),
        ),
    };

    let e = EnsembleConfig::default();
    let ensemble = EnsembleConfig {
        n_traj: r.usize("ensemble", "n_traj")?.unwrap_or(e.n_traj),
        t_final: r.f64("ensemble", "t_final")?.unwrap_or(e.t_final),
        dt: r.f64("ensemble", "dt")?.unwrap_or(e.dt),
        sample_stride: r.usize("ensemble", "sample_stride")?.unwrap_or(e.sample_stride),
        steady_window: r.f64("ensemble", "steady_window")?.unwrap_or(e.steady_window),
        seed: r
            .parse("ensemble", "seed", "an unsigned integer")?
            .unwrap_or(e.seed),
        scheme: r.keyword("ensemble", "scheme", SCHEMES)?.unwrap_or(e.scheme),
        noise: r.bool("ensemble", "noise")?.unwrap_or(e.noise),
        cooling_threshold: r.f64("ensemble", "cooling_threshold")?.or(e.cooling_threshold),
    };
    let dump_trajectories = r.usize("ensemble", "dump_trajectories")?.unwrap_or(0);

    let grid = parse_grid(&r)?;

    let f = DragConfig::default();
    let friction = DragConfig {
        v: r.f64("friction", "v")?.unwrap_or(f.v),
        n_transient_periods: r
            .parse("friction", "n_transient_periods", "a non-negative integer")?
            .unwrap_or(f.n_transient_periods),
        n_average_periods: r
            .parse("friction", "n_average_periods", "a non-negative integer")?
            .unwrap_or(f.n_average_periods),
        dt: r.f64("friction", "dt")?.unwrap_or(f.dt),
        model: r.keyword("friction", "model", MODELS)?.unwrap_or(f.model),
        check_linearity: r
            .bool("friction", "check_linearity")?
            .unwrap_or(f.check_linearity),
    };

    let h = HistogramConfig::default();
    let histogram = HistogramConfig {
        t_snapshot: r.f64("histogram", "t_snapshot")?.or(h.t_snapshot),
        n_bins: r.usize("histogram", "n_bins")?.unwrap_or(h.n_bins),
    };

    Ok(RunConfig {
        mode,
        system,
        initial,
        ensemble,
        dump_trajectories,
        grid,
        friction,
        histogram,
        out_dir: r.entry("output", "dir").map(|e| PathBuf::from(&e.value)),
        overwrite: r.bool("output", "overwrite")?.unwrap_or(false),
    })
}

const SCHEMES: &[(&str, Scheme)] = &[
    ("euler_maruyama", Scheme::EulerMaruyama),
    ("semi_implicit", Scheme::SemiImplicit),
    ("rk4", Scheme::Rk4),
];

const MODELS: &[(&str, FrictionModel)] = &[
    ("pre_adiabatic", FrictionModel::PreAdiabatic),
    ("adiabatic", FrictionModel::Adiabatic),
];

fn parse_kbt0(e: &Entry, kappa: f64) -> Result<f64, ConfigError> {
    let mut parts = e.value.split_whitespace();
    let number = parts.next().unwrap_or("");
    let unit = parts.next();
    if parts.next().is_some() {
        return Err(at(e.line, format!("`kbt0`: unexpected text in `{}`", e.value)));
    }
    let x: f64 = number
        .parse()
        .map_err(|_| at(e.line, format!("`kbt0`: expected a number, got `{number}`")))?;
    match unit {
        None | Some("hbar_omega_r") => Ok(x),
        Some("hbar_kappa") => Ok(x * kappa),
        Some(other) => Err(at(
            e.line,
            format!("`kbt0`: unknown unit `{other}` (expected hbar_kappa or hbar_omega_r)"),
        )),
    }
}

fn parse_grid(r: &Reader) -> Result<Option<GridSpec>, ConfigError> {
    if !r.table.keys().any(|(s, _)| s == "grid") {
        return Ok(None);
    }
    let mut missing = Vec::new();
    for k in SECTIONS.iter().find(|(s, _)| *s == "grid").unwrap().1 {
        if r.entry("grid", k).is_none() {
            missing.push(format!("[grid] {k}"));
        }
    }
    if !missing.is_empty() {
        return Err(ConfigError::Missing(missing));
    }
    let axis = |prefix: &str| -> Result<AxisSpec, ConfigError> {
        let name = r.entry("grid", prefix).unwrap();
        let axis: ScanAxis = name
            .value
            .parse()
            .map_err(|e: cavicool_core::scan::ScanError| at(name.line, e.to_string()))?;
        Ok(AxisSpec {
            axis,
            start: r.f64("grid", &format!("{prefix}_start"))?.unwrap(),
            stop: r.f64("grid", &format!("{prefix}_stop"))?.unwrap(),
            step: r.f64("grid", &format!("{prefix}_step"))?.unwrap(),
        })
    };
    let grid = GridSpec {
        axis1: axis("axis1")?,
        axis2: axis("axis2")?,
    };
    grid.validate().map_err(|e| {
        let line = r.entry("grid", "axis1").map_or(0, |e| e.line);
        at(line, e.to_string())
    })?;
    Ok(Some(grid))
}

fn name_of<T: PartialEq + Copy>(options: &[(&'static str, T)], value: T) -> &'static str {
    options
        .iter()
        .find(|(_, v)| *v == value)
        .map(|(n, _)| *n)
        .unwrap()
}

/// Writes `cfg` in the file format, with every defaulted value explicit.
/// `parse_config(&to_config_string(c))` reproduces `c`.
pub fn to_config_string(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let w = &mut s;
    if let Some(mode) = cfg.mode {
        let _ = writeln!(w, "mode = {mode}\n");
    }
    let p = &cfg.system;
    let _ = writeln!(w, "[system]");
    for (k, v) in [
        ("kappa", p.kappa),
        ("gamma", p.gamma),
        ("g0", p.g0),
        ("delta_a", p.delta_a),
        ("delta_c", p.delta_c),
        ("eta_l", p.eta_l),
    ] {
        let _ = writeln!(w, "{k} = {v:?}");
    }
    match p.pump {
        TransversePump::Omega(o) => {
            let _ = writeln!(w, "omega = {o:?}");
        }
        TransversePump::EtaEff(e) => {
            let _ = writeln!(w, "eta_eff = {e:?}");
        }
    }
    let _ = writeln!(w, "ubar_sq = {:?}", p.ubar_sq);

    let ic = &cfg.initial;
    let _ = writeln!(w, "\n[initial]");
    let _ = writeln!(w, "kbt0 = {:?} hbar_omega_r", ic.kbt0);
    let _ = writeln!(w, "x_center = {:?}", ic.x_center);
    let _ = writeln!(w, "x_sigma = {:?}", ic.x_sigma);
    let _ = writeln!(w, "alpha0_re = {:?}", ic.alpha0.re);
    let _ = writeln!(w, "alpha0_im = {:?}", ic.alpha0.im);

    let e = &cfg.ensemble;
    let _ = writeln!(w, "\n[ensemble]");
    let _ = writeln!(w, "n_traj = {}", e.n_traj);
    let _ = writeln!(w, "t_final = {:?}", e.t_final);
    let _ = writeln!(w, "dt = {:?}", e.dt);
    let _ = writeln!(w, "sample_stride = {}", e.sample_stride);
    let _ = writeln!(w, "steady_window = {:?}", e.steady_window);
    let _ = writeln!(w, "seed = {}", e.seed);
    let _ = writeln!(w, "scheme = {}", name_of(SCHEMES, e.scheme));
    let _ = writeln!(w, "noise = {}", e.noise);
    if let Some(th) = e.cooling_threshold {
        let _ = writeln!(w, "cooling_threshold = {th:?}");
    }
    let _ = writeln!(w, "dump_trajectories = {}", cfg.dump_trajectories);

    if let Some(g) = &cfg.grid {
        let _ = writeln!(w, "\n[grid]");
        for (prefix, a) in [("axis1", &g.axis1), ("axis2", &g.axis2)] {
            let _ = writeln!(w, "{prefix} = {}", a.axis);
            let _ = writeln!(w, "{prefix}_start = {:?}", a.start);
            let _ = writeln!(w, "{prefix}_stop = {:?}", a.stop);
            let _ = writeln!(w, "{prefix}_step = {:?}", a.step);
        }
    }

    let f = &cfg.friction;
    let _ = writeln!(w, "\n[friction]");
    let _ = writeln!(w, "v = {:?}", f.v);
    let _ = writeln!(w, "n_transient_periods = {}", f.n_transient_periods);
    let _ = writeln!(w, "n_average_periods = {}", f.n_average_periods);
    let _ = writeln!(w, "dt = {:?}", f.dt);
    let _ = writeln!(w, "model = {}", name_of(MODELS, f.model));
    let _ = writeln!(w, "check_linearity = {}", f.check_linearity);

    let h = &cfg.histogram;
    let _ = writeln!(w, "\n[histogram]");
    if let Some(t) = h.t_snapshot {
        let _ = writeln!(w, "t_snapshot = {t:?}");
    }
    let _ = writeln!(w, "n_bins = {}", h.n_bins);

    let _ = writeln!(w, "\n[output]");
    if let Some(dir) = &cfg.out_dir {
        let _ = writeln!(w, "dir = {}", dir.display());
    }
    let _ = writeln!(w, "overwrite = {}", cfg.overwrite);
    s
}

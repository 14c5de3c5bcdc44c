//! Run configuration in a flat `key=value` format.
//!
//! Pairs are separated by newlines or commas and `#` starts a comment.
//! `test_case` and `mesh_level` are required; everything else has a default.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::solver::{AmrConfig, SolverConfig, Summation};
use crate::test_cases::{ForcingConfig, TestCaseId};
use crate::treecode::TraversalConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got '{text}'")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key '{key}'")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid value '{value}' for {key}: {reason}")]
    InvalidValue { line: usize, key: String, value: String, reason: String },
    #[error("line {line}: missing required key '{key}'")]
    MissingKey { line: usize, key: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummationMode {
    Direct,
    Fast,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub test_case: TestCaseId,
    pub mesh_level: u32,
    pub summation: SummationMode,
    pub theta: f64,
    pub degree: usize,
    pub n_threshold: usize,
    /// Tree depth limit; `None` picks the mesh level plus two (plus the AMR levels).
    pub max_depth: Option<u32>,
    pub dt: f64,
    pub t_final: f64,
    pub remesh_interval: u32,
    pub amr: bool,
    pub eps1: f64,
    pub eps2: f64,
    pub amr_max_levels: u32,
    /// Forcing wavenumber; 0 disables forcing.
    pub forcing_k: u32,
    pub tp: f64,
    pub tf: f64,
    pub theta1: f64,
    /// Summation threads; 0 uses all cores.
    pub workers: usize,
    pub output_dir: PathBuf,
    /// Steps between snapshots; 0 writes only the first and last.
    pub snapshot_every: u64,
}

pub const KEYS: &[&str] = &[
    "test_case",
    "mesh_level",
    "summation",
    "theta",
    "degree",
    "n_threshold",
    "max_depth",
    "dt",
    "t_final",
    "remesh_interval",
    "amr",
    "eps1",
    "eps2",
    "amr_max_levels",
    "forcing_k",
    "tp",
    "tf",
    "theta1",
    "workers",
    "output_dir",
    "snapshot_every",
];

pub const MAX_MESH_LEVEL: u32 = 9;

impl RunConfig {
    pub fn new(test_case: TestCaseId, mesh_level: u32) -> Self {
        Self {
            test_case,
            mesh_level,
            summation: SummationMode::Fast,
            theta: 0.7,
            degree: 6,
            n_threshold: 32,
            max_depth: None,
            dt: 0.01,
            t_final: 1.0,
            remesh_interval: 10,
            amr: false,
            eps1: 0.0025,
            eps2: 0.2,
            amr_max_levels: 3,
            forcing_k: match test_case {
                TestCaseId::PolarVortex { k } => k,
                _ => 0,
            },
            tp: 4.0,
            tf: 15.0,
            theta1: PI / 3.0,
            workers: 0,
            output_dir: PathBuf::from("output"),
            snapshot_every: 0,
        }
    }

    pub fn amr_config(&self) -> Option<AmrConfig> {
        self.amr.then_some(AmrConfig { eps1: self.eps1, eps2: self.eps2, max_extra_levels: self.amr_max_levels })
    }

    pub fn forcing_config(&self) -> Option<ForcingConfig> {
        (self.forcing_k > 0).then_some(ForcingConfig { k: self.forcing_k, tp: self.tp, tf: self.tf, theta1: self.theta1 })
    }

    /// Depth limit for a particle mesh of the given level.
    pub fn resolved_max_depth(&self, level: u32) -> u32 {
        self.max_depth.unwrap_or(level + 2 + if self.amr { self.amr_max_levels } else { 0 })
    }

    pub fn traversal_config(&self, level: u32) -> TraversalConfig {
        TraversalConfig {
            theta: self.theta,
            n_threshold: self.n_threshold,
            degree: self.degree,
            max_depth: self.resolved_max_depth(level),
        }
    }

    pub fn summation_for(&self, mode: SummationMode) -> Summation {
        match mode {
            SummationMode::Direct => Summation::Direct,
            SummationMode::Fast => Summation::Fast(self.traversal_config(self.mesh_level)),
        }
    }

    pub fn solver_config(&self, mode: SummationMode) -> SolverConfig {
        SolverConfig {
            dt: self.dt,
            t_final: self.t_final,
            remesh_interval: self.remesh_interval,
            amr: self.amr_config(),
            forcing: self.forcing_config(),
            summation: self.summation_for(mode),
            workers: self.workers,
        }
    }

    /// Emits every key in the same dialect `parse_config` reads.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let case = match self.test_case {
            TestCaseId::PolarVortex { .. } => "polar_vortex".to_string(),
            other => other.to_string(),
        };
        let _ = writeln!(s, "test_case={case}");
        let _ = writeln!(s, "mesh_level={}", self.mesh_level);
        let _ = writeln!(s, "summation={}", if self.summation == SummationMode::Fast { "fast" } else { "direct" });
        let _ = writeln!(s, "theta={:?}", self.theta);
        let _ = writeln!(s, "degree={}", self.degree);
        let _ = writeln!(s, "n_threshold={}", self.n_threshold);
        if let Some(d) = self.max_depth {
            let _ = writeln!(s, "max_depth={d}");
        }
        let _ = writeln!(s, "dt={:?}", self.dt);
        let _ = writeln!(s, "t_final={:?}", self.t_final);
        let _ = writeln!(s, "remesh_interval={}", self.remesh_interval);
        let _ = writeln!(s, "amr={}", self.amr);
        let _ = writeln!(s, "eps1={:?}", self.eps1);
        let _ = writeln!(s, "eps2={:?}", self.eps2);
        let _ = writeln!(s, "amr_max_levels={}", self.amr_max_levels);
        let _ = writeln!(s, "forcing_k={}", self.forcing_k);
        let _ = writeln!(s, "tp={:?}", self.tp);
        let _ = writeln!(s, "tf={:?}", self.tf);
        let _ = writeln!(s, "theta1={:?}", self.theta1);
        let _ = writeln!(s, "workers={}", self.workers);
        let _ = writeln!(s, "output_dir={}", self.output_dir.display());
        let _ = writeln!(s, "snapshot_every={}", self.snapshot_every);
        s
    }
}

type Entries = BTreeMap<String, (usize, String)>;

fn tokenize(text: &str) -> Result<(Entries, usize), ConfigError> {
    let mut entries = Entries::new();
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("");
        for item in content.split(',') {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            let Some((key, value)) = item.split_once('=') else {
                return Err(ConfigError::Syntax { line, text: item.to_string() });
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey { line, key: key.to_string() });
            }
            if entries.insert(key.to_string(), (line, value.to_string())).is_some() {
                return Err(ConfigError::DuplicateKey { line, key: key.to_string() });
            }
        }
    }
    Ok((entries, last_line))
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_with_overrides(text, &[])
}

/// Parses `text`, then applies `overrides` (each `key=value`), which replace
/// values from the file. Override errors report line 0.
pub fn parse_config_with_overrides(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let (mut entries, last_line) = tokenize(text)?;
    for o in overrides {
        let (over, _) = tokenize(o).map_err(|e| match e {
            ConfigError::Syntax { text, .. } => ConfigError::Syntax { line: 0, text },
            ConfigError::UnknownKey { key, .. } => ConfigError::UnknownKey { line: 0, key },
            other => other,
        })?;
        for (k, (_, v)) in over {
            entries.insert(k, (0, v));
        }
    }
    build(&entries, last_line)
}

fn invalid(key: &str, line: usize, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue { line, key: key.to_string(), value: value.to_string(), reason: reason.into() }
}

fn number<T: std::str::FromStr>(key: &str, line: usize, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| invalid(key, line, value, e.to_string()))
}

fn build(entries: &Entries, last_line: usize) -> Result<RunConfig, ConfigError> {
    let required = |key: &str| {
        entries.get(key).ok_or_else(|| ConfigError::MissingKey { line: last_line, key: key.to_string() })
    };
    let (case_line, case_text) = required("test_case")?;
    let (level_line, level_text) = required("mesh_level")?;
    let forcing_k = match entries.get("forcing_k") {
        Some((line, v)) => {
            let k: u32 = number("forcing_k", *line, v)?;
            if k > 2 {
                return Err(invalid("forcing_k", *line, v, "must be 0, 1 or 2"));
            }
            Some(k)
        }
        None => None,
    };
    let test_case = match case_text.as_str() {
        "polar_vortex" => {
            let k = forcing_k.unwrap_or(1);
            if k == 0 {
                return Err(invalid("test_case", *case_line, case_text, "polar_vortex needs forcing_k 1 or 2"));
            }
            TestCaseId::PolarVortex { k }
        }
        other => other.parse::<TestCaseId>().map_err(|e| invalid("test_case", *case_line, case_text, e))?,
    };
    let mesh_level: u32 = number("mesh_level", *level_line, level_text)?;
    if mesh_level > MAX_MESH_LEVEL {
        return Err(invalid("mesh_level", *level_line, level_text, format!("must be at most {MAX_MESH_LEVEL}")));
    }
    let mut cfg = RunConfig::new(test_case, mesh_level);
    if let Some(k) = forcing_k {
        if let TestCaseId::PolarVortex { k: case_k } = test_case {
            if k != case_k {
                return Err(invalid("forcing_k", entries["forcing_k"].0, &k.to_string(), format!("{case_text} implies k={case_k}")));
            }
        }
        cfg.forcing_k = k;
    }

    for (key, (line, value)) in entries {
        let line = *line;
        let v = value.as_str();
        match key.as_str() {
            "test_case" | "mesh_level" | "forcing_k" => {}
            "summation" => {
                cfg.summation = match v {
                    "fast" => SummationMode::Fast,
                    "direct" => SummationMode::Direct,
                    _ => return Err(invalid(key, line, v, "expected 'fast' or 'direct'")),
                }
            }
            "theta" => {
                cfg.theta = number(key, line, v)?;
                if !(cfg.theta > 0.0 && cfg.theta <= 1.0) {
                    return Err(invalid(key, line, v, "must be in (0, 1]"));
                }
            }
            "degree" => {
                cfg.degree = number(key, line, v)?;
                if !(1..=20).contains(&cfg.degree) {
                    return Err(invalid(key, line, v, "must be between 1 and 20"));
                }
            }
            "n_threshold" => {
                cfg.n_threshold = number(key, line, v)?;
                if cfg.n_threshold == 0 {
                    return Err(invalid(key, line, v, "must be at least 1"));
                }
            }
            "max_depth" => {
                let d: u32 = number(key, line, v)?;
                if d == 0 {
                    return Err(invalid(key, line, v, "must be at least 1"));
                }
                cfg.max_depth = Some(d);
            }
            "dt" => {
                cfg.dt = number(key, line, v)?;
                if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
                    return Err(invalid(key, line, v, "must be positive"));
                }
            }
            "t_final" => {
                cfg.t_final = number(key, line, v)?;
                if !(cfg.t_final >= 0.0 && cfg.t_final.is_finite()) {
                    return Err(invalid(key, line, v, "must be non-negative"));
                }
            }
            "remesh_interval" => cfg.remesh_interval = number(key, line, v)?,
            "amr" => cfg.amr = number(key, line, v)?,
            "eps1" | "eps2" => {
                let x: f64 = number(key, line, v)?;
                if !(x > 0.0 && x.is_finite()) {
                    return Err(invalid(key, line, v, "must be positive"));
                }
                if key == "eps1" {
                    cfg.eps1 = x;
                } else {
                    cfg.eps2 = x;
                }
            }
            "amr_max_levels" => cfg.amr_max_levels = number(key, line, v)?,
            "tp" => cfg.tp = number(key, line, v)?,
            "tf" => cfg.tf = number(key, line, v)?,
            "theta1" => {
                cfg.theta1 = number(key, line, v)?;
                if !(cfg.theta1 > 0.0 && cfg.theta1 < PI / 2.0) {
                    return Err(invalid(key, line, v, "must be in (0, pi/2)"));
                }
            }
            "workers" => cfg.workers = number(key, line, v)?,
            "output_dir" => {
                if v.is_empty() {
                    return Err(invalid(key, line, v, "must not be empty"));
                }
                cfg.output_dir = PathBuf::from(v);
            }
            "snapshot_every" => cfg.snapshot_every = number(key, line, v)?,
            _ => unreachable!("keys are checked while tokenizing"),
        }
    }
    if !(cfg.tp > 0.0 && cfg.tp < cfg.tf / 2.0) {
        let line = entries.get("tp").or_else(|| entries.get("tf")).map_or(last_line, |e| e.0);
        return Err(invalid("tp", line, &cfg.tp.to_string(), format!("need 0 < tp < tf/2 (tf = {})", cfg.tf)));
    }
    Ok(cfg)
}

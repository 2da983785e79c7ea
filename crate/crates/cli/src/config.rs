//! Flat `key = value` experiment configuration.
//!
//! Values come from three layers, later ones winning: a config file,
//! environment variables named `MIXRG_` plus the key in upper case with dots
//! turned into underscores (`grid.p` is read from `MIXRG_GRID_P`), and
//! command-line overrides. Lists are comma separated.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mixrg::flow::{FlowKind, FlowMap};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const ENV_PREFIX: &str = "MIXRG_";

/// Every key the runner understands, in canonical order.
pub const KEYS: &[&str] = &[
    "experiment",
    "flow.kind",
    "grid.p",
    "grid.beta",
    "grid.L",
    "grid.a",
    "grid.b",
    "levels",
    "samples",
    "seed",
    "tmwpm.size_ratio",
    "tmwpm.block_ratio",
    "workers",
    "out",
];

// Keys that change where or how fast results are produced, not what they are.
const UNHASHED: &[&str] = &["workers", "out"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Unreadable { path: PathBuf, message: String },

    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("invalid configuration: {}", join(.0))]
    Invalid(Vec<FieldError>),
}

fn join(errors: &[FieldError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Which module a sweep drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Flow,
    RgDecoder,
    Decode,
    Tmwpm,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Flow => "flow",
            Experiment::RgDecoder => "rg-decoder",
            Experiment::Decode => "decode",
            Experiment::Tmwpm => "tmwpm",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [Experiment::Flow, Experiment::RgDecoder, Experiment::Decode, Experiment::Tmwpm]
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}` (flow, rg-decoder, decode, tmwpm)"))
    }
}

/// Untyped key-value layer.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    /// Parses `key = value` lines. Blank lines and lines starting with `#`
    /// are skipped.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = key.trim();
            if raw.values.contains_key(key) {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    message: format!("duplicate key `{key}`"),
                });
            }
            raw.set(key, value.trim())?;
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Applies `MIXRG_*` variables from `vars`. Variables with the prefix
    /// that match no key are rejected so typos do not pass silently.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<(), ConfigError> {
        let by_env: BTreeMap<String, &str> = KEYS.iter().map(|k| (env_name(k), *k)).collect();
        for (name, value) in vars {
            if !name.starts_with(ENV_PREFIX) {
                continue;
            }
            let key = by_env.get(&name).ok_or_else(|| ConfigError::UnknownKey(name.clone()))?;
            self.set(key, value.trim())?;
        }
        Ok(())
    }
}

/// Environment variable carrying `key`.
pub fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.to_uppercase().replace('.', "_"))
}

/// A validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub flow_kind: FlowKind,
    pub p: Vec<f64>,
    pub beta: Vec<f64>,
    pub sizes: Vec<usize>,
    pub buffers: Vec<usize>,
    pub blocks: Vec<usize>,
    pub levels: usize,
    pub samples: usize,
    pub seed: u64,
    pub size_ratio: usize,
    pub block_ratio: usize,
    /// Zero means one worker per available core.
    pub workers: usize,
    pub out: PathBuf,
}

const DEFAULT_SAMPLES: usize = 1000;
const DEFAULT_LEVELS: usize = 3;
const DEFAULT_OUT: &str = "results";

struct Reader<'a> {
    raw: &'a RawConfig,
    errors: Vec<FieldError>,
}

impl Reader<'_> {
    fn fail(&mut self, field: &str, message: impl Into<String>) {
        self.errors.push(FieldError {
            field: field.to_string(),
            message: message.into(),
        });
    }

    fn scalar<T: FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: fmt::Display,
    {
        match self.raw.get(key) {
            None => default,
            Some(s) => match s.parse() {
                Ok(v) => v,
                Err(e) => {
                    self.fail(key, format!("cannot parse `{s}`: {e}"));
                    default
                }
            },
        }
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Vec<T>
    where
        T::Err: fmt::Display,
    {
        let Some(s) = self.raw.get(key) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for item in s.split(',').map(str::trim) {
            match item.parse() {
                Ok(v) => out.push(v),
                Err(e) => self.fail(key, format!("cannot parse `{item}`: {e}")),
            }
        }
        if out.is_empty() && self.errors.iter().all(|e| e.field != key) {
            self.fail(key, "empty list");
        }
        out
    }
}

impl ExperimentConfig {
    /// Types and validates every field, reporting all problems at once.
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let mut r = Reader { raw, errors: Vec::new() };
        let experiment = match raw.get("experiment") {
            None => {
                r.fail("experiment", "missing");
                Experiment::Flow
            }
            Some(s) => s.parse().unwrap_or_else(|e| {
                r.fail("experiment", e);
                Experiment::Flow
            }),
        };
        let flow_kind = match raw.get("flow.kind") {
            None => FlowKind::GhzX,
            Some(s) => FlowKind::parse(s).unwrap_or_else(|| {
                r.fail("flow.kind", format!("unknown flow `{s}` (ghz-x, ghz-z, thermal-p, thermal-beta, spt)"));
                FlowKind::GhzX
            }),
        };
        let config = Self {
            experiment,
            flow_kind,
            p: r.list("grid.p"),
            beta: r.list("grid.beta"),
            sizes: r.list("grid.L"),
            buffers: r.list("grid.a"),
            blocks: r.list("grid.b"),
            levels: r.scalar("levels", DEFAULT_LEVELS),
            samples: r.scalar("samples", DEFAULT_SAMPLES),
            seed: r.scalar("seed", 0),
            size_ratio: r.scalar("tmwpm.size_ratio", mixrg::tmwpm::DEFAULT_SIZE_RATIO),
            block_ratio: r.scalar("tmwpm.block_ratio", mixrg::tmwpm::DEFAULT_BLOCK_RATIO),
            workers: r.scalar("workers", 0),
            out: PathBuf::from(raw.get("out").unwrap_or(DEFAULT_OUT)),
        };
        if r.errors.is_empty() {
            config.check(&mut r);
        }
        if r.errors.is_empty() {
            Ok(config)
        } else {
            Err(ConfigError::Invalid(r.errors))
        }
    }

    fn check(&self, r: &mut Reader) {
        let need = |r: &mut Reader, key: &str, empty: bool| {
            if empty {
                r.fail(key, format!("required for the {} experiment", self.experiment.name()));
            }
        };
        if self.experiment != Experiment::Flow && self.samples == 0 {
            r.fail("samples", "must be positive");
        }
        match self.experiment {
            Experiment::Flow => self.check_flow(r),
            Experiment::RgDecoder => {
                need(r, "grid.p", self.p.is_empty());
                need(r, "grid.L", self.sizes.is_empty());
                self.check_probabilities(r);
                if self.levels == 0 {
                    r.fail("levels", "must be at least 1");
                }
                for &l in &self.sizes {
                    if l < 4 || !l.is_power_of_two() {
                        r.fail("grid.L", format!("{l} is not a power of two of at least 4"));
                    } else if self.levels + 1 > l.trailing_zeros() as usize {
                        r.fail("levels", format!("{} steps do not fit L = {l} (at most log2(L) - 1)", self.levels));
                    }
                }
            }
            Experiment::Decode => {
                need(r, "grid.p", self.p.is_empty());
                need(r, "grid.L", self.sizes.is_empty());
                self.check_probabilities(r);
                self.check_even_sizes(r, &self.sizes);
            }
            Experiment::Tmwpm => {
                need(r, "grid.p", self.p.is_empty());
                need(r, "grid.a", self.buffers.is_empty());
                self.check_probabilities(r);
                if self.size_ratio == 0 {
                    r.fail("tmwpm.size_ratio", "must be positive");
                }
                if self.block_ratio == 0 {
                    r.fail("tmwpm.block_ratio", "must be positive");
                }
                self.check_even_sizes(r, &self.sizes);
                for &b in &self.blocks {
                    if b == 0 {
                        r.fail("grid.b", "block side must be positive");
                    }
                }
                if r.errors.is_empty() {
                    for (_, b, l) in self.tmwpm_geometries() {
                        if l < 2 || l % 2 == 1 {
                            r.fail("tmwpm.size_ratio", format!("derived L = {l} is not even"));
                        } else if b > l {
                            r.fail("grid.b", format!("block side {b} exceeds L = {l}"));
                        }
                    }
                }
            }
        }
    }

    fn check_flow(&self, r: &mut Reader) {
        let thermal_beta = self.flow_kind == FlowKind::ThermalBeta;
        let (key, values) = if thermal_beta { ("grid.beta", &self.beta) } else { ("grid.p", &self.p) };
        if values.is_empty() {
            r.fail(key, format!("required for the {} flow", self.flow_kind.name()));
        }
        if self.sizes.is_empty() {
            r.fail("grid.L", "required for the flow experiment");
        }
        if self.sizes.contains(&0) {
            r.fail("grid.L", "sizes must be positive");
        }
        for &b in &self.flow_blocks() {
            match FlowMap::new(self.flow_kind, b) {
                Err(e) => r.fail("grid.b", e.to_string()),
                Ok(map) => {
                    for &x in values {
                        if let Err(e) = map.step(x) {
                            r.fail(key, e.to_string());
                        }
                    }
                }
            }
        }
    }

    fn check_probabilities(&self, r: &mut Reader) {
        for &p in &self.p {
            if !(0.0..=1.0).contains(&p) {
                r.fail("grid.p", format!("{p} is not a probability"));
            }
        }
    }

    fn check_even_sizes(&self, r: &mut Reader, sizes: &[usize]) {
        for &l in sizes {
            if l < 2 || l % 2 == 1 {
                r.fail("grid.L", format!("{l} is not an even size of at least 2"));
            }
        }
    }

    /// Block sizes of the flow experiment. Thermal maps always halve.
    pub fn flow_blocks(&self) -> Vec<usize> {
        match self.flow_kind {
            FlowKind::ThermalP | FlowKind::ThermalBeta => vec![2],
            _ if self.blocks.is_empty() => vec![3],
            _ => self.blocks.clone(),
        }
    }

    /// `(a, b, L)` triples of a tmwpm sweep. Missing `b` or `L` grids are
    /// derived from `a` through the configured ratios.
    pub fn tmwpm_geometries(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for &a in &self.buffers {
            let blocks = if self.blocks.is_empty() { vec![self.block_ratio * a] } else { self.blocks.clone() };
            let sizes = if self.sizes.is_empty() { vec![self.size_ratio * a] } else { self.sizes.clone() };
            for &b in &blocks {
                for &l in &sizes {
                    out.push((a, b, l));
                }
            }
        }
        out
    }

    /// One line per key in canonical order, with defaults filled in.
    pub fn canonical(&self) -> String {
        let floats = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let ints = |v: &[usize]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        for key in KEYS {
            let value = match *key {
                "experiment" => self.experiment.name().to_string(),
                "flow.kind" => self.flow_kind.name().to_string(),
                "grid.p" => floats(&self.p),
                "grid.beta" => floats(&self.beta),
                "grid.L" => ints(&self.sizes),
                "grid.a" => ints(&self.buffers),
                "grid.b" => ints(&self.blocks),
                "levels" => self.levels.to_string(),
                "samples" => self.samples.to_string(),
                "seed" => self.seed.to_string(),
                "tmwpm.size_ratio" => self.size_ratio.to_string(),
                "tmwpm.block_ratio" => self.block_ratio.to_string(),
                "workers" => self.workers.to_string(),
                "out" => self.out.display().to_string(),
                other => unreachable!("key {other} has no canonical form"),
            };
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    /// SHA-256 of the canonical form without `workers` and `out`, which do
    /// not affect results.
    pub fn hash(&self) -> String {
        let text: String = self
            .canonical()
            .lines()
            .filter(|line| !UNHASHED.iter().any(|k| line.starts_with(&format!("{k} ="))))
            .map(|line| format!("{line}\n"))
            .collect();
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_raw(&RawConfig::parse(text)?)
    }

    #[test]
    fn parses_lists_and_defaults() {
        let c = config("# decoder sweep\nexperiment = decode\ngrid.p = 0.05, 0.1\n\ngrid.L = 8,16\n").unwrap();
        assert_eq!(c.p, vec![0.05, 0.1]);
        assert_eq!(c.sizes, vec![8, 16]);
        assert_eq!(c.samples, DEFAULT_SAMPLES);
        assert_eq!(c.out, PathBuf::from(DEFAULT_OUT));
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        assert_eq!(
            RawConfig::parse("experiment = flow\nnonsense\n"),
            Err(ConfigError::Syntax {
                line: 2,
                message: "expected `key = value`, found `nonsense`".into()
            })
        );
        assert!(matches!(RawConfig::parse("a.b = 1"), Err(ConfigError::UnknownKey(k)) if k == "a.b"));
        assert!(matches!(RawConfig::parse("seed = 1\nseed = 2"), Err(ConfigError::Syntax { line: 2, .. })));
    }

    #[test]
    fn every_bad_field_is_reported() {
        let Err(ConfigError::Invalid(errors)) = config("experiment = rg-decoder\ngrid.p = 0.1, 1.5\ngrid.L = 12, 16\nlevels = 3\nsamples = 0") else {
            panic!("expected validation failure");
        };
        let fields: Vec<&str> = errors.iter().map(|e| e.field.as_str()).collect();
        assert_eq!(fields, ["samples", "grid.p", "grid.L"]);
        let Err(ConfigError::Invalid(errors)) = config("experiment = rg-decoder\ngrid.p = 0.1\ngrid.L = 16\nlevels = 4") else {
            panic!("expected validation failure");
        };
        assert_eq!(errors[0].field, "levels");
        let Err(ConfigError::Invalid(errors)) = config("experiment = flow\nflow.kind = ghz-x\ngrid.p = 0.1\ngrid.L = 9\ngrid.b = 4") else {
            panic!("expected validation failure");
        };
        assert_eq!(errors[0].field, "grid.b");
    }

    #[test]
    fn parse_failures_name_the_field() {
        let Err(ConfigError::Invalid(errors)) = config("experiment = decode\ngrid.p = 0.1, x\ngrid.L = 8") else {
            panic!("expected validation failure");
        };
        assert_eq!(errors.len(), 1);
        assert_eq!(errors[0].field, "grid.p");
        assert!(errors[0].message.contains("`x`"));
    }

    #[test]
    fn environment_overrides_file() {
        let mut raw = RawConfig::parse("experiment = decode\ngrid.p = 0.1\ngrid.L = 8\nseed = 1").unwrap();
        let vars = vec![
            ("MIXRG_SEED".to_string(), "7".to_string()),
            ("MIXRG_GRID_L".to_string(), "16".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ];
        raw.apply_env(vars).unwrap();
        let c = ExperimentConfig::from_raw(&raw).unwrap();
        assert_eq!((c.seed, c.sizes.clone()), (7, vec![16]));
        assert!(raw.apply_env(vec![("MIXRG_SEEDS".to_string(), "1".to_string())]).is_err());
        assert_eq!(env_name("tmwpm.size_ratio"), "MIXRG_TMWPM_SIZE_RATIO");
    }

    #[test]
    fn hash_ignores_layout_and_worker_count() {
        let a = config("experiment = decode\ngrid.p = 0.1,0.2\ngrid.L = 8\nworkers = 1").unwrap();
        let b = config("grid.L=8\n  grid.p = 0.10 , 0.2\nexperiment=decode\nworkers = 4\nout = elsewhere").unwrap();
        let c = config("experiment = decode\ngrid.p = 0.1,0.2\ngrid.L = 8\nseed = 1").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn tmwpm_geometry_follows_ratios() {
        let c = config("experiment = tmwpm\ngrid.p = 0.1\ngrid.a = 2, 3").unwrap();
        assert_eq!(c.tmwpm_geometries(), vec![(2, 4, 16), (3, 6, 24)]);
        let c = config("experiment = tmwpm\ngrid.p = 0.1\ngrid.a = 1\ngrid.b = 2\ngrid.L = 8, 12").unwrap();
        assert_eq!(c.tmwpm_geometries(), vec![(1, 2, 8), (1, 2, 12)]);
        assert!(config("experiment = tmwpm\ngrid.p = 0.1\ngrid.a = 1\ngrid.b = 10\ngrid.L = 8").is_err());
    }
}

//! Flat `section.key = value` run configuration.
//!
//! A resolved [`Config`] is a stack of layers — built-in defaults, a preset,
//! a file, `--set` pairs, command-line flags — where later layers win. Each
//! value remembers where it came from so that diagnostics can point at a
//! file line or a flag.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use shapesim::lattice::{Site, MAX_DIM};
use shapesim::models::ModelSpec;

/// Keys outside `model.*` that any command accepts.
pub const KNOWN_KEYS: &[&str] = &[
    "lattice.dim",
    "lattice.radius",
    "run.horizon",
    "run.t_surv",
    "run.replicas",
    "run.seed",
    "run.workers",
    "sigma.sites",
    "sigma.margin",
    "sigma.max_gap_ratio",
    "sigma.norm",
    "defect.x",
    "defect.y",
    "defect.margin",
    "defect.grid",
    "defect.t0",
    "defect.level",
    "tails.sc_t0",
    "tails.k_site",
    "tails.margin",
    "tails.level",
    "shape.directions",
    "shape.grid_reach",
    "shape.grid_points",
    "shape.times",
    "shape.eps",
    "shape.min_pass_rate",
    "shape.symmetry_k",
    "shape.compare_sigma",
    "shape.sigma_margin",
    "badgrowth.x",
    "badgrowth.t_grid",
    "badgrowth.l",
    "badgrowth.m1",
    "badgrowth.m2",
    "badgrowth.kappa",
    "badgrowth.norm",
    "badgrowth.stop_at_first",
    "badgrowth.pilot_replicas",
    "badgrowth.level",
    "oracle.steps",
    "oracle.k",
    "replay.dump",
    "preset.conjectural",
    "preset.note",
];

/// Keys left out of the config hash: they change scheduling, not results.
const UNHASHED: &[&str] = &["run.workers"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    Default,
    Preset { name: String, line: usize },
    File { path: PathBuf, line: usize },
    Set(usize),
    Flag(&'static str),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => write!(f, "built-in default"),
            Origin::Preset { name, line } => write!(f, "preset {name}, line {line}"),
            Origin::File { path, line } => write!(f, "{}:{line}", path.display()),
            Origin::Set(i) => write!(f, "--set #{i}"),
            Origin::Flag(name) => write!(f, "--{name}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}: {message}")]
    Syntax { origin: Origin, message: String },
    #[error("{origin}: `{key}`: {message}")]
    Field { key: String, origin: Origin, message: String },
    #[error("missing `{0}`")]
    Missing(String),
    #[error("unknown preset `{name}`; available: {available}")]
    UnknownPreset { name: String, available: String },
    #[error("cannot read config {}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub value: String,
    pub origin: Origin,
}

/// One source of key-value pairs.
#[derive(Clone, Debug, Default)]
pub struct Layer {
    pub entries: Vec<(String, Entry)>,
}

fn valid_key(k: &str) -> bool {
    let mut parts = k.split('.');
    let ok = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_');
    parts.clone().count() >= 2 && parts.all(ok)
}

impl Layer {
    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// skipped, and a key may appear once.
    pub fn parse(text: &str, origin: impl Fn(usize) -> Origin) -> Result<Layer, ConfigError> {
        let mut layer = Layer::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = origin(i + 1);
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax { origin: at, message: format!("expected `key = value`, got `{line}`") });
            };
            let (k, v) = (k.trim(), v.trim());
            if !valid_key(k) {
                return Err(ConfigError::Syntax {
                    origin: at,
                    message: format!("invalid key `{k}`: use lowercase dotted names like `run.seed`"),
                });
            }
            if v.is_empty() {
                return Err(ConfigError::Field { key: k.into(), origin: at, message: "empty value".into() });
            }
            if let Some((_, prev)) = layer.entries.iter().find(|(pk, _)| pk == k) {
                return Err(ConfigError::Field {
                    key: k.into(),
                    origin: at,
                    message: format!("duplicate key, first set at {}", prev.origin),
                });
            }
            layer.entries.push((k.into(), Entry { value: v.into(), origin: at }));
        }
        Ok(layer)
    }

    pub fn from_file(path: &Path) -> Result<Layer, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Layer::parse(&text, |line| Origin::File { path: path.to_path_buf(), line })
    }

    /// `--set key=value` pairs, numbered from 1.
    pub fn from_pairs(pairs: &[String]) -> Result<Layer, ConfigError> {
        let mut layer = Layer::default();
        for (i, p) in pairs.iter().enumerate() {
            let one = Layer::parse(p, |_| Origin::Set(i + 1))?;
            if one.entries.len() != 1 {
                return Err(ConfigError::Syntax { origin: Origin::Set(i + 1), message: format!("expected `key=value`, got `{p}`") });
            }
            layer.entries.extend(one.entries);
        }
        Ok(layer)
    }

    pub fn push(&mut self, key: &str, value: impl ToString, origin: Origin) {
        self.entries.push((key.into(), Entry { value: value.to_string(), origin }));
    }
}

/// Resolved configuration.
#[derive(Clone, Debug, Default)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
    /// Human-readable names of the layers that contributed, e.g.
    /// `preset cp-shape`, `file run.cfg`.
    pub sources: Vec<String>,
}

impl Config {
    /// Applies a layer on top. A layer that names a model drops the model
    /// parameters of the layers below it, so a preset's `model.lambda`
    /// does not leak into a file that switches to `dop`.
    pub fn apply(&mut self, layer: Layer, source: impl Into<String>) {
        if layer.entries.iter().any(|(k, _)| k == "model.name") {
            self.entries.retain(|k, _| !k.starts_with("model."));
        }
        if !layer.entries.is_empty() {
            self.sources.push(source.into());
        }
        self.entries.extend(layer.entries);
    }

    /// Rejects keys no command understands, and model parameters the
    /// named model does not take.
    pub fn validate_keys(&self) -> Result<(), ConfigError> {
        let model = self.model_name();
        let params = ModelSpec::param_names(model.as_deref().unwrap_or("cp"));
        if params.is_none() {
            let e = &self.entries["model.name"];
            return Err(ConfigError::Field {
                key: "model.name".into(),
                origin: e.origin.clone(),
                message: format!("unknown model `{}`; expected cp, cpree, cpa, dop or bmcp", e.value),
            });
        }
        for (k, e) in &self.entries {
            let ok = match k.strip_prefix("model.") {
                Some("name") => true,
                Some(p) => params.is_some_and(|ps| ps.contains(&p)),
                None => KNOWN_KEYS.contains(&k.as_str()),
            };
            if !ok {
                let message = if k.starts_with("model.") {
                    format!(
                        "model `{}` takes {}",
                        model.as_deref().unwrap_or("cp"),
                        params.unwrap_or(&[]).iter().map(|p| format!("model.{p}")).collect::<Vec<_>>().join(", ")
                    )
                } else {
                    "unknown key".to_string()
                };
                return Err(ConfigError::Field { key: k.clone(), origin: e.origin.clone(), message });
            }
        }
        Ok(())
    }

    pub fn model_name(&self) -> Option<String> {
        self.entries.get("model.name").map(|e| e.value.clone())
    }

    pub fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Model parameters without the `model.` prefix, `name` excluded.
    pub fn model_params(&self) -> BTreeMap<String, String> {
        self.entries
            .iter()
            .filter_map(|(k, e)| k.strip_prefix("model.").filter(|p| *p != "name").map(|p| (p.to_string(), e.value.clone())))
            .collect()
    }

    pub fn field_error(&self, key: &str, message: impl Into<String>) -> ConfigError {
        match self.entries.get(key) {
            Some(e) => ConfigError::Field { key: key.into(), origin: e.origin.clone(), message: message.into() },
            None => ConfigError::Invalid(format!("`{key}`: {}", message.into())),
        }
    }

    /// Parses a value with its `FromStr`.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|err| ConfigError::Field {
                key: key.into(),
                origin: e.origin.clone(),
                message: format!("cannot parse `{}`: {err}", e.value),
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?.ok_or_else(|| ConfigError::Missing(key.into()))
    }

    /// Comma-separated numbers.
    pub fn floats(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(e) = self.entries.get(key) else { return Ok(None) };
        e.value
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
            .map_err(|_| self.field_error(key, format!("expected comma-separated numbers, got `{}`", e.value)))
    }

    /// A site in dimension `dim`: `(3,-1)`, `3,-1`, `3` in one dimension, or
    /// `10e2` for `10·e_2`.
    pub fn site(&self, key: &str, dim: usize) -> Result<Option<Site>, ConfigError> {
        let Some(e) = self.entries.get(key) else { return Ok(None) };
        parse_site(&e.value, dim).map(Some).map_err(|m| self.field_error(key, m))
    }

    /// `;`-separated sites.
    pub fn sites(&self, key: &str, dim: usize) -> Result<Option<Vec<Site>>, ConfigError> {
        let Some(e) = self.entries.get(key) else { return Ok(None) };
        e.value
            .split(';')
            .map(|s| parse_site(s, dim))
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
            .map_err(|m| self.field_error(key, m))
    }

    /// `key = value` lines, sorted, with the origin of each as a comment.
    /// Loading the result with `--config` reproduces the run.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for (k, e) in &self.entries {
            s.push_str(&format!("{k} = {}  # {}\n", e.value, e.origin));
        }
        s
    }

    /// SHA-256 over the sorted `key=value` lines, scheduling keys excluded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, e) in self.entries.iter().filter(|(k, _)| !UNHASHED.contains(&k.as_str())) {
            h.update(format!("{k}={}\n", e.value));
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.entries.iter().map(|(k, e)| (k.clone(), serde_json::Value::String(e.value.clone()))).collect(),
        )
    }
}

pub fn parse_site(s: &str, dim: usize) -> Result<Site, String> {
    let t = s.trim();
    if let Some((n, axis)) = t.split_once('e') {
        let n: i32 = n.trim().parse().map_err(|_| format!("invalid site `{t}`"))?;
        let axis: usize = axis.trim().parse().map_err(|_| format!("invalid site `{t}`"))?;
        if axis == 0 || axis > dim {
            return Err(format!("`{t}`: axis must be in 1..={dim}"));
        }
        return Ok(Site::axis(dim, axis - 1, n));
    }
    let site: Site = t.parse().map_err(|e: shapesim::Error| e.to_string())?;
    if site.dim() != dim {
        return Err(format!("site `{t}` has dimension {}, the lattice has {dim}", site.dim()));
    }
    debug_assert!(dim <= MAX_DIM);
    Ok(site)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(text: &str) -> Result<Layer, ConfigError> {
        Layer::parse(text, |line| Origin::File { path: "run.cfg".into(), line })
    }

    #[test]
    fn parses_comments_and_spacing() {
        let l = file("# header\n\nmodel.name = cp   # trailing\nrun.seed=7\n").unwrap();
        assert_eq!(l.entries.len(), 2);
        assert_eq!(l.entries[1].1.value, "7");
        assert_eq!(l.entries[1].1.origin, Origin::File { path: "run.cfg".into(), line: 4 });
    }

    #[test]
    fn syntax_errors_name_the_line() {
        let e = file("run.seed = 1\nthis is not a pair\n").unwrap_err().to_string();
        assert!(e.starts_with("run.cfg:2:"), "{e}");
        let e = file("Run.Seed = 1\n").unwrap_err().to_string();
        assert!(e.contains("invalid key"), "{e}");
        let e = file("run.seed = 1\nrun.seed = 2\n").unwrap_err().to_string();
        assert!(e.contains("run.cfg:2") && e.contains("run.cfg:1"), "{e}");
        let e = file("run.seed =\n").unwrap_err().to_string();
        assert!(e.contains("empty value"), "{e}");
    }

    #[test]
    fn field_errors_name_key_and_origin() {
        let mut c = Config::default();
        c.apply(file("run.replicas = many\n").unwrap(), "file");
        let e = c.get::<usize>("run.replicas").unwrap_err().to_string();
        assert!(e.contains("run.cfg:1") && e.contains("run.replicas") && e.contains("many"), "{e}");
    }

    #[test]
    fn later_layers_win_and_model_switch_drops_params() {
        let mut c = Config::default();
        c.apply(Layer::parse("model.name = cp\nmodel.lambda = 2\nrun.seed = 1", |_| Origin::Default).unwrap(), "d");
        c.apply(file("model.name = dop\nmodel.p = 0.8\nmodel.q = 0.2\nmodel.alpha = 0").unwrap(), "f");
        let mut flags = Layer::default();
        flags.push("run.seed", 9, Origin::Flag("seed"));
        c.apply(flags, "flags");
        assert_eq!(c.raw("run.seed"), Some("9"));
        assert!(!c.contains("model.lambda"));
        c.validate_keys().unwrap();
    }

    #[test]
    fn unknown_keys_and_model_params_rejected() {
        let mut c = Config::default();
        c.apply(file("model.name = cp\nmodel.lambda = 2\nmodel.q = 1\n").unwrap(), "f");
        let e = c.validate_keys().unwrap_err().to_string();
        assert!(e.contains("model.q") && e.contains("model.lambda"), "{e}");
        let mut c = Config::default();
        c.apply(file("run.sed = 1\n").unwrap(), "f");
        assert!(c.validate_keys().unwrap_err().to_string().contains("unknown key"));
        let mut c = Config::default();
        c.apply(file("model.name = sir\n").unwrap(), "f");
        assert!(c.validate_keys().unwrap_err().to_string().contains("unknown model"));
    }

    #[test]
    fn sites_and_lists() {
        let mut c = Config::default();
        c.apply(file("a.s = 10e2\na.l = (1,0); 0,1 ; -3e1\na.f = 1, 2.5,4\na.bad = (1,2,3)\n").unwrap(), "f");
        assert_eq!(c.site("a.s", 2).unwrap().unwrap(), Site::new(vec![0, 10]));
        assert_eq!(c.sites("a.l", 2).unwrap().unwrap().len(), 3);
        assert_eq!(c.floats("a.f").unwrap().unwrap(), vec![1.0, 2.5, 4.0]);
        assert!(c.site("a.bad", 2).unwrap_err().to_string().contains("dimension 3"));
        assert!(c.site("a.s", 1).is_err());
    }

    #[test]
    fn hash_ignores_workers_and_origin() {
        let mut a = Config::default();
        a.apply(file("run.seed = 1\nrun.workers = 4\n").unwrap(), "f");
        let mut b = Config::default();
        b.apply(Layer::parse("run.workers = 1\nrun.seed = 1\n", |_| Origin::Default).unwrap(), "d");
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.apply(Layer::parse("run.seed = 2", |_| Origin::Default).unwrap(), "d");
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn echo_round_trips() {
        let mut a = Config::default();
        a.apply(file("model.name = cp\nmodel.lambda = 2\nrun.seed = 3\n").unwrap(), "f");
        let mut b = Config::default();
        b.apply(file(&a.echo()).unwrap(), "echo");
        assert_eq!(a.hash(), b.hash());
    }
}

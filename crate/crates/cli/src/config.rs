//! Flat `key = value` run configuration.
//!
//! Every experiment declares the keys it reads together with their defaults.
//! A config file and `--set` overrides may only touch those keys; anything
//! else is rejected with the file line or override position that caused it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, ValueEnum)]
pub enum Experiment {
    /// Three lowest levels of the ground-candidate set against g.
    Spectrum,
    /// Ground-branch excitation number over the (Δ_f, g) plane.
    PhaseDiagram,
    /// Fidelity between Gibbs states at g and g + δg, one curve per β.
    Fidelity,
    /// Trace distance between the Gibbs state and its marginals' product.
    TraceDistance,
    /// Total excitation and ground energy over the (Δ_f, g) plane.
    Excitation,
    /// Time-maximal atomic trace distance after a quench from the product state.
    Dynamics,
    /// Derivative of the one-exciton distance at g_c against lattice size.
    Scaling,
    /// Single-site mean-field map over hopping and chemical potential.
    Meanfield,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::PhaseDiagram => "phase-diagram",
            Experiment::Fidelity => "fidelity",
            Experiment::TraceDistance => "trace-distance",
            Experiment::Excitation => "excitation",
            Experiment::Dynamics => "dynamics",
            Experiment::Scaling => "scaling",
            Experiment::Meanfield => "meanfield",
        }
    }

    pub const ALL: [Experiment; 8] = [
        Experiment::Spectrum,
        Experiment::PhaseDiagram,
        Experiment::Fidelity,
        Experiment::TraceDistance,
        Experiment::Excitation,
        Experiment::Dynamics,
        Experiment::Scaling,
        Experiment::Meanfield,
    ];

    /// Keys read by this experiment, with their defaults.
    pub fn keys(self) -> Vec<KeySpec> {
        use Kind::*;
        let k = |name, kind, default| KeySpec { name, kind, default };
        let lattice = |keys: &mut Vec<KeySpec>, delta: bool| {
            keys.push(k("n_sites", Count, "5"));
            keys.push(k("omega_f", Real, "3"));
            if delta {
                keys.push(k("delta_f", Real, "0"));
            }
        };
        let g_grid = |keys: &mut Vec<KeySpec>, lo, hi, steps| {
            keys.push(k("g_min", Real, lo));
            keys.push(k("g_max", Real, hi));
            keys.push(k("g_steps", Count, steps));
        };
        let mut keys = vec![k("cache", Flag, "true")];
        match self {
            Experiment::Spectrum => {
                lattice(&mut keys, true);
                g_grid(&mut keys, "0", "3.5", "351");
            }
            Experiment::PhaseDiagram => {
                lattice(&mut keys, false);
                g_grid(&mut keys, "0", "4", "401");
                keys.push(k("delta_min", Real, "-2"));
                keys.push(k("delta_max", Real, "4"));
                keys.push(k("delta_steps", Count, "61"));
            }
            Experiment::Fidelity => {
                lattice(&mut keys, true);
                g_grid(&mut keys, "0.5", "2.9", "481");
                keys.push(k("betas", List, "20,40,60"));
                keys.push(k("delta_g", Real, "0.01"));
            }
            Experiment::TraceDistance => {
                lattice(&mut keys, true);
                g_grid(&mut keys, "0.5", "2.9", "480");
                keys.push(k("beta", Real, "800"));
            }
            Experiment::Excitation => {
                lattice(&mut keys, false);
                g_grid(&mut keys, "0.5", "2.9", "480");
                keys.push(k("beta", Real, "800"));
                keys.push(k("delta_min", Real, "0"));
                keys.push(k("delta_max", Real, "5"));
                keys.push(k("delta_steps", Count, "6"));
            }
            Experiment::Dynamics => {
                lattice(&mut keys, true);
                g_grid(&mut keys, "0.5", "2.9", "200");
                keys.push(k("beta", Real, "300"));
                keys.push(k("t_max", Real, "200"));
            }
            Experiment::Scaling => {
                keys.push(k("omega_f", Real, "3"));
                keys.push(k("beta", Real, "300"));
                keys.push(k("deltas", List, "0,3,5"));
                keys.push(k("n_min", Count, "1"));
                keys.push(k("n_max", Count, "100"));
                keys.push(k("dg_step", Real, "1e-4"));
            }
            Experiment::Meanfield => {
                keys.push(k("omega_f", Real, "3"));
                keys.push(k("delta_f", Real, "0"));
                keys.push(k("g", Real, "1"));
                keys.push(k("beta", Real, "100"));
                keys.push(k("z", Real, "2"));
                keys.push(k("photon_cutoff", Count, "15"));
                keys.push(k("hop_min", Real, "0"));
                keys.push(k("hop_max", Real, "0.3"));
                keys.push(k("hop_steps", Count, "21"));
                keys.push(k("mu_min", Real, "-1.4"));
                keys.push(k("mu_max", Real, "-0.65"));
                keys.push(k("mu_steps", Count, "13"));
                keys.push(k("psi_init", Real, "0.1"));
                keys.push(k("damping", Real, "0.5"));
                keys.push(k("tol", Real, "1e-10"));
                keys.push(k("max_iter", Count, "10000"));
            }
        }
        keys
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Count,
    Real,
    /// Comma-separated reals.
    List,
    Flag,
}

#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub name: &'static str,
    pub kind: Kind,
    pub default: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Count(usize),
    Real(f64),
    List(Vec<f64>),
    Flag(bool),
}

impl Value {
    fn parse(kind: Kind, raw: &str) -> Result<Self, String> {
        let real = |s: &str| {
            let s = s.trim();
            let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("`{s}` is not finite"))
            }
        };
        match kind {
            Kind::Count => raw
                .parse()
                .map(Value::Count)
                .map_err(|_| format!("`{raw}` is not a non-negative integer")),
            Kind::Real => real(raw).map(Value::Real),
            Kind::List => {
                let items: Vec<f64> = raw.split(',').map(real).collect::<Result<_, _>>()?;
                Ok(Value::List(items))
            }
            Kind::Flag => match raw {
                "true" | "yes" | "1" => Ok(Value::Flag(true)),
                "false" | "no" | "0" => Ok(Value::Flag(false)),
                _ => Err(format!("`{raw}` is not a boolean")),
            },
        }
    }
}

/// Canonical text form; `Debug` on f64 is the shortest round-trip form.
impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Count(n) => write!(f, "{n}"),
            Value::Real(v) => write!(f, "{v:?}"),
            Value::List(vs) => {
                let parts: Vec<String> = vs.iter().map(|v| format!("{v:?}")).collect();
                f.write_str(&parts.join(","))
            }
            Value::Flag(b) => write!(f, "{b}"),
        }
    }
}

/// Where a value came from, for error messages.
#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    Default,
    File { path: PathBuf, line: usize },
    Set { index: usize },
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => f.write_str("default"),
            Origin::File { path, line: 0 } => write!(f, "{}", path.display()),
            Origin::File { path, line } => write!(f, "{}:{line}", path.display()),
            Origin::Set { index } => write!(f, "--set #{index}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub origin: Origin,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.origin, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn error(origin: Origin, message: impl Into<String>) -> ConfigError {
    ConfigError {
        origin,
        message: message.into(),
    }
}

/// Resolved configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    values: BTreeMap<&'static str, (Value, Origin)>,
}

impl RunConfig {
    /// Defaults of `experiment`.
    pub fn defaults(experiment: Experiment) -> Self {
        let values = experiment
            .keys()
            .into_iter()
            .map(|spec| {
                let v = Value::parse(spec.kind, spec.default).expect("defaults parse");
                (spec.name, (v, Origin::Default))
            })
            .collect();
        Self { experiment, values }
    }

    /// Defaults, then the config file, then the overrides in order.
    pub fn load(experiment: Experiment, file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut cfg = Self::defaults(experiment);
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| {
                error(
                    Origin::File {
                        path: path.into(),
                        line: 0,
                    },
                    format!("cannot read: {e}"),
                )
            })?;
            cfg.apply_text(&text, path)?;
        }
        for (i, item) in overrides.iter().enumerate() {
            let origin = Origin::Set { index: i + 1 };
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| error(origin.clone(), format!("expected `key=value`, got `{item}`")))?;
            cfg.set(key.trim(), value.trim(), origin)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_text(&mut self, text: &str, path: &Path) -> Result<(), ConfigError> {
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let origin = Origin::File {
                path: path.into(),
                line,
            };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| error(origin.clone(), format!("expected `key = value`, got `{content}`")))?;
            let key = key.trim();
            if let Some(first) = seen.insert(key.to_string(), line) {
                return Err(error(
                    origin,
                    format!("duplicate key `{key}` (first set on line {first})"),
                ));
            }
            self.set(key, value.trim(), origin)?;
        }
        Ok(())
    }

    /// Parse and store one value.
    pub fn set(&mut self, key: &str, raw: &str, origin: Origin) -> Result<(), ConfigError> {
        let Some(spec) = self.experiment.keys().into_iter().find(|s| s.name == key) else {
            let known_elsewhere = Experiment::ALL.iter().any(|e| e.keys().iter().any(|s| s.name == key));
            let valid: Vec<&str> = self.experiment.keys().iter().map(|s| s.name).collect();
            let msg = if known_elsewhere {
                format!("key `{key}` does not apply to experiment `{}`", self.experiment)
            } else {
                format!("unknown key `{key}`")
            };
            let msg = format!("{msg}; valid keys: {}", valid.join(", "));
            return Err(error(origin, msg));
        };
        let value = Value::parse(spec.kind, raw).map_err(|m| error(origin.clone(), format!("{key}: {m}")))?;
        self.values.insert(spec.name, (value, origin));
        Ok(())
    }

    fn entry(&self, key: &str) -> &(Value, Origin) {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("experiment `{}` does not declare `{key}`", self.experiment))
    }

    pub fn origin(&self, key: &str) -> Origin {
        self.entry(key).1.clone()
    }

    pub fn real(&self, key: &str) -> f64 {
        match self.entry(key).0 {
            Value::Real(v) => v,
            ref v => panic!("`{key}` is not a real: {v:?}"),
        }
    }

    pub fn count(&self, key: &str) -> usize {
        match self.entry(key).0 {
            Value::Count(v) => v,
            ref v => panic!("`{key}` is not a count: {v:?}"),
        }
    }

    pub fn list(&self, key: &str) -> &[f64] {
        match &self.entry(key).0 {
            Value::List(v) => v,
            v => panic!("`{key}` is not a list: {v:?}"),
        }
    }

    pub fn flag(&self, key: &str) -> bool {
        match self.entry(key).0 {
            Value::Flag(v) => v,
            ref v => panic!("`{key}` is not a flag: {v:?}"),
        }
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    /// Evenly spaced grid `<prefix>_min ..= <prefix>_max` with `<prefix>_steps` points.
    pub fn grid(&self, prefix: &str) -> Vec<f64> {
        let (lo, hi) = (self.real(&format!("{prefix}_min")), self.real(&format!("{prefix}_max")));
        let n = self.count(&format!("{prefix}_steps"));
        (0..n)
            .map(|k| {
                if k + 1 == n {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (n - 1) as f64
                }
            })
            .collect()
    }

    /// Typed values in key order.
    pub fn values(&self) -> impl Iterator<Item = (&'static str, &Value)> {
        self.values.iter().map(|(k, (v, _))| (*k, v))
    }

    /// `key = value` pairs in key order, cache toggle included.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        self.values.iter().map(|(k, (v, _))| (*k, v.to_string())).collect()
    }

    /// Text that determines the results: experiment, code version and every
    /// key except the cache toggle.
    pub fn canonical(&self) -> String {
        let mut out = format!("experiment={}\nversion={}\n", self.experiment, crate::VERSION);
        for (k, v) in self.entries() {
            if k != "cache" {
                out.push_str(&format!("{k}={v}\n"));
            }
        }
        out
    }

    /// SHA-256 of [`RunConfig::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    fn validate(&self) -> Result<(), ConfigError> {
        for prefix in ["g", "delta", "hop", "mu"] {
            if !self.has(&format!("{prefix}_min")) {
                continue;
            }
            let steps = format!("{prefix}_steps");
            if self.count(&steps) < 2 {
                return Err(error(self.origin(&steps), format!("{steps}: need at least 2 points")));
            }
            let (lo, hi) = (format!("{prefix}_min"), format!("{prefix}_max"));
            if self.real(&lo) >= self.real(&hi) {
                return Err(error(
                    self.origin(&hi),
                    format!("{hi}: must exceed {lo} = {}", self.real(&lo)),
                ));
            }
        }
        for key in ["betas", "deltas"] {
            if self.has(key) && self.list(key).is_empty() {
                return Err(error(self.origin(key), format!("{key}: empty list")));
            }
        }
        if self.has("n_min") {
            let (lo, hi) = (self.count("n_min"), self.count("n_max"));
            if lo == 0 {
                return Err(error(self.origin("n_min"), "n_min: need at least one cavity"));
            }
            if hi < lo + 3 {
                return Err(error(self.origin("n_max"), "n_max: the fit needs at least 4 sizes"));
            }
        }
        crate::experiments::validate(self)
    }
}

pub(crate) fn invalid(cfg: &RunConfig, key: &str, message: impl Into<String>) -> ConfigError {
    error(cfg.origin(key), format!("{key}: {}", message.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file_config(text: &str) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::defaults(Experiment::TraceDistance);
        cfg.apply_text(text, Path::new("run.cfg"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn defaults_validate_for_every_experiment() {
        for e in Experiment::ALL {
            RunConfig::defaults(e).validate().unwrap();
        }
    }

    #[test]
    fn file_values_and_comments() {
        let cfg = file_config("# header\n\nbeta = 300   # cooler\ng_steps=11\n").unwrap();
        assert_eq!(cfg.real("beta"), 300.0);
        assert_eq!(cfg.count("g_steps"), 11);
        assert_eq!(
            cfg.origin("beta"),
            Origin::File {
                path: "run.cfg".into(),
                line: 3
            }
        );
    }

    #[test]
    fn errors_name_the_line() {
        let e = file_config("beta = 300\nbogus = 1\n").unwrap_err();
        assert!(e
            .to_string()
            .starts_with("run.cfg:2: unknown key `bogus`; valid keys: "));
        let e = file_config("betas = 1,2\n").unwrap_err();
        assert!(e.to_string().contains("does not apply to experiment `trace-distance`"));
        let e = file_config("beta 300\n").unwrap_err();
        assert!(e.to_string().starts_with("run.cfg:1:"));
        let e = file_config("beta = 1\nbeta = 2\n").unwrap_err();
        assert!(e.to_string().contains("first set on line 1"));
        let e = file_config("g_steps = 1\n").unwrap_err();
        assert_eq!(e.to_string(), "run.cfg:1: g_steps: need at least 2 points");
        let e = file_config("\n\nomega_f = 1.5\n").unwrap_err();
        assert!(e.to_string().starts_with("run.cfg:3: omega_f"), "{e}");
    }

    #[test]
    fn overrides_win_and_are_located() {
        let cfg = RunConfig::load(Experiment::Fidelity, None, &["betas = 10, 30".into()]).unwrap();
        assert_eq!(cfg.list("betas"), &[10.0, 30.0]);
        let e = RunConfig::load(Experiment::Fidelity, None, &["delta_g=0.01".into(), "g_max=nan".into()]).unwrap_err();
        assert_eq!(e.origin, Origin::Set { index: 2 });
    }

    #[test]
    fn hash_ignores_spelling_and_cache_toggle() {
        let a = RunConfig::load(Experiment::TraceDistance, None, &["beta=800.0".into()]).unwrap();
        let b = RunConfig::load(
            Experiment::TraceDistance,
            None,
            &["beta=8e2".into(), "cache=false".into()],
        )
        .unwrap();
        let c = RunConfig::load(Experiment::TraceDistance, None, &["beta=801".into()]).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn grid_hits_both_ends() {
        let cfg = RunConfig::defaults(Experiment::TraceDistance);
        let g = cfg.grid("g");
        assert_eq!(g.len(), 480);
        assert_eq!((g[0], g[479]), (0.5, 2.9));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}

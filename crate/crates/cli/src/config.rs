//! Flat `key = value` experiment configuration.
//!
//! One key per line, `#` starts a comment, blank lines are ignored. Lists are
//! comma separated. Unknown or repeated keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use kac_core::analysis::order4_exponents;
use kac_core::kernels::{AngularKernel, KernelFamily};
use kac_core::system::two_temperature_cold_energy;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("key `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Decay,
    Inequalities,
    Counterexample1,
    Counterexample2,
    Wishart,
    EquilibriumCheck,
}

impl FromStr for Kind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "decay" => Kind::Decay,
            "inequalities" => Kind::Inequalities,
            "counterexample1" => Kind::Counterexample1,
            "counterexample2" => Kind::Counterexample2,
            "wishart" => Kind::Wishart,
            "equilibrium-check" => Kind::EquilibriumCheck,
            other => return Err(format!("unknown experiment kind `{other}`")),
        })
    }
}

impl Kind {
    fn default_n(self) -> usize {
        match self {
            Kind::Inequalities => 32,
            Kind::EquilibriumCheck => 4096,
            _ => 256,
        }
    }

    fn default_mc_samples(self) -> usize {
        match self {
            Kind::EquilibriumCheck => 2000,
            _ => 20_000,
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Kind::Decay => "decay",
            Kind::Inequalities => "inequalities",
            Kind::Counterexample1 => "counterexample1",
            Kind::Counterexample2 => "counterexample2",
            Kind::Wishart => "wishart",
            Kind::EquilibriumCheck => "equilibrium-check",
        };
        f.write_str(s)
    }
}

/// Law of the second copy at time zero in a decay run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialLaw {
    TwoTemperature,
    Equilibrium,
    Copy,
}

impl FromStr for InitialLaw {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "two-temperature" => InitialLaw::TwoTemperature,
            "equilibrium" => InitialLaw::Equilibrium,
            "copy" => InitialLaw::Copy,
            other => return Err(format!("unknown initial law `{other}`")),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub n: usize,
    pub d: usize,
    pub kernel: KernelFamily,
    pub horizon: f64,
    /// Number of intervals in the uniform sample grid on `[0, horizon]`.
    pub samples: usize,
    pub replicas: usize,
    pub delta: f64,
    pub p: f64,
    pub q: f64,
    pub seed: u64,
    pub output: PathBuf,
    pub initial: InitialLaw,
    pub hot_energy: f64,
    pub target_m4: f64,
    pub instances: usize,
    pub tolerance: f64,
    pub kmain_samples: usize,
    pub mc_samples: usize,
    pub m_values: Vec<f64>,
    pub heavy_q: f64,
    pub r_minus_values: Vec<f64>,
    pub band_eps: f64,
    pub n_values: Vec<usize>,
    pub wishart_p: f64,
}

pub const KEYS: [&str; 29] = [
    "kind",
    "n",
    "d",
    "kernel",
    "theta_min",
    "theta0",
    "nu",
    "horizon",
    "samples",
    "replicas",
    "delta",
    "p",
    "q",
    "seed",
    "output",
    "initial",
    "hot_energy",
    "target_m4",
    "instances",
    "tolerance",
    "kmain_samples",
    "mc_samples",
    "m_values",
    "heavy_q",
    "r_minus_values",
    "band_eps",
    "n_values",
    "wishart_p",
    "max_assignment",
];

fn parse_lines(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { line: i + 1, msg: format!("expected `key = value`, got `{line}`") });
        };
        let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
        if !KEYS.contains(&k.as_str()) {
            return Err(ConfigError::Syntax { line: i + 1, msg: format!("unknown key `{k}`") });
        }
        if map.insert(k.clone(), v).is_some() {
            return Err(ConfigError::Syntax { line: i + 1, msg: format!("duplicate key `{k}`") });
        }
    }
    Ok(map)
}

struct Fields(BTreeMap<String, String>);

impl Fields {
    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e: T::Err| ConfigError::Value { key: key.into(), msg: e.to_string() }),
        }
    }

    fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.0
            .get(key)
            .map(|v| v.parse().map_err(|e: T::Err| ConfigError::Value { key: key.into(), msg: e.to_string() }))
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &str, default: &[T]) -> Result<Vec<T>, ConfigError>
    where
        T: Clone,
        T::Err: fmt::Display,
    {
        match self.0.get(key) {
            None => Ok(default.to_vec()),
            Some(v) if v.is_empty() => Ok(vec![]),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse().map_err(|e: T::Err| ConfigError::Value { key: key.into(), msg: e.to_string() }))
                .collect(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let f = Fields(parse_lines(text)?);
        let kind: Kind = match f.0.get("kind") {
            Some(k) => k.parse().map_err(|msg| ConfigError::Value { key: "kind".into(), msg })?,
            None => return Err(ConfigError::Invalid("missing required key `kind`".into())),
        };
        let theta_min = f.get("theta_min", 0.0)?;
        let kernel = match f.get("kernel", "uniform".to_string())?.as_str() {
            "uniform" => KernelFamily::Uniform { theta_min },
            "dirac" => KernelFamily::Dirac { theta0: f.get("theta0", std::f64::consts::FRAC_PI_2)? },
            "power_law" | "power-law" => KernelFamily::PowerLaw { nu: f.get("nu", 1.0)?, theta_min },
            other => return Err(ConfigError::Value { key: "kernel".into(), msg: format!("unknown family `{other}`") }),
        };
        let delta = f.get("delta", 0.5)?;
        let (p, q) = match (f.opt::<f64>("p")?, f.opt::<f64>("q")?) {
            (Some(p), Some(q)) => (p, q),
            (Some(p), None) => (p, p / (p - 1.0)),
            (None, Some(q)) => (q / (q - 1.0), q),
            (None, None) if delta < 1.0 => order4_exponents(delta),
            (None, None) => {
                return Err(ConfigError::Invalid(format!("delta = {delta} >= 1 has no default exponents; set p")));
            }
        };
        let cfg = ExperimentConfig {
            kind,
            n: f.get("n", kind.default_n())?,
            d: f.get("d", 3)?,
            kernel,
            horizon: f.get("horizon", 20.0)?,
            samples: f.get("samples", 20)?,
            replicas: f.get("replicas", 100)?,
            delta,
            p,
            q,
            seed: f.get("seed", 0)?,
            output: f.get("output", PathBuf::from("out"))?,
            initial: f.get::<String>("initial", "two-temperature".into())?.parse().map_err(|msg| ConfigError::Value { key: "initial".into(), msg })?,
            hot_energy: f.get("hot_energy", 3.0)?,
            target_m4: f.get("target_m4", 3.0)?,
            instances: f.get("instances", 10_000)?,
            tolerance: f.get("tolerance", 1e-10)?,
            kmain_samples: f.get("kmain_samples", 20)?,
            mc_samples: f.get("mc_samples", kind.default_mc_samples())?,
            m_values: f.list("m_values", &[10.0, 100.0, 1000.0])?,
            heavy_q: f.get("heavy_q", 1.5)?,
            r_minus_values: f.list("r_minus_values", &[2.0, 4.0, 8.0])?,
            band_eps: f.get("band_eps", 0.05)?,
            n_values: f.list("n_values", &[64, 256, 1024, 2048])?,
            wishart_p: f.get("wishart_p", 2.0)?,
        };
        let max_assignment: usize = f.get("max_assignment", kac_core::assignment::DEFAULT_MAX_SIZE)?;
        cfg.validate(max_assignment)?;
        Ok(cfg)
    }

    pub fn kernel(&self) -> AngularKernel {
        AngularKernel::new(self.kernel).expect("validated")
    }

    pub fn validate(&self, max_assignment: usize) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.d < 3 {
            return bad(format!("d must be at least 3, got {}", self.d));
        }
        if self.n < 2 {
            return bad(format!("N must be at least 2, got {}", self.n));
        }
        if !(self.tolerance >= 0.0) {
            return bad(format!("tolerance must be non-negative, got {}", self.tolerance));
        }
        match self.kind {
            Kind::Decay => {
                if let Err(e) = AngularKernel::new(self.kernel) {
                    return bad(format!("kernel: {e}"));
                }
                if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
                    return bad(format!("horizon must be finite and non-negative, got {}", self.horizon));
                }
                if self.samples == 0 {
                    return bad("samples must be positive".into());
                }
                if self.n > max_assignment {
                    return bad(format!("N = {} exceeds the assignment limit {max_assignment}", self.n));
                }
                if !(self.delta > 0.0 && self.delta.is_finite()) {
                    return bad(format!("delta must be positive, got {}", self.delta));
                }
                if !(self.p > 1.0 && self.p.is_finite()) || (1.0 / self.p + 1.0 / self.q - 1.0).abs() > 1e-12 {
                    return bad(format!("p = {}, q = {} are not conjugate exponents", self.p, self.q));
                }
                let order = self.p * (1.0 + 2.0 * self.delta);
                if self.n as f64 - 2.0 * order / (self.d as f64 - 1.0) <= self.d as f64 {
                    return bad(format!("moment of order {order} is infinite for N = {}, d = {}", self.n, self.d));
                }
                if self.kmain_samples == 0 {
                    return bad("kmain_samples must be positive".into());
                }
                if self.initial == InitialLaw::TwoTemperature {
                    if let Err(e) = two_temperature_cold_energy(self.d, self.hot_energy, self.target_m4) {
                        return bad(format!("two-temperature law: {e}"));
                    }
                }
            }
            Kind::Inequalities => {
                if !(self.delta > 0.0) || !(self.p > 1.0) {
                    return bad(format!("delta = {}, p = {}", self.delta, self.p));
                }
            }
            Kind::Counterexample1 => {
                if !(self.heavy_q > 1.0 && self.heavy_q < 2.0) {
                    return bad(format!("heavy_q must lie in (1, 2), got {}", self.heavy_q));
                }
                if let Some(m) = self.m_values.iter().find(|m| !(**m > 1.0)) {
                    return bad(format!("m_values must exceed 1, got {m}"));
                }
                if self.mc_samples < 2 {
                    return bad("mc_samples must be at least 2".into());
                }
            }
            Kind::Counterexample2 => {
                if !(self.band_eps > 0.0) {
                    return bad(format!("band_eps must be positive, got {}", self.band_eps));
                }
                if let Some(r) = self.r_minus_values.iter().find(|r| !(**r > 0.0)) {
                    return bad(format!("r_minus_values must be positive, got {r}"));
                }
                if self.mc_samples < 2 {
                    return bad("mc_samples must be at least 2".into());
                }
            }
            Kind::Wishart => {
                if !(self.wishart_p >= 1.0) {
                    return bad(format!("wishart_p must be at least 1, got {}", self.wishart_p));
                }
                for &n in &self.n_values {
                    if n as f64 - 2.0 * self.wishart_p / (self.d as f64 - 1.0) <= self.d as f64 {
                        return bad(format!("moment of order {} is infinite for N = {n}", self.wishart_p));
                    }
                }
                if self.mc_samples < 2 {
                    return bad("mc_samples must be at least 2".into());
                }
            }
            Kind::EquilibriumCheck => {
                if self.mc_samples < 2 {
                    return bad("mc_samples must be at least 2".into());
                }
            }
        }
        Ok(())
    }
}

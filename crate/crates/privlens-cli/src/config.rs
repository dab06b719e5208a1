//! Run configuration: flags over a JSON config file over defaults.

use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use privlens::simplex::{Channel, FunctionSpec, Pmf};
use serde::Deserialize;
use serde_json::Value;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub type CfgResult<T> = Result<T, ConfigError>;

fn cfg_err<T>(msg: impl Into<String>) -> CfgResult<T> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Spec file path or inline JSON such as {"r":5,"atoms":[[0,1,2],[3,4]]}
    #[arg(long)]
    pub spec: Option<String>,
    /// A single value or an inclusive range a:b:step
    #[arg(long)]
    pub rho: Option<String>,
    /// A single value or a comma separated list
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<u64>,
    /// Candidate evaluations for the converse search
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// JSON file with any of the keys above
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    spec: Option<Value>,
    rho: Option<Value>,
    n: Option<Value>,
    zeta: Option<f64>,
    seed: Option<u64>,
    samples: Option<u64>,
    budget: Option<usize>,
    out: Option<PathBuf>,
    format: Option<Format>,
    pmf: Option<Vec<f64>>,
    channel: Option<Vec<Vec<f64>>>,
    grid_points: Option<usize>,
    only: Option<Vec<String>>,
}

/// Fully resolved and validated settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: Option<FunctionSpec>,
    pub rho: Option<Vec<f64>>,
    pub n: Option<Vec<u64>>,
    pub zeta: f64,
    pub seed: u64,
    pub samples: u64,
    pub budget: usize,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub pmf: Option<Pmf>,
    pub channel: Option<Channel>,
    pub grid_points: usize,
    pub only: Vec<String>,
}

fn parse_spec_text(text: &str) -> CfgResult<FunctionSpec> {
    let t = text.trim();
    let json = if t.starts_with('{') {
        t.to_string()
    } else {
        fs::read_to_string(t).map_err(|e| ConfigError(format!("cannot read spec file {t}: {e}")))?
    };
    serde_json::from_str(&json).map_err(|e| ConfigError(format!("invalid spec: {e}")))
}

fn parse_spec_value(v: &Value) -> CfgResult<FunctionSpec> {
    match v {
        Value::String(s) => parse_spec_text(s),
        other => serde_json::from_value(other.clone()).map_err(|e| ConfigError(format!("invalid spec: {e}"))),
    }
}

fn parse_f64(s: &str, what: &str) -> CfgResult<f64> {
    s.trim().parse().map_err(|_| ConfigError(format!("invalid {what} value {s:?}")))
}

/// `v` or the inclusive range `a:b:step`.
pub fn parse_rho_text(s: &str) -> CfgResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let vals = match parts.as_slice() {
        [v] => vec![parse_f64(v, "rho")?],
        [a, b, step] => {
            let (a, b, step) = (parse_f64(a, "rho")?, parse_f64(b, "rho")?, parse_f64(step, "rho")?);
            if !(step > 0.0) || !step.is_finite() {
                return cfg_err("rho step must be positive");
            }
            let count = ((b - a) / step + 1e-9).floor();
            if count < 0.0 {
                return cfg_err(format!("empty rho range {s}"));
            }
            (0..=count as usize).map(|i| a + step * i as f64).collect()
        }
        _ => return cfg_err(format!("rho must be v or a:b:step, got {s:?}")),
    };
    Ok(vals)
}

fn parse_rho_value(v: &Value) -> CfgResult<Vec<f64>> {
    match v {
        Value::Number(x) => Ok(vec![x.as_f64().unwrap_or(f64::NAN)]),
        Value::String(s) => parse_rho_text(s),
        Value::Array(a) => a
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| ConfigError(format!("invalid rho entry {x}"))))
            .collect(),
        other => cfg_err(format!("invalid rho {other}")),
    }
}

pub fn parse_n_text(s: &str) -> CfgResult<Vec<u64>> {
    s.split(',')
        .map(|p| p.trim().parse::<u64>().map_err(|_| ConfigError(format!("invalid n value {p:?}"))))
        .collect()
}

fn parse_n_value(v: &Value) -> CfgResult<Vec<u64>> {
    match v {
        Value::Number(x) => x.as_u64().map(|n| vec![n]).ok_or_else(|| ConfigError(format!("invalid n {x}"))),
        Value::String(s) => parse_n_text(s),
        Value::Array(a) => a
            .iter()
            .map(|x| x.as_u64().ok_or_else(|| ConfigError(format!("invalid n entry {x}"))))
            .collect(),
        other => cfg_err(format!("invalid n {other}")),
    }
}

impl RunConfig {
    pub fn resolve(flags: &Flags) -> CfgResult<RunConfig> {
        let file: FileConfig = match &flags.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| ConfigError(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| ConfigError(format!("invalid config: {e}")))?
            }
            None => FileConfig::default(),
        };
        let spec = match (&flags.spec, &file.spec) {
            (Some(s), _) => Some(parse_spec_text(s)?),
            (None, Some(v)) => Some(parse_spec_value(v)?),
            _ => None,
        };
        let rho = match (&flags.rho, &file.rho) {
            (Some(s), _) => Some(parse_rho_text(s)?),
            (None, Some(v)) => Some(parse_rho_value(v)?),
            _ => None,
        };
        let n = match (&flags.n, &file.n) {
            (Some(s), _) => Some(parse_n_text(s)?),
            (None, Some(v)) => Some(parse_n_value(v)?),
            _ => None,
        };
        let pmf = file.pmf.map(Pmf::new).transpose().map_err(|e| ConfigError(format!("invalid pmf: {e}")))?;
        let channel = file
            .channel
            .map(Channel::new)
            .transpose()
            .map_err(|e| ConfigError(format!("invalid channel: {e}")))?;
        let cfg = RunConfig {
            spec,
            rho,
            n,
            zeta: flags.zeta.or(file.zeta).unwrap_or(2.0),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            samples: flags.samples.or(file.samples).unwrap_or(100_000),
            budget: flags.budget.or(file.budget).unwrap_or(10_000),
            out: flags.out.clone().or(file.out),
            format: flags.format.or(file.format),
            pmf,
            channel,
            grid_points: file.grid_points.unwrap_or(41),
            only: file.only.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CfgResult<()> {
        if let Some(r) = &self.rho {
            if r.is_empty() {
                return cfg_err("rho range is empty");
            }
            if let Some(bad) = r.iter().find(|x| !(**x > 0.0 && **x <= 1.0)) {
                return cfg_err(format!("rho={bad} not in (0,1]"));
            }
        }
        if let Some(n) = &self.n {
            if n.is_empty() {
                return cfg_err("n list is empty");
            }
            if n.contains(&0) {
                return cfg_err("n must be positive");
            }
        }
        if !(self.zeta > 1.0) || !self.zeta.is_finite() {
            return cfg_err(format!("zeta={} must exceed 1", self.zeta));
        }
        if self.samples == 0 {
            return cfg_err("samples must be positive");
        }
        if self.budget == 0 {
            return cfg_err("budget must be positive");
        }
        if self.grid_points < 2 {
            return cfg_err("grid_points must be at least 2");
        }
        Ok(())
    }

    pub fn need_spec(&self) -> CfgResult<&FunctionSpec> {
        self.spec.as_ref().ok_or_else(|| ConfigError("--spec is required".into()))
    }

    pub fn need_rho(&self) -> CfgResult<&[f64]> {
        self.rho.as_deref().ok_or_else(|| ConfigError("--rho is required".into()))
    }

    pub fn single_rho(&self) -> CfgResult<f64> {
        match self.need_rho()? {
            [r] => Ok(*r),
            _ => cfg_err("this command takes a single rho"),
        }
    }

    pub fn need_n(&self) -> CfgResult<&[u64]> {
        self.n.as_deref().ok_or_else(|| ConfigError("--n is required".into()))
    }

    pub fn single_n(&self) -> CfgResult<u32> {
        match self.need_n()? {
            [n] => u32::try_from(*n).map_err(|_| ConfigError(format!("n={n} too large"))),
            _ => cfg_err("this command takes a single n"),
        }
    }
}

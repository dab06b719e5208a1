mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use privlens::bounds::{
    achievability_lower_bound, converse_upper_bound, lambda_n, min_valid_n, omega, regime, Lambda_n,
    SearchConfig,
};
use privlens::estimators::{default_smooth_schedule, ml_locally_uniform_estimate, EstimatorTable};
use privlens::game::{brute_force_minimax, monte_carlo_privacy, GameInstance, MinimaxGrids};
use privlens::mechanisms::{
    build_block_mechanism, build_wl, level_of_rho, merge_groups, recoverability, validate_rho_qr, Level,
};
use privlens::simplex::{locally_uniform, Channel, FunctionSpec, Pmf};
use privlens::verify::{run_battery, VerifyOptions};
use serde::{Deserialize, Serialize};
use serde_json::json;

use config::{ConfigError, Flags, Format, RunConfig};
use output::{cell, emit, json_text, opt_cell};

#[derive(Parser)]
#[command(name = "privlens", version, about = "Distribution privacy of recoverable query-response channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Worst-case privacy level over a rho grid
    Omega(Flags),
    /// Block mechanism for one rho
    Mechanism(Flags),
    /// Achievability and converse bounds over an n sweep
    Bounds(Flags),
    /// Monte Carlo estimate of the privacy payoff
    Simulate(Flags),
    /// Grid minimax for two symbols
    Minimax(Flags),
    /// Run the self-check battery
    Verify {
        #[command(flatten)]
        flags: Flags,
        /// Suites to run, comma separated
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
        /// Seed of an intentional fault in the reference omega
        #[arg(long)]
        mutate: Option<u64>,
    },
}

enum Failure {
    Config(String),
    Numeric(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

impl From<privlens::Error> for Failure {
    fn from(e: privlens::Error) -> Self {
        Failure::Numeric(e.to_string())
    }
}

type Run = Result<(), Failure>;

fn write(cfg: &RunConfig, text: &str) -> Run {
    emit(text, cfg.out.as_deref()).map_err(|e| Failure::Config(format!("cannot write output: {e}")))
}

fn json_only(cfg: &RunConfig) -> Run {
    if cfg.format == Some(Format::Csv) {
        return Err(Failure::Config("this command only writes json".into()));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct OmegaRow {
    pub rho: f64,
    pub omega: f64,
    pub breakpoint: bool,
}

fn cmd_omega(cfg: &RunConfig) -> Run {
    let spec = cfg.need_spec()?;
    let grid = cfg.rho.clone().unwrap_or_else(|| (1..=20).map(|i| i as f64 * 0.05).collect());
    let (lo, hi) = grid.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let mut points: Vec<(f64, bool)> = grid.iter().map(|&r| (r, false)).collect();
    for l in 1..=spec.k() {
        let b = 1.0 / l as f64;
        if b >= lo - 1e-12 && b <= hi + 1e-12 {
            match points.iter_mut().find(|(r, _)| (r - b).abs() <= 1e-12) {
                Some(p) => p.1 = true,
                None => points.push((b, true)),
            }
        }
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rows = points
        .into_iter()
        .map(|(rho, breakpoint)| Ok(OmegaRow { rho, omega: omega(spec, rho)?, breakpoint }))
        .collect::<Result<Vec<_>, privlens::Error>>()?;
    let text = match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut s = String::from("rho,omega,breakpoint\n");
            for r in &rows {
                s += &format!("{},{},{}\n", cell(r.rho), cell(r.omega), r.breakpoint);
            }
            s
        }
        Format::Json => json_text(serde_json::to_value(&rows).expect("serializable")),
    };
    write(cfg, &text)
}

fn cmd_mechanism(cfg: &RunConfig) -> Run {
    json_only(cfg)?;
    let spec = cfg.need_spec()?;
    let rho = cfg.single_rho()?;
    let k = spec.k();
    let doc = match level_of_rho(rho, k)? {
        Level::Full => {
            let w = build_wl(spec, k)?;
            validate_rho_qr(&w, spec, rho)?;
            json!({
                "construction": "w_l",
                "regime": "worst-case",
                "rho": rho,
                "k": k,
                "l": k,
                "channel": w,
                "validation": {"valid": true, "recoverability": recoverability(&w, spec)},
            })
        }
        Level::Partial(_) => {
            let g = regime(spec, rho)?;
            let m = build_block_mechanism(spec, rho)?;
            let lifted = m.lifted();
            let valid = validate_rho_qr(&lifted, spec, rho).is_ok();
            let merged = m.v.merge_columns(&merge_groups(k, g.l))?;
            let merged_spec = spec.merge(&merge_groups(k, g.l))?;
            json!({
                "construction": m.construction,
                "regime": "block",
                "rho": rho,
                "k": k,
                "l": g.l,
                "l_prime": g.l_prime,
                "k_prime": g.k_prime,
                "v": m.v,
                "merged": merged,
                "merged_spec": merged_spec,
                "channel": lifted,
                "validation": {"valid": valid, "recoverability": recoverability(&lifted, spec)},
            })
        }
    };
    write(cfg, &json_text(doc))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BoundsRow {
    pub n: u64,
    pub omega: f64,
    pub achievability: Option<f64>,
    pub converse: Option<f64>,
    pub lambda_n: Option<f64>,
    #[serde(rename = "Lambda_n")]
    pub big_lambda_n: Option<f64>,
    pub valid: bool,
}

fn cmd_bounds(cfg: &RunConfig) -> Run {
    let spec = cfg.need_spec()?;
    let rho = cfg.single_rho()?;
    let mut ns = cfg.need_n()?.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let schedule = default_smooth_schedule(cfg.zeta)?;
    let w = omega(spec, rho)?;
    let partial = matches!(level_of_rho(rho, spec.k())?, Level::Partial(_));
    let min_n = if partial { Some(min_valid_n(spec, rho, cfg.zeta)?) } else { None };
    let search = SearchConfig { budget: cfg.budget, seed: cfg.seed, ..SearchConfig::default() };
    let mut rows = Vec::with_capacity(ns.len());
    for n in ns {
        let valid = min_n.is_some_and(|m| n >= m);
        let (achievability, lam, big) = if partial {
            let g = regime(spec, rho)?;
            let lam = lambda_n(g.k_prime, cfg.zeta, n as f64);
            match (achievability_lower_bound(spec, rho, n, &schedule), Lambda_n(spec, rho, n, &schedule)) {
                (Ok(a), Ok(b)) => (Some(a), Some(lam), Some(b)),
                (Err(e), _) | (_, Err(e)) if valid => return Err(e.into()),
                _ => (None, Some(lam), None),
            }
        } else {
            (None, None, None)
        };
        let converse = if rho > 0.5 {
            let n32 = u32::try_from(n).map_err(|_| ConfigError(format!("n={n} too large for the converse")))?;
            Some(converse_upper_bound(spec, rho, n32, &search)?.value)
        } else {
            None
        };
        rows.push(BoundsRow { n, omega: w, achievability, converse, lambda_n: lam, big_lambda_n: big, valid });
    }
    let text = match cfg.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut s = String::from("n,omega,achievability,converse,lambda_n,Lambda_n,valid\n");
            for r in &rows {
                s += &format!(
                    "{},{},{},{},{},{},{}\n",
                    r.n,
                    cell(r.omega),
                    opt_cell(r.achievability),
                    opt_cell(r.converse),
                    opt_cell(r.lambda_n),
                    opt_cell(r.big_lambda_n),
                    r.valid
                );
            }
            s
        }
        Format::Json => json_text(serde_json::to_value(&rows).expect("serializable")),
    };
    write(cfg, &text)
}

/// Default user strategy: the worst-case mechanism for `rho` and a point mass in the largest atom.
fn default_channel(spec: &FunctionSpec, rho: f64) -> Result<Channel, privlens::Error> {
    match level_of_rho(rho, spec.k())? {
        Level::Full => build_wl(spec, spec.k()),
        Level::Partial(_) => Ok(build_block_mechanism(spec, rho)?.lifted()),
    }
}

/// Projection-based locally uniform estimator when the channel is locally identical and
/// invertible; otherwise add-one smoothed type frequencies spread over each atom.
fn default_estimator(spec: &FunctionSpec, w: &Channel, n: u32) -> Result<EstimatorTable, privlens::Error> {
    let k = spec.k();
    let identical = (0..spec.r()).all(|x| w.row(x) == w.row(spec.atom(spec.f(x))[0]));
    if identical {
        let v = Channel::new((0..k).map(|j| w.row(spec.atom(j)[0]).to_vec()).collect())?;
        if let Ok(t) = EstimatorTable::from_fn(n, k, |t| ml_locally_uniform_estimate(t, &v, spec)) {
            return Ok(t);
        }
    }
    EstimatorTable::from_fn(n, k, |t| {
        let beta = Pmf::normalized(t.counts().iter().map(|&c| c as f64 + 1.0).collect())?;
        locally_uniform(&beta, spec)
    })
}

fn cmd_simulate(cfg: &RunConfig) -> Run {
    json_only(cfg)?;
    let spec = cfg.need_spec()?;
    let rho = cfg.single_rho()?;
    let n = cfg.single_n()?;
    let w = match &cfg.channel {
        Some(c) => c.clone(),
        None => default_channel(spec, rho)?,
    };
    let p = match &cfg.pmf {
        Some(p) => p.clone(),
        None => Pmf::point(spec.r(), spec.atom(0)[0]),
    };
    let est = default_estimator(spec, &w, n)?;
    let g = GameInstance::new(spec, rho, n, p, &w, est)?;
    let mc = monte_carlo_privacy(&g, cfg.samples, cfg.seed)?;
    write(cfg, &json_text(serde_json::to_value(mc).expect("serializable")))
}

fn cmd_minimax(cfg: &RunConfig) -> Run {
    json_only(cfg)?;
    let spec = match &cfg.spec {
        Some(s) => s.clone(),
        None => FunctionSpec::singletons(2)?,
    };
    let rho = cfg.single_rho()?;
    let n = cfg.single_n()?;
    let g = cfg.grid_points;
    let grids = MinimaxGrids { channel_points: g, estimator_points: g, pmf_points: g, ..MinimaxGrids::default() };
    let res = brute_force_minimax(&spec, rho, n, &grids)?;
    write(cfg, &json_text(serde_json::to_value(res).expect("serializable")))
}

fn cmd_verify(cfg: &RunConfig, only: &[String], mutate: Option<u64>) -> Run {
    let mut names: Vec<String> = only.to_vec();
    if names.is_empty() {
        names = cfg.only.clone();
    }
    let opts = VerifyOptions { seed: cfg.seed, mutation: mutate };
    let checks = run_battery(&names, &opts).map_err(|e| Failure::Config(e.to_string()))?;
    let text = match cfg.format {
        Some(Format::Json) => json_text(serde_json::to_value(&checks).expect("serializable")),
        _ => checks
            .iter()
            .map(|c| {
                format!("{} {} ({:.2} s): {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.seconds, c.detail)
            })
            .collect(),
    };
    write(cfg, &text)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numeric(format!("failed: {}", failed.join(", "))))
    }
}

fn init_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("PRIVLENS_THREADS") {
        let t: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|t| *t > 0)
            .ok_or_else(|| Failure::Config(format!("PRIVLENS_THREADS={v:?} is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Run {
    init_threads()?;
    match cli.command {
        Command::Omega(f) => cmd_omega(&RunConfig::resolve(&f)?),
        Command::Mechanism(f) => cmd_mechanism(&RunConfig::resolve(&f)?),
        Command::Bounds(f) => cmd_bounds(&RunConfig::resolve(&f)?),
        Command::Simulate(f) => cmd_simulate(&RunConfig::resolve(&f)?),
        Command::Minimax(f) => cmd_minimax(&RunConfig::resolve(&f)?),
        Command::Verify { flags, only, mutate } => cmd_verify(&RunConfig::resolve(&flags)?, &only, mutate),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("privlens: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("privlens: {msg}");
            ExitCode::from(3)
        }
    }
}

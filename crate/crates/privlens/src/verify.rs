//! Self-check battery run by `privlens verify`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::{
    achievability_lower_bound, converse_upper_bound, gamma_n_inner, lambda_n, min_valid_n, omega,
    theta_n, Lambda_n, SearchConfig,
};
use crate::error::{Error, Result};
use crate::estimators::{default_smooth_schedule, reverse_iprojection, EstimatorTable};
use crate::game::{
    brute_force_minimax, exact_privacy, monte_carlo_privacy, theorem1_equality_check, GameInstance,
    MinimaxGrids, GRID_TOLERANCE,
};
use crate::mechanisms::{
    build_block_mechanism, build_wl, ldp_rho_cap, recoverability, satisfies_ldp, validate_rho_qr,
};
use crate::simplex::{
    divergence_var_lower_bound, kl_bits, kl_divergence, local_uniformity_bound, locally_uniform,
    variational_distance, Channel, FunctionSpec, Pmf,
};

/// Random instances shared by the battery and the test suites.
pub mod sample {
    use super::*;

    /// Flat Dirichlet draw.
    pub fn pmf(rng: &mut ChaCha8Rng, d: usize) -> Pmf {
        let w: Vec<f64> = (0..d).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        Pmf::normalized(w).expect("positive weights")
    }

    /// Pmf with every entry at least `lo / d` before normalization.
    pub fn interior_pmf(rng: &mut ChaCha8Rng, d: usize, lo: f64) -> Pmf {
        let w: Vec<f64> = (0..d).map(|_| lo + rng.random::<f64>()).collect();
        Pmf::normalized(w).expect("positive weights")
    }

    /// Random partition of `0..r` into `k` nonempty atoms.
    pub fn spec(rng: &mut ChaCha8Rng, r: usize, k: usize) -> FunctionSpec {
        let mut perm: Vec<usize> = (0..r).collect();
        for i in (1..r).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let mut atoms: Vec<Vec<usize>> = perm[..k].iter().map(|&x| vec![x]).collect();
        for &x in &perm[k..] {
            atoms[rng.random_range(0..k)].push(x);
        }
        FunctionSpec::new(r, atoms).expect("valid partition")
    }

    /// `k x k` channel with diagonal in `[lo, 1]`.
    pub fn diag_channel(rng: &mut ChaCha8Rng, k: usize, lo: f64) -> Channel {
        let rows = (0..k)
            .map(|j| {
                let d = lo + (1.0 - lo) * rng.random::<f64>();
                let rest = pmf(rng, k - 1);
                let mut it = rest.weights().iter();
                (0..k).map(|z| if z == j { d } else { (1.0 - d) * it.next().unwrap() }).collect()
            })
            .collect();
        Channel::new(rows).expect("stochastic rows")
    }

    /// Channel from `r` inputs with `W(f(x)|x) >= rho`.
    pub fn qr_channel(rng: &mut ChaCha8Rng, spec: &FunctionSpec, rho: f64) -> Channel {
        let k = spec.k();
        let rows = (0..spec.r())
            .map(|x| {
                let d = rho + (1.0 - rho) * rng.random::<f64>();
                let rest = pmf(rng, k - 1);
                let mut it = rest.weights().iter();
                (0..k).map(|z| if z == spec.f(x) { d } else { (1.0 - d) * it.next().unwrap() }).collect()
            })
            .collect();
        Channel::new(rows).expect("stochastic rows")
    }

    pub fn estimator(rng: &mut ChaCha8Rng, n: u32, k: usize, r: usize) -> EstimatorTable {
        EstimatorTable::from_fn(n, k, |_| Ok(interior_pmf(rng, r, 0.05))).expect("full table")
    }

    /// `rho` drawn from level `l` (`1/(l+1) < rho <= 1/l`), or from `(0, 1/k]` when `l == k`.
    pub fn rho_in_level(rng: &mut ChaCha8Rng, k: usize, l: usize) -> f64 {
        let hi = 1.0 / l as f64;
        let lo = 1.0 / (l + 1) as f64;
        if l >= k {
            return hi * (1.0 - rng.random::<f64>());
        }
        hi - (hi - lo) * rng.random::<f64>() * (1.0 - 1e-6)
    }
}

pub const SUITES: [&str; 13] = [
    "omega",
    "theorem1",
    "minimax",
    "monotonicity",
    "converse",
    "sandwich",
    "iprojection",
    "lemma4",
    "lemma5",
    "pinsker",
    "montecarlo",
    "limits",
    "ldp",
];

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Seed of an intentional fault in the reference `omega` used by the checks.
    pub mutation: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

struct Ctx<'a> {
    opts: &'a VerifyOptions,
}

impl Ctx<'_> {
    fn omega(&self, spec: &FunctionSpec, rho: f64) -> Result<f64> {
        let w = omega(spec, rho)?;
        Ok(match self.opts.mutation {
            None => w,
            Some(s) => w + 1e-6 + 1e-3 * ChaCha8Rng::seed_from_u64(s).random::<f64>(),
        })
    }

    fn rng(&self, salt: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        rng.set_stream(salt);
        rng
    }
}

type Outcome = Result<(bool, String)>;

fn check_omega(c: &Ctx) -> Outcome {
    let cases = [(&[3usize, 2][..], 0.4, 5f64.log2()), (&[3, 2], 0.7, 3f64.log2()), (&[4, 2, 1], 0.45, 6f64.log2())];
    let mut worst: f64 = 0.0;
    for (sizes, rho, want) in cases {
        let s = FunctionSpec::from_sizes(sizes)?;
        worst = worst.max((c.omega(&s, rho)? - want).abs());
    }
    Ok((worst <= 1e-12, format!("max error {worst:.3e}")))
}

fn check_theorem1(c: &Ctx) -> Outcome {
    let mut rng = c.rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(2..=5);
        let r = rng.random_range(k..=12);
        let spec = sample::spec(&mut rng, r, k);
        let l = rng.random_range(1..=k);
        let rho = sample::rho_in_level(&mut rng, k, l);
        worst = worst.max((theorem1_equality_check(&spec, rho)? - c.omega(&spec, rho)?).abs());
    }
    Ok((worst <= 1e-9, format!("100 specs, max |check - omega| = {worst:.3e}")))
}

fn minimax_value(rho: f64, n: u32) -> Result<f64> {
    let spec = FunctionSpec::singletons(2)?;
    Ok(brute_force_minimax(&spec, rho, n, &MinimaxGrids::default())?.value)
}

fn check_minimax(_: &Ctx) -> Outcome {
    let v = minimax_value(0.4, 1)?;
    Ok(((0.97..=1.0 + 1e-12).contains(&v), format!("value {v:.6} bits, target [0.97, 1]")))
}

fn check_monotonicity(_: &Ctx) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for rho in [0.4, 0.8] {
        let (a, b) = (minimax_value(rho, 1)?, minimax_value(rho, 2)?);
        ok &= b <= a + GRID_TOLERANCE;
        parts.push(format!("rho={rho}: n=1 {a:.6}, n=2 {b:.6}"));
    }
    Ok((ok, parts.join("; ")))
}

fn check_converse(_: &Ctx) -> Outcome {
    let g1 = gamma_n_inner(&Pmf::new(vec![1.0, 0.0])?, &Channel::identity(2), 1)?;
    let first = (g1 - 1.5f64.log2()).abs() <= 1e-12;
    let v = Channel::new(vec![vec![0.8, 0.2], vec![0.2, 0.8]])?;
    let alpha = Pmf::new(vec![0.6, 0.4])?;
    let vals = [4, 8, 16, 32].map(|n| gamma_n_inner(&alpha, &v, n));
    let vals = vals.into_iter().collect::<Result<Vec<_>>>()?;
    let decreasing = vals.windows(2).all(|w| w[1] < w[0]);
    let ratio = vals[3] < 0.25 * vals[0];
    Ok((first && decreasing && ratio, format!("Gamma_1 = {g1:.9}; n=4..32: {vals:.6?}")))
}

fn check_sandwich(c: &Ctx) -> Outcome {
    let spec = FunctionSpec::from_sizes(&[3, 2])?;
    let rho = 0.8;
    let schedule = default_smooth_schedule(2.0)?;
    let min_n = min_valid_n(&spec, rho, 2.0)?;
    let cfg = SearchConfig { seed: c.opts.seed, ..SearchConfig::default() };
    let target = 3f64.log2();
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [64u32, 256, 1024] {
        if (n as u64) < min_n {
            continue;
        }
        let lo = achievability_lower_bound(&spec, rho, n as u64, &schedule)?;
        let hi = converse_upper_bound(&spec, rho, n, &cfg)?.value;
        ok &= lo <= hi;
        if n == 1024 {
            ok &= (lo - target).abs() <= 0.2 && (hi - target).abs() <= 0.2;
        }
        parts.push(format!("n={n}: [{lo:.6}, {hi:.6}]"));
    }
    Ok((ok, parts.join("; ")))
}

fn check_iprojection(c: &Ctx) -> Outcome {
    let mut rng = c.rng(2);
    let mut worst_gain: f64 = f64::NEG_INFINITY;
    let mut worst_idem: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(2..=5);
        let v = sample::diag_channel(&mut rng, k, 0.6);
        let q = sample::pmf(&mut rng, k);
        let proj = reverse_iprojection(&q, &v)?;
        let best = kl_bits(q.weights(), proj.q_tilde.weights());
        for _ in 0..1000 {
            let beta = sample::pmf(&mut rng, k);
            let d = kl_bits(q.weights(), &v.apply_slice(beta.weights()));
            worst_gain = worst_gain.max(best - d);
        }
        let again = reverse_iprojection(&proj.q_tilde, &v)?;
        worst_idem = worst_idem.max(variational_distance(&again.q_tilde, &proj.q_tilde)?);
    }
    Ok((
        worst_gain <= 1e-9 && worst_idem <= 1e-9,
        format!("largest random improvement {worst_gain:.3e}, idempotence error {worst_idem:.3e}"),
    ))
}

/// `p` concentrates each atom's mass on one symbol.
fn atomwise_point_mass(p: &Pmf, spec: &FunctionSpec) -> bool {
    spec.atoms().iter().all(|a| a.iter().filter(|&&x| p[x] > 0.0).count() <= 1)
}

fn check_lemma4(c: &Ctx) -> Outcome {
    let mut rng = c.rng(3);
    let mut bad = 0;
    for i in 0..10_000 {
        let k = rng.random_range(2..=5);
        let r = rng.random_range(k..=10);
        let spec = sample::spec(&mut rng, r, k);
        let p = if i % 2 == 0 {
            let masses = sample::interior_pmf(&mut rng, k, 0.05);
            let mut w = vec![0.0; r];
            for (j, a) in spec.atoms().iter().enumerate() {
                w[a[rng.random_range(0..a.len())]] = masses[j];
            }
            Pmf::new(w)?
        } else {
            sample::interior_pmf(&mut rng, r, 0.05)
        };
        let beta = sample::interior_pmf(&mut rng, k, 0.05);
        let (bound, tight) = local_uniformity_bound(&p, &spec, &beta)?;
        let actual = kl_divergence(&p, &locally_uniform(&beta, &spec)?)?;
        if actual > bound + 1e-12 || tight != atomwise_point_mass(&p, &spec) {
            bad += 1;
        }
    }
    Ok((bad == 0, format!("{bad} of 10000 instances violate the bound or its equality case")))
}

fn check_lemma5(c: &Ctx) -> Outcome {
    let mut rng = c.rng(4);
    let mut bad = 0;
    for _ in 0..10_000 {
        let d = rng.random_range(2..=8);
        let q0 = sample::pmf(&mut rng, d);
        let mut qw = sample::pmf(&mut rng, d).weights().to_vec();
        let mut pw = sample::pmf(&mut rng, d).weights().to_vec();
        for i in 0..d {
            if rng.random::<f64>() < 0.2 {
                qw[i] = 0.0;
            }
            if qw[i] == 0.0 || rng.random::<f64>() < 0.2 {
                pw[i] = 0.0;
            }
        }
        if qw.iter().all(|x| *x == 0.0) || pw.iter().all(|x| *x == 0.0) {
            continue;
        }
        let (q, p) = (Pmf::normalized(qw)?, Pmf::normalized(pw)?);
        let lb = divergence_var_lower_bound(&p, &q, &q0)?;
        if kl_divergence(&p, &q)? < lb - 1e-12 {
            bad += 1;
        }
    }
    Ok((bad == 0, format!("{bad} violations in 10000 triples")))
}

fn check_pinsker(c: &Ctx) -> Outcome {
    let mut rng = c.rng(5);
    let mut bad = 0;
    for _ in 0..10_000 {
        let d = rng.random_range(2..=8);
        let (p, q) = (sample::pmf(&mut rng, d), sample::pmf(&mut rng, d));
        let bound = (2.0 * std::f64::consts::LN_2 * kl_divergence(&p, &q)?).sqrt();
        if variational_distance(&p, &q)? > bound + 1e-12 {
            bad += 1;
        }
    }
    Ok((bad == 0, format!("{bad} violations in 10000 pairs")))
}

fn check_montecarlo(c: &Ctx) -> Outcome {
    let mut rng = c.rng(6);
    let mut bad = 0;
    let mut repro = true;
    for i in 0..20 {
        let k = rng.random_range(2..=3);
        let r = rng.random_range(k..=5);
        let n = rng.random_range(1..=5);
        let spec = sample::spec(&mut rng, r, k);
        let rho = 0.3 + 0.6 * rng.random::<f64>();
        let w = sample::qr_channel(&mut rng, &spec, rho);
        let p = sample::pmf(&mut rng, r);
        let est = sample::estimator(&mut rng, n, k, r);
        let g = GameInstance::new(&spec, rho, n, p, &w, est)?;
        let exact = exact_privacy(&g)?;
        let seed = c.opts.seed.wrapping_add(i);
        let mc = monte_carlo_privacy(&g, 100_000, seed)?;
        if (mc.mean - exact).abs() > 3.0 * mc.std_error {
            bad += 1;
        }
        if i == 0 {
            let again = monte_carlo_privacy(&g, 100_000, seed)?;
            repro = again.mean.to_bits() == mc.mean.to_bits() && again.std_error.to_bits() == mc.std_error.to_bits();
        }
    }
    Ok((bad == 0 && repro, format!("{bad} of 20 instances outside 3 standard errors; reproducible: {repro}")))
}

fn check_limits(_: &Ctx) -> Outcome {
    let lam = lambda_n(2, 2.0, 100.0);
    let spec = FunctionSpec::from_sizes(&[4, 2, 1])?;
    let schedule = default_smooth_schedule(2.0)?;
    let big = Lambda_n(&spec, 0.45, 7, &schedule)?;
    let theta = theta_n(&spec, 0.45, 7)?;
    let want = (1.0 + theta / (6.0 * std::f64::consts::E)).log2() - schedule.ratio(7.0);
    let theta_ok = (theta - (1.0 / 7.0 - 0.1) / 0.9).abs() <= 1e-12;
    let far_lam = lambda_n(2, 2.0, 1e5);
    let far_big = Lambda_n(&spec, 0.45, 100_000, &schedule)?;
    let ok = (lam - 0.999404).abs() <= 1e-6
        && theta_ok
        && (big - want).abs() <= 1e-12
        && far_big.abs() < 1e-3
        && far_lam > 1.0 - 1e-3;
    Ok((ok, format!("lambda_100 = {lam:.7}, Lambda_7 = {big:.9}, n=1e5: lambda {far_lam:.7}, Lambda {far_big:.3e}")))
}

fn check_ldp(c: &Ctx) -> Outcome {
    let cap_ok = (ldp_rho_cap(3f64.ln(), 2) - 0.75).abs() <= 1e-12;
    let mut rng = c.rng(7);
    let mut bad = 0;
    let mut tested = 0;
    while tested < 200 {
        let k = rng.random_range(2..=5);
        let eps = 0.1 + 3.0 * rng.random::<f64>();
        let spec = FunctionSpec::singletons(k)?;
        let raw = sample::diag_channel(&mut rng, k, 0.0);
        let t = rng.random::<f64>();
        let w = Channel::new(
            raw.rows().iter().map(|row| row.iter().map(|x| t * x + (1.0 - t) / k as f64).collect()).collect(),
        )?;
        if !satisfies_ldp(&w, eps) {
            continue;
        }
        tested += 1;
        let cap = ldp_rho_cap(eps, k);
        let rec = recoverability(&w, &spec);
        if rec > cap + 1e-12 || validate_rho_qr(&w, &spec, cap + 1e-9).is_ok() {
            bad += 1;
        }
    }
    let mut zero_bad = 0;
    let mut zero_count = 0;
    for sizes in [&[2usize, 2, 1][..], &[3, 2], &[2, 1, 1, 1, 1]] {
        let spec = FunctionSpec::from_sizes(sizes)?;
        let k = spec.k();
        let mut mechanisms = Vec::new();
        for l in 1..k {
            mechanisms.push(build_wl(&spec, l)?);
            let rho = 0.5 * (1.0 / l as f64 + 1.0 / (l + 1) as f64);
            mechanisms.push(build_block_mechanism(&spec, rho)?.lifted());
        }
        for m in mechanisms.iter().filter(|m| m.has_zero_entry()) {
            zero_count += 1;
            if [0.5, 1.0, 5.0, 20.0].iter().any(|&e| satisfies_ldp(m, e)) {
                zero_bad += 1;
            }
        }
    }
    Ok((
        cap_ok && bad == 0 && zero_bad == 0 && zero_count > 0,
        format!("cap(ln3,2) ok: {cap_ok}; {bad} of 200 LDP channels exceed the cap; {zero_bad} of {zero_count} zero-containing mechanisms pass an LDP test"),
    ))
}

pub fn run_suite(name: &str, opts: &VerifyOptions) -> Result<Check> {
    let c = Ctx { opts };
    let start = Instant::now();
    let outcome = match name {
        "omega" => check_omega(&c),
        "theorem1" => check_theorem1(&c),
        "minimax" => check_minimax(&c),
        "monotonicity" => check_monotonicity(&c),
        "converse" => check_converse(&c),
        "sandwich" => check_sandwich(&c),
        "iprojection" => check_iprojection(&c),
        "lemma4" => check_lemma4(&c),
        "lemma5" => check_lemma5(&c),
        "pinsker" => check_pinsker(&c),
        "montecarlo" => check_montecarlo(&c),
        "limits" => check_limits(&c),
        "ldp" => check_ldp(&c),
        other => return Err(Error::OutOfRange(format!("unknown suite {other:?}; known: {}", SUITES.join(", ")))),
    };
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    Ok(Check { name: name.to_string(), passed, detail, seconds: start.elapsed().as_secs_f64() })
}

pub fn run_battery(only: &[String], opts: &VerifyOptions) -> Result<Vec<Check>> {
    let names: Vec<&str> = if only.is_empty() { SUITES.to_vec() } else { only.iter().map(String::as_str).collect() };
    for n in &names {
        if !SUITES.contains(n) {
            return Err(Error::OutOfRange(format!("unknown suite {n:?}; known: {}", SUITES.join(", "))));
        }
    }
    names.into_iter().map(|n| run_suite(n, opts)).collect()
}

//! Worst-case privacy, converse and achievability bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::estimators::{
    invert_channel, reverse_iprojection, snapped_ceil, SmoothSchedule,
};
use crate::mechanisms::{k_prime, level_of_rho, Level};
use crate::simplex::{
    entropy_bits, kl_bits, ntype_count, push_forward, Channel, FunctionSpec, NType, NTypeIter,
    NeumaierSum, Pmf,
};

/// Types whose multinomial mass falls below this are skipped in the converse sum.
/// Each skipped term is at most `MASS_FLOOR * log2(n+k)`.
pub const MASS_FLOOR: f64 = 1e-40;
pub const MAX_TYPES: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Omega,
    Converse,
    Achievability,
    #[serde(rename = "lambda_n")]
    LambdaSmall,
    #[serde(rename = "Lambda_n")]
    LambdaCap,
}

impl BoundKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Omega => "omega",
            BoundKind::Converse => "converse",
            BoundKind::Achievability => "achievability",
            BoundKind::LambdaSmall => "lambda_n",
            BoundKind::LambdaCap => "Lambda_n",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundPoint {
    pub parameter: f64,
    pub kind: BoundKind,
    pub value: f64,
    pub valid: bool,
}

/// Worst-case privacy level: `log2 r` when `rho <= 1/k`, else `log2` of the
/// total size of the `l` largest atoms.
pub fn omega(spec: &FunctionSpec, rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::OutOfRange(format!("rho={rho} not in [0,1]")));
    }
    if rho == 0.0 {
        return Ok((spec.r() as f64).log2());
    }
    Ok(match level_of_rho(rho, spec.k())? {
        Level::Full => (spec.r() as f64).log2(),
        Level::Partial(l) => (spec.sizes()[..l].iter().sum::<usize>() as f64).log2(),
    })
}

/// Locally uniform pmf closest to `p` in divergence and the attained divergence.
pub fn optimal_locally_uniform_fit(p: &Pmf, spec: &FunctionSpec) -> Result<(Pmf, f64)> {
    let beta = push_forward(p, spec)?;
    let value = fit_over_partition(p, spec.atoms())?;
    Ok((beta, value))
}

/// Divergence from `p` to the closest pmf that is uniform on each block of `blocks`.
/// The blocks must partition the alphabet of `p`; a single block is allowed.
pub fn fit_over_partition(p: &Pmf, blocks: &[Vec<usize>]) -> Result<f64> {
    let covered: usize = blocks.iter().map(Vec::len).sum();
    if covered != p.dim() {
        return Err(Error::DimensionMismatch(covered, p.dim()));
    }
    let masses: Vec<f64> = blocks.iter().map(|b| b.iter().map(|&x| p[x]).sum()).collect();
    let spread: f64 = masses.iter().zip(blocks).map(|(m, b)| m * (b.len() as f64).log2()).sum();
    Ok((spread - (p.entropy() - entropy_bits(&masses))).max(0.0))
}

/// Case data for `1/k < rho <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Regime {
    pub k: usize,
    pub l: usize,
    pub l_prime: usize,
    pub k_prime: usize,
    /// `l <= floor(k/2)`
    pub low: bool,
}

pub fn regime(spec: &FunctionSpec, rho: f64) -> Result<Regime> {
    let k = spec.k();
    match level_of_rho(rho, k)? {
        Level::Full => Err(Error::OutOfRange(format!("rho={rho} must exceed 1/k={}", 1.0 / k as f64))),
        Level::Partial(l) => Ok(Regime { k, l, l_prime: k % l, k_prime: k_prime(k, l), low: l <= k / 2 }),
    }
}

pub fn lambda_n(k_prime: usize, zeta: f64, n: f64) -> f64 {
    let e = std::f64::consts::E;
    let expo = 4.0 * (k_prime as f64 - 1.0) * zeta.sqrt() / (5.0 * e.sqrt());
    1.0 - 3.0 * expo.exp() / n.powf(zeta)
}

pub fn mu_n(spec: &FunctionSpec, rho: f64, n: u64) -> Result<f64> {
    let g = regime(spec, rho)?;
    if !g.low {
        return Err(Error::WrongCase(format!("mu_n needs l <= floor(k/2), got l={}", g.l)));
    }
    let l = g.l as f64;
    let a = l * (1.0 - l * rho).max(0.0) / (g.k - g.l_prime - g.l) as f64;
    let n = n as f64;
    let top = (snapped_ceil(n * a) / n).min(l * rho);
    Ok(((top - a) / (l * rho - a)).clamp(0.0, 1.0))
}

pub fn theta_n(spec: &FunctionSpec, rho: f64, n: u64) -> Result<f64> {
    let g = regime(spec, rho)?;
    if g.low {
        return Err(Error::WrongCase(format!("theta_n needs l > floor(k/2), got l={}", g.l)));
    }
    let l = g.l as f64;
    let rest = (1.0 - l * rho).max(0.0);
    let n = n as f64;
    Ok(((snapped_ceil(n * rest) / n - rest) / (l * rho)).clamp(0.0, 1.0))
}

#[allow(non_snake_case)]
pub fn Lambda_n(spec: &FunctionSpec, rho: f64, n: u64, schedule: &SmoothSchedule) -> Result<f64> {
    let g = regime(spec, rho)?;
    let sizes = spec.sizes();
    let s0 = sizes[..g.l].iter().sum::<usize>() as f64;
    let penalty = schedule.ratio(n as f64);
    let e = std::f64::consts::E;
    if g.low {
        let s1 = sizes[g.l..g.k - g.l_prime].iter().sum::<usize>() as f64;
        let mu = mu_n(spec, rho, n)?;
        Ok(if s1 <= s0 {
            (1.0 + s1 / (e * s0) * mu).log2() - penalty
        } else {
            (s1 / s0).log2() * mu - penalty
        })
    } else {
        let theta = theta_n(spec, rho, n)?;
        Ok((1.0 + sizes[g.l] as f64 / (e * s0) * theta).log2() - penalty)
    }
}

pub fn achievability_lower_bound(spec: &FunctionSpec, rho: f64, n: u64, schedule: &SmoothSchedule) -> Result<f64> {
    let g = regime(spec, rho)?;
    let w = omega(spec, rho)?;
    Ok((w + Lambda_n(spec, rho, n, schedule)?) * lambda_n(g.k_prime, schedule.zeta, n as f64))
}

pub const SCAN_LIMIT: u64 = 10_000_000;

/// Whether `n` satisfies every large-n condition behind the achievability bound.
pub fn validity_predicates(k_prime: usize, zeta: f64, n: u64) -> [bool; 4] {
    let nf = n as f64;
    let kp = k_prime as f64;
    let ln_n = zeta * std::f64::consts::LN_2 * nf.log2();
    [
        n >= 2 * k_prime as u64,
        5.0 * (nf * ln_n).sqrt() > 2.0 * (kp - 1.0),
        25.0 * ln_n + 4.0 * (kp - 1.0).powi(2) / nf - 20.0 * (kp - 1.0) * (ln_n / nf).sqrt() >= 20.0 * kp,
        lambda_n(k_prime, zeta, nf) >= 0.0,
    ]
}

pub fn min_valid_n_for(k_prime: usize, zeta: f64) -> Result<u64> {
    (1..=SCAN_LIMIT)
        .find(|&n| validity_predicates(k_prime, zeta, n).iter().all(|&b| b))
        .ok_or(Error::ScanExhausted(SCAN_LIMIT))
}

pub fn min_valid_n(spec: &FunctionSpec, rho: f64, zeta: f64) -> Result<u64> {
    if !(zeta > 1.0) {
        return Err(Error::OutOfRange(format!("zeta={zeta} must exceed 1")));
    }
    min_valid_n_for(regime(spec, rho)?.k_prime, zeta)
}

/// Expected divergence `sum_Q alpha^n(T_Q) D(beta || kappa_n(Q))` for a fixed `n` and `k`,
/// caching `kappa_n` per type while the channel stays fixed.
pub struct ConverseSum {
    n: u32,
    k: usize,
    types: Vec<NType>,
    lnfact: Vec<f64>,
    kappa: Vec<Option<Vec<f64>>>,
    inv: Option<(Channel, nalgebra::DMatrix<f64>)>,
}

impl ConverseSum {
    pub fn new(n: u32, k: usize) -> Result<Self> {
        let count = ntype_count(n, k);
        if count > MAX_TYPES {
            return Err(Error::TypeSpaceTooLarge(count));
        }
        let types: Vec<NType> = NTypeIter::new(n, k).collect();
        let lnfact = (0..=n as u64).map(ln_factorial).collect();
        let kappa = vec![None; types.len()];
        Ok(Self { n, k, types, lnfact, kappa, inv: None })
    }

    fn set_channel(&mut self, v: &Channel) -> Result<()> {
        if self.inv.as_ref().map_or(true, |(c, _)| c != v) {
            let inv = invert_channel(v)?;
            self.inv = Some((v.clone(), inv));
            self.kappa.iter_mut().for_each(|e| *e = None);
        }
        Ok(())
    }

    fn kappa_at(&mut self, i: usize) -> Result<&[f64]> {
        if self.kappa[i].is_none() {
            let (v, inv) = self.inv.as_ref().expect("channel set");
            let k = self.k;
            let n = self.n as f64;
            let q = self.types[i].to_pmf();
            let direct: Vec<f64> = (0..k).map(|j| (0..k).map(|c| q[c] * inv[(c, j)]).sum()).collect();
            let beta = if direct.iter().all(|b| *b >= -1e-14) {
                direct
            } else {
                reverse_iprojection(&q, v)?.beta.weights().to_vec()
            };
            let w: Vec<f64> = beta.iter().map(|b| (n * b.max(0.0) + 1.0) / (n + k as f64)).collect();
            let s: f64 = w.iter().sum();
            self.kappa[i] = Some(w.into_iter().map(|x| x / s).collect());
        }
        Ok(self.kappa[i].as_deref().unwrap())
    }

    /// `alpha = beta V`; `beta` is the point whose divergence is measured.
    pub fn evaluate(&mut self, v: &Channel, beta: &[f64]) -> Result<f64> {
        self.set_channel(v)?;
        let alpha = v.apply_slice(beta);
        let ln_alpha: Vec<f64> = alpha.iter().map(|a| if *a > 0.0 { a.ln() } else { f64::NEG_INFINITY }).collect();
        let mut total = NeumaierSum::new();
        for i in 0..self.types.len() {
            let counts = self.types[i].counts();
            let mut ln = self.lnfact[self.n as usize];
            let mut zero = false;
            for (c, la) in counts.iter().zip(&ln_alpha) {
                if *c > 0 {
                    if la.is_infinite() {
                        zero = true;
                        break;
                    }
                    ln += *c as f64 * la - self.lnfact[*c as usize];
                }
            }
            if zero {
                continue;
            }
            let mass = ln.exp();
            if mass < MASS_FLOOR {
                continue;
            }
            let kappa = self.kappa_at(i)?;
            total.add(mass * kl_bits(beta, kappa));
        }
        Ok(total.total())
    }
}

/// Inner converse sum at a response pmf `alpha` in the image of `v`.
pub fn gamma_n_inner(alpha: &Pmf, v: &Channel, n: u32) -> Result<f64> {
    let k = v.n_in();
    if alpha.dim() != k || v.n_out() != k {
        return Err(Error::DimensionMismatch(alpha.dim(), k));
    }
    let proj = reverse_iprojection(alpha, v)?;
    let dist = kl_bits(alpha.weights(), proj.q_tilde.weights());
    if dist > 1e-9 {
        return Err(Error::OutsideImage(dist));
    }
    ConverseSum::new(n, k)?.evaluate(v, proj.beta.weights())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchConfig {
    pub budget: usize,
    pub seed: u64,
    pub starts: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { budget: 10_000, seed: 0, starts: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaSup {
    pub value: f64,
    pub evaluations: usize,
    pub v: Channel,
    pub beta: Pmf,
    pub budget: usize,
    pub seed: u64,
}

struct Decoder {
    k: usize,
    rho: f64,
}

impl Decoder {
    fn dims(&self) -> usize {
        let off = if self.k > 2 { self.k * (self.k - 1) } else { 0 };
        2 * self.k + off
    }

    fn decode(&self, theta: &[f64]) -> (Channel, Vec<f64>) {
        let k = self.k;
        let off_len = if k > 2 { k - 1 } else { 0 };
        let mut rows = Vec::with_capacity(k);
        for j in 0..k {
            let diag = (self.rho + (1.0 - self.rho) * theta[j]).min(1.0);
            let rest = 1.0 - diag;
            let w: Vec<f64> = if off_len == 0 {
                vec![1.0]
            } else {
                theta[k + j * off_len..k + (j + 1) * off_len].to_vec()
            };
            let ws: f64 = w.iter().sum();
            let mut row = Vec::with_capacity(k);
            let mut it = w.iter();
            for z in 0..k {
                if z == j {
                    row.push(diag);
                } else {
                    let wz = *it.next().unwrap();
                    row.push(if ws > 0.0 { rest * wz / ws } else { rest / (k - 1) as f64 });
                }
            }
            let s: f64 = row.iter().sum();
            rows.push(row.into_iter().map(|x| x / s).collect());
        }
        let b = &theta[k + k * off_len..];
        let bs: f64 = b.iter().sum();
        let beta = if bs > 0.0 { b.iter().map(|x| x / bs).collect() } else { vec![1.0 / k as f64; k] };
        (Channel::new(rows).expect("decoded rows are stochastic"), beta)
    }
}

struct StartResult {
    value: f64,
    evaluations: usize,
    theta: Vec<f64>,
}

fn pattern_search(dec: &Decoder, sum: &mut ConverseSum, mut theta: Vec<f64>, budget: usize) -> StartResult {
    let mut eval = |t: &[f64], count: &mut usize| -> f64 {
        *count += 1;
        let (v, beta) = dec.decode(t);
        sum.evaluate(&v, &beta).unwrap_or(f64::NEG_INFINITY)
    };
    let mut count = 0;
    let mut best = eval(&theta, &mut count);
    let mut step = 0.25;
    while step >= 1e-4 && count < budget {
        let mut improved = false;
        'coords: for i in 0..theta.len() {
            for dir in [1.0, -1.0] {
                if count >= budget {
                    break 'coords;
                }
                let moved = (theta[i] + dir * step).clamp(0.0, 1.0);
                if moved == theta[i] {
                    continue;
                }
                let mut cand = theta.clone();
                cand[i] = moved;
                let f = eval(&cand, &mut count);
                if f > best {
                    best = f;
                    theta = cand;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    StartResult { value: best, evaluations: count, theta }
}

/// Search-based lower estimate of the sup of the converse sum over channels with
/// diagonal at least `rho` and all `beta` in the simplex.
pub fn gamma_n_sup(k: usize, rho: f64, n: u32, cfg: &SearchConfig) -> Result<GammaSup> {
    if !(rho > 0.5 && rho <= 1.0) {
        return Err(Error::OutOfRange(format!("converse search needs 0.5 < rho <= 1, got {rho}")));
    }
    if cfg.budget == 0 || cfg.starts == 0 {
        return Err(Error::OutOfRange("search budget and starts must be positive".into()));
    }
    ConverseSum::new(n, k)?;
    let dec = Decoder { k, rho };
    let starts = cfg.starts.min(cfg.budget);
    let per = cfg.budget / starts;
    let results: Vec<StartResult> = (0..starts)
        .into_par_iter()
        .map(|s| {
            let mut sum = ConverseSum::new(n, k).expect("type space checked");
            let theta: Vec<f64> = if s == 0 {
                let mut t = vec![0.5; dec.dims()];
                t[..k].iter_mut().for_each(|x| *x = 0.0);
                t
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(s as u64);
                (0..dec.dims()).map(|_| rng.random::<f64>()).collect()
            };
            let budget = if s == 0 { cfg.budget - per * (starts - 1) } else { per };
            pattern_search(&dec, &mut sum, theta, budget)
        })
        .collect();
    let evaluations = results.iter().map(|r| r.evaluations).sum();
    let best = results
        .into_iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("at least one start");
    let (v, beta) = dec.decode(&best.theta);
    Ok(GammaSup {
        value: best.value,
        evaluations,
        v,
        beta: Pmf::normalized(beta)?,
        budget: cfg.budget,
        seed: cfg.seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConverseBound {
    pub value: f64,
    pub omega: f64,
    pub gamma: GammaSup,
}

pub fn converse_upper_bound(spec: &FunctionSpec, rho: f64, n: u32, cfg: &SearchConfig) -> Result<ConverseBound> {
    if !(rho > 0.5) {
        return Err(Error::OutOfRange(format!("no converse bound for rho={rho} <= 0.5")));
    }
    let w = omega(spec, rho)?;
    let gamma = gamma_n_sup(spec.k(), rho, n, cfg)?;
    Ok(ConverseBound { value: w + gamma.value, omega: w, gamma })
}

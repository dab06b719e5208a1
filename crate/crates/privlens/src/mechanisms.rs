//! Recoverable query-response channels and their constructions.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::simplex::{compensated_sum, push_forward, Channel, FunctionSpec, Pmf};

/// Slack for `W(f(x)|x) >= rho` and for breakpoint membership.
pub const RHO_TOL: f64 = 1e-12;

/// A channel `X -> Z` that outputs `f(x)` with probability at least `rho`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoQR {
    pub channel: Channel,
    pub rho: f64,
    #[serde(skip)]
    pub spec: FunctionSpec,
}

pub fn validate_rho_qr(channel: &Channel, spec: &FunctionSpec, rho: f64) -> Result<RhoQR> {
    if channel.n_in() != spec.r() || channel.n_out() != spec.k() {
        return Err(Error::DimensionMismatch(channel.n_in() * channel.n_out(), spec.r() * spec.k()));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::OutOfRange(format!("rho={rho}")));
    }
    for x in 0..spec.r() {
        let achieved = channel.get(x, spec.f(x));
        if achieved < rho - RHO_TOL {
            return Err(Error::RecoverabilityViolation { x, achieved, required: rho });
        }
    }
    Ok(RhoQR { channel: channel.clone(), rho, spec: spec.clone() })
}

/// `l` with `1/(l+1) < rho <= 1/l`, or `Full` when `rho <= 1/k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Level {
    Partial(usize),
    Full,
}

impl Level {
    /// Number of merged outputs: `l`, or `k` in the full regime.
    pub fn size(self, k: usize) -> usize {
        match self {
            Level::Partial(l) => l,
            Level::Full => k,
        }
    }
}

pub fn level_of_rho(rho: f64, k: usize) -> Result<Level> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::OutOfRange(format!("rho={rho} not in (0,1]")));
    }
    if rho <= 1.0 / k as f64 + RHO_TOL {
        return Ok(Level::Full);
    }
    let mut l = ((1.0 / rho).floor() as usize).max(1);
    while l > 1 && rho > 1.0 / l as f64 + RHO_TOL {
        l -= 1;
    }
    while rho <= 1.0 / (l + 1) as f64 + RHO_TOL {
        l += 1;
    }
    Ok(Level::Partial(l))
}

/// `x` in the first `l` atoms maps uniformly onto outputs `0..l`; later atoms map to `f(x)`.
pub fn build_wl(spec: &FunctionSpec, l: usize) -> Result<Channel> {
    let k = spec.k();
    if l == 0 || l > k {
        return Err(Error::OutOfRange(format!("l={l} not in [1,{k}]")));
    }
    let rows = (0..spec.r())
        .map(|x| {
            let j = spec.f(x);
            let mut row = vec![0.0; k];
            if j < l {
                row[..l].iter_mut().for_each(|v| *v = 1.0 / l as f64);
            } else {
                row[j] = 1.0;
            }
            row
        })
        .collect();
    Channel::new(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Construction {
    V1,
    V2,
    General,
}

/// Channel whose rows agree within each atom, summarized by the `k x k` matrix `v`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocallyIdenticalQR {
    pub v: Channel,
    pub rho: f64,
    pub level: usize,
    pub construction: Construction,
    #[serde(skip)]
    pub spec: FunctionSpec,
}

impl LocallyIdenticalQR {
    pub fn new(v: Channel, rho: f64, spec: &FunctionSpec) -> Result<Self> {
        let k = spec.k();
        if v.n_in() != k || v.n_out() != k {
            return Err(Error::DimensionMismatch(v.n_in(), k));
        }
        for j in 0..k {
            if v.get(j, j) < rho - RHO_TOL {
                return Err(Error::RecoverabilityViolation { x: spec.atom(j)[0], achieved: v.get(j, j), required: rho });
            }
        }
        Ok(Self { v, rho, level: 0, construction: Construction::General, spec: spec.clone() })
    }

    /// The `r x k` channel with row `x` equal to `v[f(x)]`.
    pub fn lifted(&self) -> Channel {
        let rows = (0..self.spec.r()).map(|x| self.v.row(self.spec.f(x)).to_vec()).collect();
        Channel::new(rows).expect("rows of a valid channel")
    }
}

/// `floor(k/l) + k - floor(k/l) l`.
pub fn k_prime(k: usize, l: usize) -> usize {
    k / l + k % l
}

/// Column groups merging consecutive blocks of `l` outputs; the last `k mod l` stay single.
pub fn merge_groups(k: usize, l: usize) -> Vec<Vec<usize>> {
    let blocks = k / l;
    let mut g: Vec<Vec<usize>> = (0..blocks).map(|b| (b * l..(b + 1) * l).collect()).collect();
    g.extend((blocks * l..k).map(|z| vec![z]));
    g
}

fn one_minus(l: usize, rho: f64) -> f64 {
    (1.0 - l as f64 * rho).max(0.0)
}

/// Block matrix for `l <= floor(k/2)`: all-`rho` diagonal blocks of width `l`,
/// the rest of the top-left block filled evenly, identity on the last `k mod l`.
pub fn v1_matrix(k: usize, l: usize, rho: f64) -> Result<Channel> {
    if l == 0 || 2 * l > k {
        return Err(Error::WrongCase(format!("V1 needs 1 <= l <= floor(k/2), got l={l}, k={k}")));
    }
    let top = (k / l) * l;
    let off = one_minus(l, rho) / (top - l) as f64;
    let rows = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| match (i < top, j < top) {
                    (true, true) if i / l == j / l => rho,
                    (true, true) => off,
                    (false, false) if i == j => 1.0,
                    _ => 0.0,
                })
                .collect()
        })
        .collect();
    Channel::new(rows)
}

/// Matrix with an all-`rho` top-left `l x l` block, `1 - l rho` in column `l` of
/// the first `l` rows and identity below. Defined for `1 <= l < k`.
pub fn v2_matrix(k: usize, l: usize, rho: f64) -> Result<Channel> {
    if l == 0 || l >= k {
        return Err(Error::WrongCase(format!("V2 needs 1 <= l < k, got l={l}, k={k}")));
    }
    let rest = one_minus(l, rho);
    let rows = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| {
                    if i < l {
                        if j < l {
                            rho
                        } else if j == l {
                            rest
                        } else {
                            0.0
                        }
                    } else if i == j {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Channel::new(rows)
}

fn partial_level(spec: &FunctionSpec, rho: f64) -> Result<usize> {
    match level_of_rho(rho, spec.k())? {
        Level::Partial(l) => Ok(l),
        Level::Full => Err(Error::WrongCase(format!("rho={rho} <= 1/k has no block construction"))),
    }
}

pub fn build_v1(spec: &FunctionSpec, rho: f64) -> Result<LocallyIdenticalQR> {
    let l = partial_level(spec, rho)?;
    let mut q = LocallyIdenticalQR::new(v1_matrix(spec.k(), l, rho)?, rho, spec)?;
    q.level = l;
    q.construction = Construction::V1;
    Ok(q)
}

pub fn build_v2(spec: &FunctionSpec, rho: f64) -> Result<LocallyIdenticalQR> {
    let l = partial_level(spec, rho)?;
    if l <= spec.k() / 2 {
        return Err(Error::WrongCase(format!("V2 needs l > floor(k/2), got l={l}, k={}", spec.k())));
    }
    let mut q = LocallyIdenticalQR::new(v2_matrix(spec.k(), l, rho)?, rho, spec)?;
    q.level = l;
    q.construction = Construction::V2;
    Ok(q)
}

/// V1 when `l <= floor(k/2)`, otherwise V2.
pub fn build_block_mechanism(spec: &FunctionSpec, rho: f64) -> Result<LocallyIdenticalQR> {
    let l = partial_level(spec, rho)?;
    if l <= spec.k() / 2 {
        build_v1(spec, rho)
    } else {
        build_v2(spec, rho)
    }
}

fn merge_prime(q: &LocallyIdenticalQR, want: Construction) -> Result<Channel> {
    if q.construction != want {
        return Err(Error::WrongCase(format!("expected a {want:?} construction, got {:?}", q.construction)));
    }
    q.v.merge_columns(&merge_groups(q.spec.k(), q.level))
}

pub fn merge_v1_prime(v1: &LocallyIdenticalQR) -> Result<Channel> {
    merge_prime(v1, Construction::V1)
}

pub fn merge_v2_prime(v2: &LocallyIdenticalQR) -> Result<Channel> {
    merge_prime(v2, Construction::V2)
}

/// Merged function `f'` for `rho` in the partial regime.
pub fn merged_spec(spec: &FunctionSpec, rho: f64) -> Result<FunctionSpec> {
    let l = partial_level(spec, rho)?;
    spec.merge(&merge_groups(spec.k(), l))
}

/// One symbol per atom carrying that atom's mass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsePmf {
    pub support: Vec<usize>,
    pub masses: Pmf,
}

impl SparsePmf {
    pub fn expand(&self, r: usize) -> Pmf {
        let mut w = vec![0.0; r];
        for (j, &x) in self.support.iter().enumerate() {
            w[x] = self.masses[j];
        }
        Pmf::new(w).expect("masses form a pmf")
    }
}

/// Sparse pmf plus locally identical channel giving the same output pmf as `(p, w)`.
///
/// Within each atom the retained symbol is the most probable one (lowest index on ties).
pub fn reduce_to_sparse_locally_identical(p: &Pmf, w: &RhoQR) -> Result<(SparsePmf, LocallyIdenticalQR)> {
    let spec = &w.spec;
    let k = spec.k();
    let masses = push_forward(p, spec)?;
    let support = spec
        .atoms()
        .iter()
        .map(|a| *a.iter().reduce(|best, x| if p[*x] > p[*best] { x } else { best }).unwrap())
        .collect();
    let rows = (0..k)
        .map(|j| {
            let mass = masses[j];
            if mass > 0.0 {
                (0..k)
                    .map(|z| compensated_sum(spec.atom(j).iter().map(|&x| p[x] * w.channel.get(x, z))) / mass)
                    .collect()
            } else {
                let off = (1.0 - w.rho) / (k - 1) as f64;
                (0..k).map(|z| if z == j { w.rho } else { off }).collect()
            }
        })
        .collect::<Vec<Vec<f64>>>();
    let v = Channel::new(rows)?;
    Ok((SparsePmf { support, masses }, LocallyIdenticalQR::new(v, w.rho, spec)?))
}

/// Largest `rho` compatible with epsilon-LDP: `1 / (1 + (k-1) e^{-eps})`.
pub fn ldp_rho_cap(epsilon: f64, k: usize) -> f64 {
    1.0 / (1.0 + (k as f64 - 1.0) * (-epsilon).exp())
}

/// `max_z max_{x,x'} W(z|x')/W(z|x)`; infinite when a column mixes zero and nonzero entries.
pub fn ldp_max_ratio(w: &Channel) -> f64 {
    let mut worst: f64 = 1.0;
    for z in 0..w.n_out() {
        let col = (0..w.n_in()).map(|x| w.get(x, z));
        let (lo, hi) = col.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if hi == 0.0 {
            continue;
        }
        if lo == 0.0 {
            return f64::INFINITY;
        }
        worst = worst.max(hi / lo);
    }
    worst
}

pub fn satisfies_ldp(w: &Channel, epsilon: f64) -> bool {
    ldp_max_ratio(w) <= epsilon.exp() * (1.0 + 1e-12)
}

/// Largest `rho` for which `w` is a rho-QR: `min_x W(f(x)|x)`.
pub fn recoverability(w: &Channel, spec: &FunctionSpec) -> f64 {
    (0..spec.r()).map(|x| w.get(x, spec.f(x))).fold(f64::INFINITY, f64::min)
}

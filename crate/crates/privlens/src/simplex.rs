//! Probability simplex primitives: pmfs, channels, function specs, n-types,
//! divergences and the two divergence inequalities used by the bounds.
//!
//! All logarithms are base 2. `0 log 0 = 0`.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};

/// Tolerance on pmf normalization and channel row sums.
pub const PMF_TOL: f64 = 1e-12;

/// Running sum with Neumaier compensation.
#[derive(Debug, Default, Clone, Copy)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        if !x.is_finite() || !self.sum.is_finite() {
            self.sum += x;
            return;
        }
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        if self.sum.is_finite() {
            self.sum + self.comp
        } else {
            self.sum
        }
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = NeumaierSum::new();
    for x in it {
        s.add(x);
    }
    s.total()
}

/// A probability mass function on `{0, ..., dim-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Pmf {
    weights: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Pmf {
    type Error = Error;
    fn try_from(w: Vec<f64>) -> Result<Self> {
        Pmf::new(w)
    }
}

impl From<Pmf> for Vec<f64> {
    fn from(p: Pmf) -> Self {
        p.weights
    }
}

impl Pmf {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidPmf("empty weight vector".into()));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidPmf(format!("weight {i} is {w}")));
        }
        let s = compensated_sum(weights.iter().copied());
        if (s - 1.0).abs() > PMF_TOL {
            return Err(Error::InvalidPmf(format!("weights sum to {s}")));
        }
        Ok(Self { weights })
    }

    /// Scales nonnegative weights to sum to one.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidPmf("negative or non-finite weight".into()));
        }
        let s = compensated_sum(weights.iter().copied());
        if s <= 0.0 {
            return Err(Error::InvalidPmf("weights sum to zero".into()));
        }
        Self::new(weights.into_iter().map(|w| w / s).collect())
    }

    pub fn uniform(dim: usize) -> Self {
        Self { weights: vec![1.0 / dim as f64; dim] }
    }

    pub fn point(dim: usize, i: usize) -> Self {
        let mut weights = vec![0.0; dim];
        weights[i] = 1.0;
        Self { weights }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.weights[i] > 0.0).collect()
    }

    pub fn min_nonzero(&self) -> f64 {
        self.weights.iter().copied().filter(|w| *w > 0.0).fold(f64::INFINITY, f64::min)
    }

    pub fn entropy(&self) -> f64 {
        entropy_bits(&self.weights)
    }
}

impl std::ops::Index<usize> for Pmf {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.weights[i]
    }
}

/// Row-stochastic matrix, `rows[x][z] = W(z|x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelRepr", into = "ChannelRepr")]
pub struct Channel {
    rows: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ChannelRepr {
    rows: Vec<Vec<f64>>,
}

impl TryFrom<ChannelRepr> for Channel {
    type Error = Error;
    fn try_from(r: ChannelRepr) -> Result<Self> {
        Channel::new(r.rows)
    }
}

impl From<Channel> for ChannelRepr {
    fn from(c: Channel) -> Self {
        ChannelRepr { rows: c.rows }
    }
}

impl Channel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_out = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || n_out == 0 {
            return Err(Error::InvalidChannel("empty matrix".into()));
        }
        for (x, row) in rows.iter().enumerate() {
            if row.len() != n_out {
                return Err(Error::InvalidChannel(format!("row {x} has {} entries, expected {n_out}", row.len())));
            }
            if row.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidChannel(format!("row {x} has a negative or non-finite entry")));
            }
            let s = compensated_sum(row.iter().copied());
            if (s - 1.0).abs() > PMF_TOL {
                return Err(Error::InvalidChannel(format!("row {x} sums to {s}")));
            }
        }
        Ok(Self { rows })
    }

    pub fn identity(k: usize) -> Self {
        let rows = (0..k).map(|i| Pmf::point(k, i).weights).collect();
        Self { rows }
    }

    pub fn uniform(n_in: usize, n_out: usize) -> Self {
        Self { rows: vec![vec![1.0 / n_out as f64; n_out]; n_in] }
    }

    pub fn n_in(&self) -> usize {
        self.rows.len()
    }

    pub fn n_out(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x]
    }

    pub fn get(&self, x: usize, z: usize) -> f64 {
        self.rows[x][z]
    }

    /// Output pmf `p W`.
    pub fn apply(&self, p: &Pmf) -> Result<Pmf> {
        if p.dim() != self.n_in() {
            return Err(Error::DimensionMismatch(p.dim(), self.n_in()));
        }
        Ok(Pmf { weights: self.apply_slice(p.weights()) })
    }

    pub fn apply_slice(&self, p: &[f64]) -> Vec<f64> {
        (0..self.n_out())
            .map(|z| compensated_sum(p.iter().zip(&self.rows).map(|(px, row)| px * row[z])))
            .collect()
    }

    /// Sums the columns of each group into one output symbol.
    pub fn merge_columns(&self, groups: &[Vec<usize>]) -> Result<Channel> {
        let mut seen = BTreeSet::new();
        for g in groups {
            for &z in g {
                if z >= self.n_out() || !seen.insert(z) {
                    return Err(Error::InvalidChannel(format!("bad column group containing {z}")));
                }
            }
        }
        if seen.len() != self.n_out() {
            return Err(Error::InvalidChannel("column groups do not cover the output alphabet".into()));
        }
        let rows = self
            .rows
            .iter()
            .map(|row| groups.iter().map(|g| compensated_sum(g.iter().map(|&z| row[z]))).collect())
            .collect();
        Channel::new(rows)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_in(), self.n_out(), |i, j| self.rows[i][j])
    }

    pub fn has_zero_entry(&self) -> bool {
        self.rows.iter().flatten().any(|v| *v == 0.0)
    }
}

/// Partition of `{0, ..., r-1}` into the preimages `f^{-1}(0), ..., f^{-1}(k-1)`.
///
/// Atoms are stored sorted by decreasing size (stable on ties); `order[j]` is
/// the position of sorted atom `j` in the user's original list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub struct FunctionSpec {
    r: usize,
    atoms: Vec<Vec<usize>>,
    order: Vec<usize>,
    label: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    r: usize,
    atoms: Vec<Vec<usize>>,
}

impl TryFrom<SpecRepr> for FunctionSpec {
    type Error = Error;
    fn try_from(s: SpecRepr) -> Result<Self> {
        FunctionSpec::new(s.r, s.atoms)
    }
}

impl From<FunctionSpec> for SpecRepr {
    fn from(s: FunctionSpec) -> Self {
        let atoms = s.original_atoms();
        SpecRepr { r: s.r, atoms }
    }
}

impl FunctionSpec {
    pub fn new(r: usize, atoms: Vec<Vec<usize>>) -> Result<Self> {
        let k = atoms.len();
        if k < 2 || k > r {
            return Err(Error::InvalidSpec(format!("need 2 <= k <= r, got k={k}, r={r}")));
        }
        let mut label = vec![usize::MAX; r];
        for (j, atom) in atoms.iter().enumerate() {
            if atom.is_empty() {
                return Err(Error::InvalidSpec(format!("atom {j} is empty")));
            }
            for &x in atom {
                if x >= r {
                    return Err(Error::InvalidSpec(format!("symbol {x} outside 0..{r}")));
                }
                if label[x] != usize::MAX {
                    return Err(Error::InvalidSpec(format!("symbol {x} appears twice")));
                }
                label[x] = j;
            }
        }
        if let Some(x) = label.iter().position(|&j| j == usize::MAX) {
            return Err(Error::InvalidSpec(format!("symbol {x} not covered")));
        }
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| atoms[b].len().cmp(&atoms[a].len()));
        let mut rank = vec![0; k];
        for (j, &o) in order.iter().enumerate() {
            rank[o] = j;
        }
        let sorted: Vec<Vec<usize>> = order
            .iter()
            .map(|&o| {
                let mut a = atoms[o].clone();
                a.sort_unstable();
                a
            })
            .collect();
        let label = label.into_iter().map(|j| rank[j]).collect();
        Ok(Self { r, atoms: sorted, order, label })
    }

    /// Contiguous atoms with the given sizes: `(3,2)` gives `{0,1,2},{3,4}`.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let mut next = 0;
        let atoms = sizes
            .iter()
            .map(|&s| {
                let a = (next..next + s).collect();
                next += s;
                a
            })
            .collect();
        Self::new(next, atoms)
    }

    /// Invertible `f`: every atom a singleton.
    pub fn singletons(r: usize) -> Result<Self> {
        Self::new(r, (0..r).map(|x| vec![x]).collect())
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn k(&self) -> usize {
        self.atoms.len()
    }

    pub fn atoms(&self) -> &[Vec<usize>] {
        &self.atoms
    }

    pub fn atom(&self, j: usize) -> &[usize] {
        &self.atoms[j]
    }

    pub fn size(&self, j: usize) -> usize {
        self.atoms[j].len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.atoms.iter().map(Vec::len).collect()
    }

    /// Sorted atom index of symbol `x`.
    pub fn f(&self, x: usize) -> usize {
        self.label[x]
    }

    /// `order()[j]` is the user-facing index of sorted atom `j`.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn original_atoms(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (j, &o) in self.order.iter().enumerate() {
            out[o] = self.atoms[j].clone();
        }
        out
    }

    pub fn is_invertible(&self) -> bool {
        self.r == self.k()
    }

    /// Spec of `f'` obtained by merging groups of sorted atoms.
    pub fn merge(&self, groups: &[Vec<usize>]) -> Result<FunctionSpec> {
        let atoms = groups
            .iter()
            .map(|g| g.iter().flat_map(|&j| self.atoms[j].iter().copied()).collect())
            .collect();
        FunctionSpec::new(self.r, atoms)
    }
}

/// Empirical type of a length-n sequence over an alphabet of size `counts.len()`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NType {
    counts: Vec<u32>,
}

impl NType {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.is_empty() || counts.iter().all(|&c| c == 0) {
            return Err(Error::OutOfRange("type must have n >= 1".into()));
        }
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn n(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn to_pmf(&self) -> Pmf {
        let n = self.n() as f64;
        Pmf { weights: self.counts.iter().map(|&c| c as f64 / n).collect() }
    }
}

/// Number of n-types over k symbols, `C(n+k-1, k-1)`.
pub fn ntype_count(n: u32, k: usize) -> u128 {
    let mut c: u128 = 1;
    for i in 1..k as u128 {
        c = c * (n as u128 + i) / i;
    }
    c
}

/// Iterates n-types in descending lexicographic order, starting at `(n,0,...,0)`.
pub struct NTypeIter {
    next: Option<Vec<u32>>,
}

impl NTypeIter {
    pub fn new(n: u32, k: usize) -> Self {
        let mut first = vec![0; k];
        first[0] = n;
        Self { next: Some(first) }
    }
}

impl Iterator for NTypeIter {
    type Item = NType;

    fn next(&mut self) -> Option<NType> {
        let cur = self.next.take()?;
        let k = cur.len();
        if let Some(i) = (0..k.saturating_sub(1)).rev().find(|&i| cur[i] > 0) {
            let mut nxt = cur.clone();
            let tail: u32 = nxt[i + 1..].iter().sum();
            nxt[i] -= 1;
            for c in &mut nxt[i + 1..] {
                *c = 0;
            }
            nxt[i + 1] = tail + 1;
            self.next = Some(nxt);
        }
        Some(NType { counts: cur })
    }
}

pub fn enumerate_ntypes(n: u32, k: usize) -> Vec<NType> {
    NTypeIter::new(n, k).collect()
}

/// Probability that an i.i.d. `alpha` sequence has counts `counts`.
pub fn multinomial_mass(alpha: &[f64], counts: &[u32]) -> f64 {
    let n: u64 = counts.iter().map(|&c| c as u64).sum();
    let mut ln = ln_factorial(n);
    for (&a, &c) in alpha.iter().zip(counts) {
        if c == 0 {
            continue;
        }
        if a <= 0.0 {
            return 0.0;
        }
        ln += c as f64 * a.ln() - ln_factorial(c as u64);
    }
    ln.exp()
}

pub fn ntype_mass(alpha: &Pmf, t: &NType) -> Result<f64> {
    if alpha.dim() != t.dim() {
        return Err(Error::DimensionMismatch(alpha.dim(), t.dim()));
    }
    Ok(multinomial_mass(alpha.weights(), t.counts()))
}

/// `sum p log2(p/q)` on raw slices; `+inf` when `supp p` is not inside `supp q`.
pub fn kl_bits(p: &[f64], q: &[f64]) -> f64 {
    let mut s = NeumaierSum::new();
    for (&a, &b) in p.iter().zip(q) {
        if a > 0.0 {
            if b <= 0.0 {
                return f64::INFINITY;
            }
            s.add(a * (a / b).log2());
        }
    }
    s.total().max(0.0)
}

pub fn entropy_bits(p: &[f64]) -> f64 {
    compensated_sum(p.iter().filter(|&&a| a > 0.0).map(|&a| -a * a.log2()))
}

pub fn kl_divergence(p: &Pmf, q: &Pmf) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(p.dim(), q.dim()));
    }
    Ok(kl_bits(p.weights(), q.weights()))
}

/// L1 distance, range `[0, 2]`.
pub fn variational_distance(p: &Pmf, q: &Pmf) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(p.dim(), q.dim()));
    }
    Ok(compensated_sum(p.weights().iter().zip(q.weights()).map(|(a, b)| (a - b).abs())))
}

/// Atom masses `(P(A_0), ..., P(A_{k-1}))`.
pub fn push_forward(p: &Pmf, spec: &FunctionSpec) -> Result<Pmf> {
    if p.dim() != spec.r() {
        return Err(Error::DimensionMismatch(p.dim(), spec.r()));
    }
    let w = spec.atoms().iter().map(|a| compensated_sum(a.iter().map(|&x| p[x]))).collect();
    Ok(Pmf { weights: w })
}

/// Pmf on the input alphabet spreading `beta_j` uniformly over atom `j`.
pub fn locally_uniform(beta: &Pmf, spec: &FunctionSpec) -> Result<Pmf> {
    if beta.dim() != spec.k() {
        return Err(Error::DimensionMismatch(beta.dim(), spec.k()));
    }
    let w = (0..spec.r())
        .map(|x| {
            let j = spec.f(x);
            beta[j] / spec.size(j) as f64
        })
        .collect();
    Ok(Pmf { weights: w })
}

/// Upper bound `D(P(A)||beta) + sum_j P(A_j) log2|A_j|` on the divergence from a
/// locally uniform pmf, and whether it holds with equality.
pub fn local_uniformity_bound(p: &Pmf, spec: &FunctionSpec, beta: &Pmf) -> Result<(f64, bool)> {
    let pa = push_forward(p, spec)?;
    if beta.dim() != spec.k() {
        return Err(Error::DimensionMismatch(beta.dim(), spec.k()));
    }
    let spread = compensated_sum((0..spec.k()).map(|j| pa[j] * (spec.size(j) as f64).log2()));
    let bound = kl_bits(pa.weights(), beta.weights()) + spread;
    let actual = kl_bits(p.weights(), locally_uniform(beta, spec)?.weights());
    let tight = if bound.is_infinite() || actual.is_infinite() {
        bound.is_infinite() && actual.is_infinite()
    } else {
        (bound - actual).abs() <= 1e-12
    };
    Ok((bound, tight))
}

/// `D(p||q0) - var(q,q0)/min_{supp} q0`, a lower bound on `D(p||q)`.
pub fn divergence_var_lower_bound(p: &Pmf, q: &Pmf, q0: &Pmf) -> Result<f64> {
    if p.dim() != q.dim() || q.dim() != q0.dim() {
        return Err(Error::DimensionMismatch(p.dim(), q0.dim()));
    }
    let chain_ok = (0..p.dim()).all(|i| (p[i] == 0.0 || q[i] > 0.0) && (q[i] == 0.0 || q0[i] > 0.0));
    if !chain_ok {
        return Err(Error::SupportChain);
    }
    Ok(kl_bits(p.weights(), q0.weights()) - variational_distance(q, q0)? / q0.min_nonzero())
}

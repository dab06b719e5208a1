//! Querier-side estimators: locally uniform expansion, reverse I-projection onto
//! the image of a channel, add-one positivization and smoothing schedules.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::simplex::{
    kl_bits, locally_uniform, variational_distance, Channel, FunctionSpec, NType, NTypeIter, Pmf,
};

/// Map from n-types to pmf estimates. Serialized as `[{"type":[..],"beta":[..]}, ..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorTable {
    entries: Vec<(NType, Pmf)>,
    index: HashMap<NType, usize>,
}

#[derive(Serialize, Deserialize)]
struct EntryRepr {
    #[serde(rename = "type")]
    t: Vec<u32>,
    beta: Pmf,
}

impl Serialize for EstimatorTable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<EntryRepr> = self
            .entries
            .iter()
            .map(|(t, p)| EntryRepr { t: t.counts().to_vec(), beta: p.clone() })
            .collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for EstimatorTable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<EntryRepr>::deserialize(d)?;
        let entries = v
            .into_iter()
            .map(|e| Ok((NType::new(e.t)?, e.beta)))
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        EstimatorTable::new(entries).map_err(serde::de::Error::custom)
    }
}

impl EstimatorTable {
    pub fn new(entries: Vec<(NType, Pmf)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        if let Some((t0, p0)) = entries.first() {
            for (t, p) in &entries {
                if t.dim() != t0.dim() || t.n() != t0.n() {
                    return Err(Error::DimensionMismatch(t.dim(), t0.dim()));
                }
                if p.dim() != p0.dim() {
                    return Err(Error::DimensionMismatch(p.dim(), p0.dim()));
                }
            }
        }
        for (i, (t, _)) in entries.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidPmf(format!("duplicate type {:?}", t.counts())));
            }
        }
        Ok(Self { entries, index })
    }

    /// Table over all n-types on `k` symbols.
    pub fn from_fn<F>(n: u32, k: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&NType) -> Result<Pmf>,
    {
        let entries = NTypeIter::new(n, k).map(|t| f(&t).map(|p| (t, p))).collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }

    pub fn get(&self, t: &NType) -> Result<&Pmf> {
        self.index
            .get(t)
            .map(|&i| &self.entries[i].1)
            .ok_or_else(|| Error::MissingType(t.counts().to_vec()))
    }

    pub fn entries(&self) -> &[(NType, Pmf)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Estimator that spreads the atom masses `beta(t)` uniformly inside each atom.
#[derive(Debug, Clone)]
pub struct LocallyUniformEstimator {
    pub beta_table: EstimatorTable,
    pub spec: FunctionSpec,
}

impl LocallyUniformEstimator {
    pub fn evaluate(&self, t: &NType) -> Result<Pmf> {
        evaluate_locally_uniform(self, t)
    }

    /// Same estimator as a table of pmfs on the input alphabet.
    pub fn to_table(&self) -> Result<EstimatorTable> {
        let entries = self
            .beta_table
            .entries()
            .iter()
            .map(|(t, b)| Ok((t.clone(), locally_uniform(b, &self.spec)?)))
            .collect::<Result<Vec<_>>>()?;
        EstimatorTable::new(entries)
    }
}

pub fn evaluate_locally_uniform(est: &LocallyUniformEstimator, t: &NType) -> Result<Pmf> {
    locally_uniform(est.beta_table.get(t)?, &est.spec)
}

pub const IPROJ_TOL: f64 = 1e-12;
pub const IPROJ_MAX_ITER: usize = 100_000;
pub const KKT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct IProjection {
    pub q_tilde: Pmf,
    pub beta: Pmf,
    pub iterations: usize,
    pub kkt_residual: f64,
}

/// `s_i = sum_c q_c V(i,c) / (beta V)_c`; at the optimum `s_i <= 1` with equality on `supp beta`.
fn kkt_scores(q: &[f64], v: &Channel, m: &[f64]) -> Vec<f64> {
    (0..v.n_in())
        .map(|i| {
            q.iter()
                .zip(m)
                .zip(v.row(i))
                .filter(|((qc, _), _)| **qc > 0.0)
                .map(|((qc, mc), vic)| if *mc > 0.0 { qc * vic / mc } else if *vic > 0.0 { f64::INFINITY } else { 0.0 })
                .sum()
        })
        .collect()
}

/// First-order optimality residual of `beta` for `min D(q || beta V)`.
pub fn kkt_residual(q: &[f64], v: &Channel, beta: &[f64]) -> f64 {
    let m = v.apply_slice(beta);
    if q.iter().zip(&m).any(|(qc, mc)| *qc > 0.0 && *mc <= 0.0) {
        return f64::INFINITY;
    }
    let s = kkt_scores(q, v, &m);
    let dual = s.iter().map(|si| (si - 1.0).max(0.0)).fold(0.0, f64::max);
    let slack: f64 = s.iter().zip(beta).map(|(si, b)| b * (si - 1.0).abs()).sum();
    dual.max(slack)
}

fn solve_transpose(v: &Channel, q: &[f64]) -> Option<Vec<f64>> {
    let k = v.n_in();
    let vt = v.to_matrix().transpose();
    let lu = vt.lu();
    let x = lu.solve(&DVector::from_column_slice(q))?;
    let beta: Vec<f64> = x.iter().copied().collect();
    if beta.iter().any(|b| !b.is_finite()) {
        return None;
    }
    let back = v.apply_slice(&beta);
    let err: f64 = back.iter().zip(q).map(|(a, b)| (a - b).abs()).sum();
    (err <= 1e-12 * k as f64).then_some(beta)
}

fn finish(q: &[f64], v: &Channel, beta: Vec<f64>, iterations: usize) -> Result<IProjection> {
    let beta = Pmf::normalized(beta)?;
    let kkt = kkt_residual(q, v, beta.weights());
    let q_tilde = Pmf::normalized(v.apply_slice(beta.weights()))?;
    Ok(IProjection { q_tilde, beta, iterations, kkt_residual: kkt })
}

/// Reverse I-projection of `q` onto `{beta V : beta in simplex}`.
///
/// Interior and vertex solutions are detected directly; otherwise the
/// multiplicative (EM) update `beta_i <- beta_i s_i` is iterated.
pub fn reverse_iprojection(q: &Pmf, v: &Channel) -> Result<IProjection> {
    let k = v.n_in();
    if v.n_out() != k || q.dim() != k {
        return Err(Error::DimensionMismatch(q.dim(), k));
    }
    if (0..k).any(|j| v.get(j, j) <= 0.0) {
        return Err(Error::OutOfRange("channel diagonal must be positive".into()));
    }
    let qw = q.weights();

    if let Some(beta) = solve_transpose(v, qw) {
        if beta.iter().all(|b| *b >= -1e-14) {
            return finish(qw, v, beta.into_iter().map(|b| b.max(0.0)).collect(), 0);
        }
    }

    let mut best_vertex: Option<(f64, usize)> = None;
    for j in 0..k {
        let m = v.row(j);
        if qw.iter().zip(m).any(|(qc, mc)| *qc > 0.0 && *mc <= 0.0) {
            continue;
        }
        if kkt_scores(qw, v, m).iter().all(|s| *s <= 1.0 + 1e-12) {
            let d = kl_bits(qw, m);
            if best_vertex.map_or(true, |(bd, _)| d < bd) {
                best_vertex = Some((d, j));
            }
        }
    }
    if let Some((_, j)) = best_vertex {
        return finish(qw, v, Pmf::point(k, j).weights().to_vec(), 0);
    }

    let mut beta = vec![1.0 / k as f64; k];
    let mut iterations = 0;
    while iterations < IPROJ_MAX_ITER {
        iterations += 1;
        let m = v.apply_slice(&beta);
        let s = kkt_scores(qw, v, &m);
        let next: Vec<f64> = beta.iter().zip(&s).map(|(b, si)| b * si).collect();
        let total: f64 = next.iter().sum();
        let next: Vec<f64> = next.into_iter().map(|b| b / total).collect();
        let change: f64 = next.iter().zip(&beta).map(|(a, b)| (a - b).abs()).sum();
        beta = next;
        if change <= IPROJ_TOL {
            break;
        }
    }
    let out = finish(qw, v, beta, iterations)?;
    if out.kkt_residual > KKT_TOL {
        return Err(Error::NonConvergence { iterations, residual: out.kkt_residual });
    }
    Ok(out)
}

pub const CONDITION_LIMIT: f64 = 1e12;

/// Dense inverse with a condition-number guard.
pub fn invert_channel(v: &Channel) -> Result<DMatrix<f64>> {
    if v.n_in() != v.n_out() {
        return Err(Error::DimensionMismatch(v.n_in(), v.n_out()));
    }
    let m = v.to_matrix();
    let sv = m.clone().singular_values();
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), s| (lo.min(*s), hi.max(*s)));
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if cond > CONDITION_LIMIT {
        return Err(Error::Singular(cond));
    }
    m.try_inverse().ok_or(Error::Singular(cond))
}

/// `(n (q V^{-1})_j + 1) / (n + k)` given a precomputed inverse.
pub fn kappa_with_inverse(q_tilde: &[f64], inv: &DMatrix<f64>, n: u32) -> Result<Pmf> {
    let k = q_tilde.len();
    let n = n as f64;
    let w = (0..k)
        .map(|j| {
            let b: f64 = (0..k).map(|c| q_tilde[c] * inv[(c, j)]).sum();
            (n * b.max(0.0) + 1.0) / (n + k as f64)
        })
        .collect();
    Pmf::normalized(w)
}

pub fn positivize_kappa(q_tilde: &Pmf, v: &Channel, n: u32) -> Result<Pmf> {
    if q_tilde.dim() != v.n_out() {
        return Err(Error::DimensionMismatch(q_tilde.dim(), v.n_out()));
    }
    kappa_with_inverse(q_tilde.weights(), &invert_channel(v)?, n)
}

/// Type -> reverse I-projection -> kappa -> locally uniform pmf on the input alphabet.
pub fn ml_locally_uniform_estimate(t: &NType, v: &Channel, spec: &FunctionSpec) -> Result<Pmf> {
    let proj = reverse_iprojection(&t.to_pmf(), v)?;
    let kappa = positivize_kappa(&proj.q_tilde, v, t.n())?;
    locally_uniform(&kappa, spec)
}

/// Ceiling that treats values within `1e-9` (relative) of an integer as that integer.
pub fn snapped_ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Type with counts `ceil(n alpha_j)` for `j >= 1` and the remainder in symbol 0.
pub fn rounded_type_of_alpha(alpha: &Pmf, n: u32) -> Result<NType> {
    let kp = alpha.dim();
    let required = (kp as f64 - 1.0) / n as f64;
    if alpha[0] < required {
        return Err(Error::InfeasibleRounding { alpha0: alpha[0], required });
    }
    let mut counts = vec![0u32; kp];
    let mut used = 0u32;
    for j in 1..kp {
        counts[j] = snapped_ceil(n as f64 * alpha[j]) as u32;
        used += counts[j];
    }
    if used > n {
        return Err(Error::InfeasibleRounding { alpha0: alpha[0], required });
    }
    counts[0] = n - used;
    NType::new(counts)
}

type SeqFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The sequences `gamma_n`, `gamma_hat_n`, `c_n` of a smooth estimator class.
#[derive(Clone)]
pub struct SmoothSchedule {
    pub zeta: f64,
    gamma: SeqFn,
    gamma_hat: SeqFn,
    c: SeqFn,
}

impl fmt::Debug for SmoothSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothSchedule").field("zeta", &self.zeta).finish_non_exhaustive()
    }
}

impl SmoothSchedule {
    pub fn custom<G, H, C>(zeta: f64, gamma: G, gamma_hat: H, c: C) -> Self
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        H: Fn(f64) -> f64 + Send + Sync + 'static,
        C: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self { zeta, gamma: Arc::new(gamma), gamma_hat: Arc::new(gamma_hat), c: Arc::new(c) }
    }

    pub fn gamma_n(&self, n: f64) -> f64 {
        (self.gamma)(n)
    }

    pub fn gamma_hat_n(&self, n: f64) -> f64 {
        (self.gamma_hat)(n)
    }

    pub fn c_n(&self, n: f64) -> f64 {
        (self.c)(n)
    }

    pub fn ratio(&self, n: f64) -> f64 {
        self.gamma_hat_n(n) / self.c_n(n)
    }

    /// Checks that the three sequences and `n gamma_hat_n / c_n` decrease along `ns`
    /// and that the last values are small.
    pub fn check_limits(&self, ns: &[f64]) -> Result<()> {
        let seqs: [(&str, Box<dyn Fn(f64) -> f64 + '_>); 4] = [
            ("gamma", Box::new(|n| self.gamma_n(n))),
            ("gamma_hat", Box::new(|n| self.gamma_hat_n(n))),
            ("c", Box::new(|n| self.c_n(n))),
            ("n*gamma_hat/c", Box::new(|n| n * self.ratio(n))),
        ];
        for (name, f) in seqs.iter() {
            let vals: Vec<f64> = ns.iter().map(|&n| f(n)).collect();
            if vals.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::OutOfRange(format!("{name} not positive on the grid")));
            }
            if vals.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::OutOfRange(format!("{name} not decreasing on the grid")));
            }
        }
        Ok(())
    }
}

/// `gamma_n = 5 sqrt(zeta ln2 log2 n / n)`, `gamma_hat_n = n^-3`, `c_n = 1/(n log2(n+2))`.
pub fn default_smooth_schedule(zeta: f64) -> Result<SmoothSchedule> {
    if !(zeta > 1.0) {
        return Err(Error::OutOfRange(format!("zeta={zeta} must exceed 1")));
    }
    Ok(SmoothSchedule::custom(
        zeta,
        move |n| 5.0 * (zeta * std::f64::consts::LN_2 * n.log2() / n).sqrt(),
        |n| n.powi(-3),
        |n| 1.0 / (n * (n + 2.0).log2()),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessReport {
    pub n: u32,
    pub min_entry: f64,
    pub max_neighbor_var: f64,
    pub floor_ok: bool,
    pub continuity_ok: bool,
}

/// Empirical check of the smooth-estimator conditions for one table at its `n`.
pub fn smoothness_report(table: &EstimatorTable, schedule: &SmoothSchedule) -> Result<SmoothnessReport> {
    let entries = table.entries();
    let n = entries.first().map(|(t, _)| t.n()).unwrap_or(0);
    let nf = n as f64;
    let min_entry = entries.iter().flat_map(|(_, p)| p.weights().iter().copied()).fold(f64::INFINITY, f64::min);
    let gamma = schedule.gamma_n(nf);
    let mut max_neighbor_var: f64 = 0.0;
    for (i, (ti, pi)) in entries.iter().enumerate() {
        for (tj, pj) in &entries[i + 1..] {
            if variational_distance(&ti.to_pmf(), &tj.to_pmf())? <= gamma {
                max_neighbor_var = max_neighbor_var.max(variational_distance(pi, pj)?);
            }
        }
    }
    Ok(SmoothnessReport {
        n,
        min_entry,
        max_neighbor_var,
        floor_ok: min_entry >= schedule.c_n(nf),
        continuity_ok: max_neighbor_var <= schedule.gamma_hat_n(nf),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::kl_divergence;
    use approx::assert_abs_diff_eq;

    fn pmf(w: &[f64]) -> Pmf {
        Pmf::new(w.to_vec()).unwrap()
    }

    fn bsc(a: f64) -> Channel {
        Channel::new(vec![vec![a, 1.0 - a], vec![1.0 - a, a]]).unwrap()
    }

    #[test]
    fn locally_uniform_examples() {
        let spec = FunctionSpec::from_sizes(&[3, 2]).unwrap();
        let t = NType::new(vec![1, 0]).unwrap();
        let table = EstimatorTable::new(vec![(t.clone(), pmf(&[1.0, 0.0]))]).unwrap();
        let est = LocallyUniformEstimator { beta_table: table, spec: spec.clone() };
        let p = est.evaluate(&t).unwrap();
        for x in 0..3 {
            assert_abs_diff_eq!(p[x], 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_eq!(p[3], 0.0);
        let table = EstimatorTable::new(vec![(t.clone(), pmf(&[0.6, 0.4]))]).unwrap();
        let est = LocallyUniformEstimator { beta_table: table, spec };
        let p = est.evaluate(&t).unwrap();
        for x in 0..5 {
            assert_abs_diff_eq!(p[x], 0.2, epsilon = 1e-15);
        }
        assert!(matches!(est.evaluate(&NType::new(vec![0, 1]).unwrap()), Err(Error::MissingType(_))));

        let id = FunctionSpec::singletons(3).unwrap();
        let b = pmf(&[0.2, 0.3, 0.5]);
        let t3 = NType::new(vec![1, 1, 0]).unwrap();
        let est = LocallyUniformEstimator {
            beta_table: EstimatorTable::new(vec![(t3.clone(), b.clone())]).unwrap(),
            spec: id,
        };
        assert_eq!(est.evaluate(&t3).unwrap(), b);
    }

    #[test]
    fn table_json_round_trip() {
        let table = EstimatorTable::from_fn(2, 2, |t| Ok(Pmf::normalized(t.counts().iter().map(|&c| c as f64 + 1.0).collect())?)).unwrap();
        let s = serde_json::to_string(&table).unwrap();
        assert!(s.starts_with(r#"[{"type":[2,0],"beta":["#));
        let back: EstimatorTable = serde_json::from_str(&s).unwrap();
        assert_eq!(back, table);
        assert!(serde_json::from_str::<EstimatorTable>(r#"[{"type":[1,0],"beta":[1.0,0.0]},{"type":[1,0],"beta":[0.5,0.5]}]"#).is_err());
    }

    #[test]
    fn iprojection_interior() {
        let v = bsc(0.8);
        let out = reverse_iprojection(&pmf(&[0.75, 0.25]), &v).unwrap();
        assert_abs_diff_eq!(out.beta[0], 11.0 / 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.beta[1], 1.0 / 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.q_tilde[0], 0.75, epsilon = 1e-12);
        assert!(kl_divergence(&pmf(&[0.75, 0.25]), &out.q_tilde).unwrap() < 1e-15);

        let q = pmf(&[0.1, 0.6, 0.3]);
        let out = reverse_iprojection(&q, &Channel::identity(3)).unwrap();
        assert_eq!(out.q_tilde, q);
    }

    #[test]
    fn iprojection_boundary_against_grid() {
        let v = bsc(0.8);
        let q = pmf(&[1.0, 0.0]);
        let out = reverse_iprojection(&q, &v).unwrap();
        assert_abs_diff_eq!(out.q_tilde[0], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(out.beta[0], 1.0, epsilon = 1e-12);
        // grid oracle over the 2-simplex at resolution 1e-4
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=10_000 {
            let b = i as f64 / 10_000.0;
            let m = [0.8 * b + 0.2 * (1.0 - b), 0.2 * b + 0.8 * (1.0 - b)];
            let d = -(m[0]).log2();
            if d < best.0 {
                best = (d, b);
            }
        }
        assert_eq!(best.1, 1.0);
        assert_abs_diff_eq!(kl_divergence(&q, &out.q_tilde).unwrap(), best.0, epsilon = 1e-12);
    }

    #[test]
    fn iprojection_face_of_three_simplex() {
        // optimum on an edge, neither interior nor a vertex
        let v = Channel::new(vec![vec![0.7, 0.2, 0.1], vec![0.2, 0.7, 0.1], vec![0.1, 0.1, 0.8]]).unwrap();
        let q = pmf(&[0.5, 0.5, 0.0]);
        let out = reverse_iprojection(&q, &v).unwrap();
        assert!(out.kkt_residual <= KKT_TOL);
        assert!(out.beta[2] < 1e-6);
        assert_abs_diff_eq!(out.beta[0], 0.5, epsilon = 1e-6);
        // brute-force simplex grid
        let mut best = f64::INFINITY;
        let m = 200;
        for i in 0..=m {
            for j in 0..=m - i {
                let b = [i as f64 / m as f64, j as f64 / m as f64, (m - i - j) as f64 / m as f64];
                best = best.min(kl_bits(q.weights(), &v.apply_slice(&b)));
            }
        }
        let d = kl_divergence(&q, &out.q_tilde).unwrap();
        assert!(d <= best + 1e-12);
    }

    #[test]
    fn kappa_examples() {
        let out = positivize_kappa(&pmf(&[0.5, 0.5]), &Channel::identity(2), 8).unwrap();
        assert_abs_diff_eq!(out[0], 0.5, epsilon = 1e-15);
        let out = positivize_kappa(&pmf(&[0.75, 0.25]), &bsc(0.8), 4).unwrap();
        assert_abs_diff_eq!(out[0], 7.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], 2.0 / 9.0, epsilon = 1e-12);
        let out = positivize_kappa(&pmf(&[1.0, 0.0]), &Channel::identity(2), 10).unwrap();
        assert!(out[1] >= 1.0 / 12.0 - 1e-15);
        assert!(matches!(positivize_kappa(&pmf(&[0.5, 0.5]), &bsc(0.5), 3), Err(Error::Singular(_))));
    }

    #[test]
    fn ml_pipeline_examples() {
        let spec = FunctionSpec::from_sizes(&[2, 1]).unwrap();
        let t = NType::new(vec![3, 1]).unwrap();
        let est = ml_locally_uniform_estimate(&t, &bsc(0.8), &spec).unwrap();
        assert_abs_diff_eq!(est[0], 7.0 / 18.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est[1], 7.0 / 18.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est[2], 2.0 / 9.0, epsilon = 1e-12);

        let id = FunctionSpec::singletons(3).unwrap();
        let t = NType::new(vec![2, 0, 1]).unwrap();
        let est = ml_locally_uniform_estimate(&t, &Channel::identity(3), &id).unwrap();
        for (j, c) in [2.0, 0.0, 1.0].iter().enumerate() {
            assert_abs_diff_eq!(est[j], (c + 1.0) / 6.0, epsilon = 1e-12);
        }
        let t = NType::new(vec![4, 0]).unwrap();
        let est = ml_locally_uniform_estimate(&t, &bsc(0.9), &spec).unwrap();
        assert!(est.weights().iter().all(|w| *w > 0.0));
    }

    #[test]
    fn rounded_type_examples() {
        let t = rounded_type_of_alpha(&pmf(&[0.5, 0.25, 0.25]), 8).unwrap();
        assert_eq!(t.counts(), &[4, 2, 2]);
        let t = rounded_type_of_alpha(&pmf(&[0.9, 0.1]), 7).unwrap();
        assert_eq!(t.counts(), &[6, 1]);
        assert!(matches!(
            rounded_type_of_alpha(&pmf(&[0.05, 0.95]), 4),
            Err(Error::InfeasibleRounding { .. })
        ));
        // n * 0.1 is not exactly integral in binary
        let t = rounded_type_of_alpha(&pmf(&[0.7, 0.3]), 10).unwrap();
        assert_eq!(t.counts(), &[7, 3]);
    }

    #[test]
    fn schedule_examples() {
        let s = default_smooth_schedule(2.0).unwrap();
        let r = s.ratio(100.0);
        assert_abs_diff_eq!(r, 1e-6 * 100.0 * 102f64.log2(), epsilon = 1e-15);
        assert!(r < 0.01);
        assert_abs_diff_eq!(r, 6.7e-4, epsilon = 1e-5);
        assert_abs_diff_eq!(s.gamma_n(1024.0), 5.0 * (2.0 * std::f64::consts::LN_2 * 10.0 / 1024.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(s.gamma_n(1024.0), 0.582, epsilon = 5e-4);
        for n in 2..200 {
            let n = n as f64;
            assert!(s.gamma_n(n) > 0.0 && s.gamma_hat_n(n) > 0.0 && s.c_n(n) > 0.0);
        }
        assert!(s.gamma_hat_n(1.0) > 0.0 && s.c_n(1.0) > 0.0);
        assert_eq!(s.gamma_n(1.0), 0.0);
        let ns: Vec<f64> = (2..=6).map(|e| 10f64.powi(e)).collect();
        s.check_limits(&ns).unwrap();
        assert!(default_smooth_schedule(1.0).is_err());
    }

    #[test]
    fn snapped_ceil_behaviour() {
        assert_eq!(snapped_ceil(10.0 * (1.0 - 0.9)), 1.0);
        assert_eq!(snapped_ceil(0.7), 1.0);
        assert_eq!(snapped_ceil(2.0000001), 3.0);
        assert_eq!(snapped_ceil(3.0), 3.0);
    }

    #[test]
    fn smoothness_of_ml_estimator_is_reported() {
        let spec = FunctionSpec::singletons(2).unwrap();
        let v = bsc(0.8);
        let table = EstimatorTable::from_fn(16, 2, |t| ml_locally_uniform_estimate(t, &v, &spec)).unwrap();
        let rep = smoothness_report(&table, &default_smooth_schedule(2.0).unwrap()).unwrap();
        assert!(rep.min_entry >= 1.0 / 18.0 - 1e-12);
        assert!(rep.max_neighbor_var > 0.0);
    }
}

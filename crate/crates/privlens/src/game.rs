//! The privacy game: exact and simulated payoffs, best responses and a grid
//! minimax oracle for tiny instances.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::fit_over_partition;
use crate::error::{Error, Result};
use crate::estimators::EstimatorTable;
use crate::mechanisms::{build_wl, level_of_rho, validate_rho_qr, RhoQR};
use crate::simplex::{
    kl_bits, multinomial_mass, ntype_count, Channel, FunctionSpec, NType, NTypeIter, NeumaierSum,
    Pmf,
};

pub const MAX_GAME_TYPES: u128 = 1_000_000;

/// User strategy `(P_X, W)` against a querier estimator table, for sequences of length `n`.
#[derive(Debug, Clone)]
pub struct GameInstance {
    pub spec: FunctionSpec,
    pub rho: f64,
    pub n: u32,
    pub pmf: Pmf,
    pub channel: RhoQR,
    pub estimator: EstimatorTable,
}

impl GameInstance {
    pub fn new(spec: &FunctionSpec, rho: f64, n: u32, pmf: Pmf, channel: &Channel, estimator: EstimatorTable) -> Result<Self> {
        if n == 0 {
            return Err(Error::OutOfRange("n must be positive".into()));
        }
        if pmf.dim() != spec.r() {
            return Err(Error::DimensionMismatch(pmf.dim(), spec.r()));
        }
        let channel = validate_rho_qr(channel, spec, rho)?;
        for (t, p) in estimator.entries() {
            if t.dim() != spec.k() || t.n() != n {
                return Err(Error::DimensionMismatch(t.dim(), spec.k()));
            }
            if p.dim() != spec.r() {
                return Err(Error::DimensionMismatch(p.dim(), spec.r()));
            }
        }
        Ok(Self { spec: spec.clone(), rho, n, pmf, channel, estimator })
    }
}

fn check_type_space(n: u32, k: usize) -> Result<()> {
    let count = ntype_count(n, k);
    if count > MAX_GAME_TYPES {
        return Err(Error::TypeSpaceTooLarge(count));
    }
    Ok(())
}

fn payoff(pmf: &Pmf, channel: &Channel, estimator: &EstimatorTable, n: u32) -> Result<f64> {
    let alpha = channel.apply_slice(pmf.weights());
    let mut total = NeumaierSum::new();
    for t in NTypeIter::new(n, channel.n_out()) {
        let mass = multinomial_mass(&alpha, t.counts());
        if mass == 0.0 {
            continue;
        }
        let d = kl_bits(pmf.weights(), estimator.get(&t)?.weights());
        if d.is_infinite() {
            return Ok(f64::INFINITY);
        }
        total.add(mass * d);
    }
    Ok(total.total())
}

/// Expected divergence of the querier's estimate, summed over output types.
pub fn exact_privacy(g: &GameInstance) -> Result<f64> {
    check_type_space(g.n, g.spec.k())?;
    payoff(&g.pmf, &g.channel.channel, &g.estimator, g.n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarlo {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
    pub seed: u64,
}

/// Samples drawn per RNG stream; stream `c` is `ChaCha8(seed)` at stream index `c`.
pub const MC_CHUNK: u64 = 4096;

#[derive(Clone, Copy, Default)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let d = x - self.mean;
        self.mean += d / self.count;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Moments) -> Moments {
        if o.count == 0.0 {
            return self;
        }
        if self.count == 0.0 {
            return o;
        }
        let count = self.count + o.count;
        let d = o.mean - self.mean;
        Moments {
            count,
            mean: self.mean + d * o.count / count,
            m2: self.m2 + o.m2 + d * d * self.count * o.count / count,
        }
    }
}

fn type_key(counts: &[u32], base: u64) -> u64 {
    counts.iter().rev().fold(0u64, |acc, &c| acc * base + c as u64)
}

/// Simulates `X^n ~ P_X`, `Z_i ~ W(.|X_i)` and averages the divergence of the estimate.
pub fn monte_carlo_privacy(g: &GameInstance, samples: u64, seed: u64) -> Result<MonteCarlo> {
    if samples == 0 {
        return Err(Error::OutOfRange("samples must be positive".into()));
    }
    let k = g.spec.k();
    let base = g.n as u64 + 1;
    if (k as f64) * (base as f64).log2() >= 63.0 {
        return Err(Error::Unsupported(format!("type keys overflow for n={}, k={k}", g.n)));
    }
    let mut div: HashMap<u64, f64> = HashMap::with_capacity(g.estimator.len());
    for (t, p) in g.estimator.entries() {
        div.insert(type_key(t.counts(), base), kl_bits(g.pmf.weights(), p.weights()));
    }
    let source = WeightedIndex::new(g.pmf.weights()).map_err(|e| Error::InvalidPmf(e.to_string()))?;
    let rows = g
        .channel
        .channel
        .rows()
        .iter()
        .map(|r| WeightedIndex::new(r).map_err(|e| Error::InvalidChannel(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let chunks = samples.div_ceil(MC_CHUNK);
    let parts: Vec<Result<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let todo = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut m = Moments::default();
            let mut counts = vec![0u32; k];
            for _ in 0..todo {
                counts.iter_mut().for_each(|c| *c = 0);
                for _ in 0..g.n {
                    let x = source.sample(&mut rng);
                    counts[rows[x].sample(&mut rng)] += 1;
                }
                let d = *div
                    .get(&type_key(&counts, base))
                    .ok_or_else(|| Error::MissingType(counts.clone()))?;
                m.push(d);
            }
            Ok(m)
        })
        .collect();
    let mut total = Moments::default();
    for p in parts {
        total = total.merge(p?);
    }
    let std_error = if total.count > 1.0 {
        (total.m2 / (total.count - 1.0) / total.count).sqrt()
    } else {
        0.0
    };
    Ok(MonteCarlo { mean: total.mean, std_error, samples, seed })
}

fn compositions(m: usize, parts: usize) -> Vec<Vec<usize>> {
    NTypeIter::new(m as u32, parts)
        .map(|t| t.counts().iter().map(|&c| c as usize).collect())
        .collect()
}

/// User best response to a fixed channel and estimator over a pmf grid of the given step.
///
/// For `r <= 4` the whole simplex grid is scanned. Otherwise the search is over
/// pmfs with one support symbol per atom; all symbol choices are tried when there
/// are at most 4096 of them, else each atom uses the symbol with the lowest mean
/// estimated probability.
pub fn best_response_pmf(
    spec: &FunctionSpec,
    channel: &Channel,
    estimator: &EstimatorTable,
    n: u32,
    step: f64,
) -> Result<(Pmf, f64)> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::OutOfRange(format!("grid step {step}")));
    }
    check_type_space(n, spec.k())?;
    let m = (1.0 / step).round() as usize;
    let r = spec.r();
    let candidates: Vec<Vec<f64>> = if r <= 4 {
        compositions(m, r)
            .into_iter()
            .map(|c| c.into_iter().map(|x| x as f64 / m as f64).collect())
            .collect()
    } else {
        let choices: u128 = spec.sizes().iter().map(|&s| s as u128).product();
        let supports: Vec<Vec<usize>> = if choices <= 4096 {
            let mut all = vec![Vec::new()];
            for atom in spec.atoms() {
                all = all
                    .into_iter()
                    .flat_map(|pre: Vec<usize>| atom.iter().map(move |&x| [pre.clone(), vec![x]].concat()))
                    .collect();
            }
            all
        } else {
            let mean: Vec<f64> = (0..r)
                .map(|x| estimator.entries().iter().map(|(_, p)| p[x]).sum::<f64>() / estimator.len() as f64)
                .collect();
            vec![spec
                .atoms()
                .iter()
                .map(|a| *a.iter().reduce(|b, x| if mean[*x] < mean[*b] { x } else { b }).unwrap())
                .collect()]
        };
        let masses = compositions(m, spec.k());
        supports
            .iter()
            .flat_map(|sup| {
                masses.iter().map(move |c| {
                    let mut w = vec![0.0; r];
                    for (j, &x) in sup.iter().enumerate() {
                        w[x] = c[j] as f64 / m as f64;
                    }
                    w
                })
            })
            .collect()
    };
    let mut best: Option<(Pmf, f64)> = None;
    for w in candidates {
        let p = Pmf::normalized(w)?;
        let v = payoff(&p, channel, estimator, n)?;
        if best.as_ref().map_or(true, |(_, b)| v > *b) {
            best = Some((p, v));
        }
    }
    best.ok_or_else(|| Error::OutOfRange("empty grid".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinimaxGrids {
    pub channel_points: usize,
    pub estimator_points: usize,
    pub pmf_points: usize,
    /// Estimates are clamped to `[floor, 1 - floor]`.
    pub floor: f64,
    /// Cap on divergence evaluations.
    pub budget: u128,
}

impl Default for MinimaxGrids {
    fn default() -> Self {
        Self { channel_points: 41, estimator_points: 41, pmf_points: 41, floor: 1e-3, budget: 100_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridMeta {
    pub grids: MinimaxGrids,
    pub types: usize,
    pub divergence_evaluations: u128,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimaxResult {
    pub value: f64,
    pub argmax_w: Channel,
    pub arg_estimator: EstimatorTable,
    pub argmax_p: Pmf,
    pub grid_meta: GridMeta,
}

pub const GRID_TOLERANCE: f64 = 0.03;

fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![lo];
    }
    (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect()
}

struct InnerMin {
    value: f64,
    choice: Vec<usize>,
    argmax_p: usize,
}

/// `min` over one estimate per type of `max_p sum_t cost[t][e_t][p]`, depth-first with pruning.
fn min_max(cost: &[Vec<Vec<f64>>]) -> InnerMin {
    let types = cost.len();
    let np = cost[0][0].len();
    let mut best = InnerMin { value: f64::INFINITY, choice: vec![0; types], argmax_p: 0 };
    let mut partial = vec![vec![0.0; np]; types + 1];
    let mut choice = vec![0usize; types];
    fn rec(
        d: usize,
        cost: &[Vec<Vec<f64>>],
        partial: &mut Vec<Vec<f64>>,
        choice: &mut Vec<usize>,
        best: &mut InnerMin,
    ) {
        let types = cost.len();
        for e in 0..cost[d].len() {
            let (head, tail) = partial.split_at_mut(d + 1);
            let prev = &head[d];
            let next = &mut tail[0];
            let mut mx = f64::NEG_INFINITY;
            let mut arg = 0;
            for (p, slot) in next.iter_mut().enumerate() {
                *slot = prev[p] + cost[d][e][p];
                if *slot > mx {
                    mx = *slot;
                    arg = p;
                }
            }
            if mx >= best.value {
                continue;
            }
            choice[d] = e;
            if d + 1 == types {
                best.value = mx;
                best.choice.copy_from_slice(choice);
                best.argmax_p = arg;
            } else {
                rec(d + 1, cost, partial, choice, best);
            }
        }
    }
    rec(0, cost, &mut partial, &mut choice, &mut best);
    best
}

/// Grid approximation of `max_W min_estimator max_P` for binary `X = Z`.
pub fn brute_force_minimax(spec: &FunctionSpec, rho: f64, n: u32, grids: &MinimaxGrids) -> Result<MinimaxResult> {
    if spec.r() != 2 || spec.k() != 2 {
        return Err(Error::Unsupported("grid minimax needs r = k = 2".into()));
    }
    if !(0.0..=1.0).contains(&rho) || n == 0 {
        return Err(Error::OutOfRange(format!("rho={rho}, n={n}")));
    }
    if grids.channel_points == 0 || grids.estimator_points == 0 || grids.pmf_points < 2 {
        return Err(Error::OutOfRange("empty grid".into()));
    }
    let types: Vec<NType> = NTypeIter::new(n, 2).collect();
    let nt = types.len();
    let cp = grids.channel_points as u128;
    let needed = cp * cp * nt as u128 * grids.estimator_points as u128 * grids.pmf_points as u128;
    if needed > grids.budget {
        return Err(Error::BudgetExceeded { needed, budget: grids.budget });
    }
    // symbol 0 of the sorted spec is user symbol spec.atom(0)[0]; both atoms are singletons
    let diag = linspace(rho, 1.0, grids.channel_points);
    let est: Vec<[f64; 2]> = linspace(0.0, 1.0, grids.estimator_points)
        .into_iter()
        .map(|e| {
            let e = e.clamp(grids.floor, 1.0 - grids.floor);
            [e, 1.0 - e]
        })
        .collect();
    let pmfs: Vec<[f64; 2]> = linspace(0.0, 1.0, grids.pmf_points).into_iter().map(|p| [p, 1.0 - p]).collect();
    let div: Vec<Vec<f64>> = est.iter().map(|e| pmfs.iter().map(|p| kl_bits(p, e)).collect()).collect();

    let channel_of = |a: f64, b: f64| -> Vec<Vec<f64>> {
        let mut rows = vec![vec![0.0; 2]; 2];
        let (x0, x1) = (spec.atom(0)[0], spec.atom(1)[0]);
        rows[x0] = vec![a, 1.0 - a];
        rows[x1] = vec![1.0 - b, b];
        rows
    };
    let pairs: Vec<(usize, usize)> =
        (0..diag.len()).flat_map(|i| (0..diag.len()).map(move |j| (i, j))).collect();
    let inner: Vec<InnerMin> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let w = channel_of(diag[i], diag[j]);
            let cost: Vec<Vec<Vec<f64>>> = types
                .iter()
                .map(|t| {
                    let masses: Vec<f64> = pmfs
                        .iter()
                        .map(|p| {
                            let alpha = [p[0] * w[0][0] + p[1] * w[1][0], p[0] * w[0][1] + p[1] * w[1][1]];
                            multinomial_mass(&alpha, t.counts())
                        })
                        .collect();
                    div.iter()
                        .map(|row| row.iter().zip(&masses).map(|(d, m)| if *m == 0.0 { 0.0 } else { m * d }).collect())
                        .collect()
                })
                .collect();
            min_max(&cost)
        })
        .collect();
    let (best_idx, best) = inner
        .iter()
        .enumerate()
        .fold((0, &inner[0]), |acc, (i, m)| if m.value > acc.1.value { (i, m) } else { acc });
    let (i, j) = pairs[best_idx];
    let argmax_w = Channel::new(channel_of(diag[i], diag[j]))?;
    let arg_estimator = EstimatorTable::new(
        types
            .iter()
            .zip(&best.choice)
            .map(|(t, &e)| Ok((t.clone(), Pmf::new(est[e].to_vec())?)))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let argmax_p = Pmf::new(pmfs[best.argmax_p].to_vec())?;
    Ok(MinimaxResult {
        value: best.value,
        argmax_w,
        arg_estimator,
        argmax_p,
        grid_meta: GridMeta {
            grids: *grids,
            types: nt,
            divergence_evaluations: needed,
            tolerance: GRID_TOLERANCE,
        },
    })
}

/// Payoff of the stored strategies of a minimax result.
pub fn replay_minimax(res: &MinimaxResult, n: u32) -> Result<f64> {
    payoff(&res.argmax_p, &res.argmax_w, &res.arg_estimator, n)
}

/// Builds the worst-case mechanism for `rho`, puts the user on a point mass in
/// the largest atom, and returns the smallest divergence any estimate that is
/// uniform on the blocks the querier can tell apart achieves.
pub fn theorem1_equality_check(spec: &FunctionSpec, rho: f64) -> Result<f64> {
    let k = spec.k();
    let l = if rho == 0.0 { k } else { level_of_rho(rho, k)?.size(k) };
    let w = build_wl(spec, l)?;
    validate_rho_qr(&w, spec, rho)?;
    let x0 = spec.atom(0)[0];
    let p = Pmf::point(spec.r(), x0);
    let alpha = w.apply(&p)?;
    for z in 0..k {
        let want = if z < l { 1.0 / l as f64 } else { 0.0 };
        if (alpha[z] - want).abs() > 1e-12 {
            return Err(Error::InvalidPmf(format!("output pmf {:?} is not uniform on the first {l} symbols", alpha.weights())));
        }
    }
    let mut blocks: Vec<Vec<usize>> = vec![spec.atoms()[..l].concat()];
    blocks.extend(spec.atoms()[l..].iter().cloned());
    fit_over_partition(&p, &blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn pmf(w: &[f64]) -> Pmf {
        Pmf::new(w.to_vec()).unwrap()
    }

    fn two_by_two(n: u32, f: impl Fn(&NType) -> Vec<f64>) -> EstimatorTable {
        EstimatorTable::from_fn(n, 2, |t| Pmf::new(f(t))).unwrap()
    }

    fn example_game() -> GameInstance {
        let spec = FunctionSpec::singletons(2).unwrap();
        let est = two_by_two(1, |t| if t.counts()[0] == 1 { vec![0.9, 0.1] } else { vec![0.1, 0.9] });
        GameInstance::new(&spec, 0.6, 1, pmf(&[0.7, 0.3]), &Channel::identity(2), est).unwrap()
    }

    #[test]
    fn exact_example() {
        let g = example_game();
        let d1 = 0.7 * (0.7f64 / 0.9).log2() + 0.3 * (0.3f64 / 0.1).log2();
        let d2 = 0.7 * (0.7f64 / 0.1).log2() + 0.3 * (0.3f64 / 0.9).log2();
        let v = exact_privacy(&g).unwrap();
        assert_abs_diff_eq!(v, 0.7 * d1 + 0.3 * d2, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.602, epsilon = 5e-4);
    }

    #[test]
    fn exact_zero_and_infinite() {
        let spec = FunctionSpec::from_sizes(&[2, 1]).unwrap();
        let p = pmf(&[0.2, 0.3, 0.5]);
        let w = Channel::new(vec![vec![0.8, 0.2], vec![0.7, 0.3], vec![0.1, 0.9]]).unwrap();
        let same = EstimatorTable::from_fn(3, 2, |_| Ok(p.clone())).unwrap();
        let g = GameInstance::new(&spec, 0.7, 3, p.clone(), &w, same).unwrap();
        assert_eq!(exact_privacy(&g).unwrap(), 0.0);
        let hole = EstimatorTable::from_fn(3, 2, |_| Ok(pmf(&[0.5, 0.5, 0.0]))).unwrap();
        let g = GameInstance::new(&spec, 0.7, 3, p, &w, hole).unwrap();
        assert!(exact_privacy(&g).unwrap().is_infinite());
    }

    #[test]
    fn exact_matches_sequence_sum() {
        // sum over all k^n sequences, no types involved
        let spec = FunctionSpec::new(4, vec![vec![0, 3], vec![1], vec![2]]).unwrap();
        let w = Channel::new(vec![
            vec![0.6, 0.3, 0.1],
            vec![0.2, 0.7, 0.1],
            vec![0.1, 0.2, 0.7],
            vec![0.8, 0.1, 0.1],
        ])
        .unwrap();
        let p = pmf(&[0.1, 0.2, 0.3, 0.4]);
        for n in 1..=5u32 {
            let est = EstimatorTable::from_fn(n, 3, |t| {
                Pmf::normalized((0..4).map(|x| 1.0 + t.counts()[spec.f(x)] as f64 + x as f64 * 0.1).collect())
            })
            .unwrap();
            let g = GameInstance::new(&spec, 0.6, n, p.clone(), &w, est.clone()).unwrap();
            let alpha = w.apply(&p).unwrap();
            let mut want = 0.0;
            for code in 0..3usize.pow(n) {
                let mut c = code;
                let mut counts = vec![0u32; 3];
                let mut prob = 1.0;
                for _ in 0..n {
                    counts[c % 3] += 1;
                    prob *= alpha[c % 3];
                    c /= 3;
                }
                let t = NType::new(counts).unwrap();
                want += prob * kl_bits(p.weights(), est.get(&t).unwrap().weights());
            }
            assert_abs_diff_eq!(exact_privacy(&g).unwrap(), want, epsilon = 1e-12);
        }
    }

    #[test]
    fn monte_carlo_example_and_determinism() {
        let g = example_game();
        let exact = exact_privacy(&g).unwrap();
        let a = monte_carlo_privacy(&g, 100_000, 7).unwrap();
        assert!((a.mean - exact).abs() <= 3.0 * a.std_error, "{a:?} vs {exact}");
        let b = monte_carlo_privacy(&g, 100_000, 7).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn monte_carlo_degenerate() {
        let spec = FunctionSpec::from_sizes(&[2, 1]).unwrap();
        let w = build_wl(&spec, 1).unwrap();
        let est = EstimatorTable::from_fn(3, 2, |_| Ok(pmf(&[0.25, 0.25, 0.5]))).unwrap();
        let g = GameInstance::new(&spec, 1.0, 3, Pmf::point(3, 0), &w, est).unwrap();
        let mc = monte_carlo_privacy(&g, 5000, 1).unwrap();
        assert_eq!(mc.std_error, 0.0);
        assert_eq!(mc.mean, exact_privacy(&g).unwrap());
        assert_eq!(mc.mean, 2.0);
    }

    #[test]
    fn best_response_uniform_estimator() {
        let spec = FunctionSpec::from_sizes(&[2, 1]).unwrap();
        let w = build_wl(&spec, 2).unwrap();
        let est = EstimatorTable::from_fn(2, 2, |_| Ok(Pmf::uniform(3))).unwrap();
        let (p, v) = best_response_pmf(&spec, &w, &est, 2, 0.05).unwrap();
        assert_abs_diff_eq!(v, 3f64.log2(), epsilon = 1e-12);
        assert_eq!(p.support().len(), 1);
    }

    #[test]
    fn best_response_constant_estimator_picks_least_likely_symbol() {
        // uniform channel and a constant estimate: the payoff is D(P||R), maximized at the argmin of R
        let spec = FunctionSpec::from_sizes(&[3, 2]).unwrap();
        let w = Channel::uniform(5, 2);
        let beta = [0.7, 0.3];
        let r: Vec<f64> = (0..5).map(|x| beta[spec.f(x)] / spec.size(spec.f(x)) as f64).collect();
        let est = EstimatorTable::from_fn(1, 2, |_| Pmf::new(r.clone())).unwrap();
        let (p, v) = best_response_pmf(&spec, &w, &est, 1, 0.1).unwrap();
        let want = (3.0f64 / 0.7).log2().max((2.0f64 / 0.3).log2());
        assert_abs_diff_eq!(v, want, epsilon = 1e-12);
        assert_eq!(spec.f(p.support()[0]), 1);
    }

    #[test]
    fn best_response_refinement_is_stable() {
        let spec = FunctionSpec::singletons(3).unwrap();
        let w = Channel::new(vec![vec![0.7, 0.2, 0.1], vec![0.1, 0.8, 0.1], vec![0.2, 0.1, 0.7]]).unwrap();
        let est = EstimatorTable::from_fn(2, 3, |t| {
            Pmf::normalized(t.counts().iter().map(|&c| c as f64 + 1.0).collect())
        })
        .unwrap();
        let (_, coarse) = best_response_pmf(&spec, &w, &est, 2, 0.05).unwrap();
        let (_, fine) = best_response_pmf(&spec, &w, &est, 2, 0.01).unwrap();
        assert!(fine >= coarse - 1e-12);
        assert!(fine - coarse < 0.02);
    }

    #[test]
    fn theorem1_examples() {
        let s = FunctionSpec::from_sizes(&[3, 2]).unwrap();
        assert_abs_diff_eq!(theorem1_equality_check(&s, 0.7).unwrap(), 3f64.log2(), epsilon = 1e-12);
        assert_abs_diff_eq!(theorem1_equality_check(&s, 0.3).unwrap(), 5f64.log2(), epsilon = 1e-12);
        let s = FunctionSpec::from_sizes(&[4, 2, 1]).unwrap();
        assert_abs_diff_eq!(theorem1_equality_check(&s, 0.45).unwrap(), 6f64.log2(), epsilon = 1e-12);
        assert_abs_diff_eq!(theorem1_equality_check(&s, 0.2).unwrap(), 7f64.log2(), epsilon = 1e-12);
    }

    #[test]
    fn small_minimax_replays() {
        let spec = FunctionSpec::singletons(2).unwrap();
        let grids = MinimaxGrids { channel_points: 11, estimator_points: 21, pmf_points: 21, ..Default::default() };
        let res = brute_force_minimax(&spec, 0.4, 1, &grids).unwrap();
        assert!(res.value <= 1.0 + 1e-12);
        assert_abs_diff_eq!(replay_minimax(&res, 1).unwrap(), res.value, epsilon = 1e-12);
        let json = serde_json::to_value(&res).unwrap();
        assert!(json["arg_estimator"].is_array());
        let big = MinimaxGrids { budget: 10, ..grids };
        assert!(matches!(brute_force_minimax(&spec, 0.4, 1, &big), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn min_max_matches_exhaustive() {
        let cost = vec![
            vec![vec![0.3, 0.1, 0.5], vec![0.2, 0.4, 0.1]],
            vec![vec![0.0, 0.3, 0.1], vec![0.2, 0.2, 0.2], vec![0.1, 0.0, 0.3]],
        ];
        let mut want = f64::INFINITY;
        for a in 0..2 {
            for b in 0..3 {
                let m = (0..3).map(|p| cost[0][a][p] + cost[1][b][p]).fold(f64::NEG_INFINITY, f64::max);
                want = want.min(m);
            }
        }
        assert_abs_diff_eq!(min_max(&cost).value, want, epsilon = 1e-15);
    }
}

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use privlens::bounds::{gamma_n_inner, lambda_n, omega, Lambda_n};
use privlens::estimators::{
    default_smooth_schedule, positivize_kappa, reverse_iprojection, rounded_type_of_alpha,
};
use privlens::game::{exact_privacy, theorem1_equality_check, GameInstance};
use privlens::mechanisms::{
    build_block_mechanism, build_wl, ldp_max_ratio, ldp_rho_cap, level_of_rho, merge_groups,
    recoverability, reduce_to_sparse_locally_identical, satisfies_ldp, validate_rho_qr, Level,
};
use privlens::simplex::{
    divergence_var_lower_bound, enumerate_ntypes, kl_divergence, local_uniformity_bound,
    locally_uniform, ntype_mass, push_forward, variational_distance, FunctionSpec, Pmf,
};
use privlens::verify::sample;

fn pmf_strategy(d: usize) -> impl Strategy<Value = Pmf> {
    prop::collection::vec(0.0f64..1.0, d)
        .prop_filter("nonzero", |w| w.iter().sum::<f64>() > 1e-6)
        .prop_map(|w| Pmf::normalized(w).unwrap())
}

fn pair(dmax: usize) -> impl Strategy<Value = (Pmf, Pmf)> {
    (2..=dmax).prop_flat_map(|d| (pmf_strategy(d), pmf_strategy(d)))
}

/// Spec with `2 <= k <= kmax` atoms over at most `rmax` symbols, drawn from a seed.
fn spec_strategy(kmax: usize, rmax: usize) -> impl Strategy<Value = FunctionSpec> {
    (2..=kmax, any::<u64>()).prop_flat_map(move |(k, seed)| {
        (k..=rmax.max(k)).prop_map(move |r| sample::spec(&mut ChaCha8Rng::seed_from_u64(seed), r, k))
    })
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn kl_nonnegative_and_zero_only_on_equal((p, q) in pair(6)) {
        let d = kl_divergence(&p, &q).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        if variational_distance(&p, &q).unwrap() > 1e-6 {
            prop_assert!(d > 0.0);
        }
    }

    #[test]
    fn pinsker_chain((p, q) in pair(8)) {
        let d = kl_divergence(&p, &q).unwrap();
        let v = variational_distance(&p, &q).unwrap();
        prop_assert!(v <= (2.0 * std::f64::consts::LN_2 * d).sqrt() + 1e-12);
    }

    #[test]
    fn local_uniformity_bound_holds(spec in spec_strategy(4, 8), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta = sample::interior_pmf(&mut rng, spec.k(), 0.05);
        let p = sample::interior_pmf(&mut rng, spec.r(), 0.05);
        let (bound, tight) = local_uniformity_bound(&p, &spec, &beta).unwrap();
        let actual = kl_divergence(&p, &locally_uniform(&beta, &spec).unwrap()).unwrap();
        prop_assert!(actual <= bound + 1e-12);
        prop_assert_eq!(tight, spec.is_invertible());

        let mut w = vec![0.0; spec.r()];
        for a in spec.atoms() {
            w[a[rng.random_range(0..a.len())]] = 0.1 + rng.random::<f64>();
        }
        let sparse = Pmf::normalized(w).unwrap();
        let (bound, tight) = local_uniformity_bound(&sparse, &spec, &beta).unwrap();
        let actual = kl_divergence(&sparse, &locally_uniform(&beta, &spec).unwrap()).unwrap();
        prop_assert!(tight);
        prop_assert!((actual - bound).abs() <= 1e-12);
    }

    #[test]
    fn type_masses_sum_to_one(alpha in (2usize..=4).prop_flat_map(pmf_strategy), n in 1u32..=8) {
        let total: f64 = enumerate_ntypes(n, alpha.dim()).iter().map(|t| ntype_mass(&alpha, t).unwrap()).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn divergence_var_lower_bound_holds(seed in any::<u64>(), d in 2usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q0 = sample::pmf(&mut rng, d);
        let mut qw = sample::pmf(&mut rng, d).weights().to_vec();
        qw[0] = 0.0;
        let q = Pmf::normalized(qw).unwrap();
        let mut pw = sample::pmf(&mut rng, d).weights().to_vec();
        pw[0] = 0.0;
        let p = Pmf::normalized(pw).unwrap();
        let lb = divergence_var_lower_bound(&p, &q, &q0).unwrap();
        prop_assert!(kl_divergence(&p, &q).unwrap() >= lb - 1e-12);
    }

    #[test]
    fn constructions_validate_and_merge(spec in spec_strategy(6, 9), u in 0.0f64..1.0, seed in any::<u64>()) {
        let k = spec.k();
        let l = 1 + (u * (k - 1) as f64) as usize;
        let rho = 1.0 / l as f64 - (1.0 / l as f64 - 1.0 / (l + 1) as f64) * u * 0.999;
        let m = build_block_mechanism(&spec, rho).unwrap();
        prop_assert!(validate_rho_qr(&m.lifted(), &spec, rho).is_ok());
        let w = build_wl(&spec, l).unwrap();
        prop_assert!(validate_rho_qr(&w, &spec, 1.0 / l as f64).is_ok());

        let p = sample::pmf(&mut ChaCha8Rng::seed_from_u64(seed), spec.r());
        let pa = push_forward(&p, &spec).unwrap();
        let groups = merge_groups(k, m.level);
        let through = m.v.apply(&pa).unwrap();
        let merged: Vec<f64> = groups.iter().map(|g| g.iter().map(|&z| through[z]).sum()).collect();
        let direct = m.v.merge_columns(&groups).unwrap().apply(&pa).unwrap();
        prop_assert!(close(&merged, direct.weights(), 1e-12));

        // output of W_l: first l atoms spread evenly over the first l outputs
        let out = w.apply(&p).unwrap();
        let head: f64 = pa.weights()[..l].iter().sum();
        for z in 0..k {
            let want = if z < l { head / l as f64 } else { pa[z] };
            prop_assert!((out[z] - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn sparse_reduction_preserves_output(spec in spec_strategy(4, 8), seed in any::<u64>(), rho in 0.3f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = sample::qr_channel(&mut rng, &spec, rho);
        let qr = validate_rho_qr(&w, &spec, rho).unwrap();
        let p = sample::pmf(&mut rng, spec.r());
        let (sp, li) = reduce_to_sparse_locally_identical(&p, &qr).unwrap();
        let a = w.apply(&p).unwrap();
        let b = li.lifted().apply(&sp.expand(spec.r())).unwrap();
        prop_assert!(close(a.weights(), b.weights(), 1e-12));
        prop_assert!(validate_rho_qr(&li.lifted(), &spec, rho).is_ok());
    }

    #[test]
    fn ldp_channels_respect_cap(k in 2usize..=5, eps in 0.05f64..4.0, seed in any::<u64>(), t in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = sample::diag_channel(&mut rng, k, 0.0);
        let rows = raw.rows().iter().map(|r| r.iter().map(|x| t * x + (1.0 - t) / k as f64).collect()).collect();
        let w = privlens::simplex::Channel::new(rows).unwrap();
        prop_assume!(satisfies_ldp(&w, eps));
        let spec = FunctionSpec::singletons(k).unwrap();
        prop_assert!(recoverability(&w, &spec) <= ldp_rho_cap(eps, k) + 1e-12);
    }

    #[test]
    fn zero_entry_worst_case_channels_are_never_ldp(spec in spec_strategy(5, 8), u in 0.0f64..1.0) {
        let l = 1 + (u * (spec.k() - 1) as f64) as usize;
        let w = build_wl(&spec, l).unwrap();
        prop_assert!(w.has_zero_entry());
        prop_assert!(ldp_max_ratio(&w).is_infinite());
    }

    #[test]
    fn iprojection_beats_random_points(k in 2usize..=4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = sample::diag_channel(&mut rng, k, 0.6);
        let q = sample::pmf(&mut rng, k);
        let proj = reverse_iprojection(&q, &v).unwrap();
        let best = kl_divergence(&q, &proj.q_tilde).unwrap();
        for _ in 0..200 {
            let beta = sample::pmf(&mut rng, k);
            prop_assert!(best <= kl_divergence(&q, &v.apply(&beta).unwrap()).unwrap() + 1e-9);
        }
        let again = reverse_iprojection(&proj.q_tilde, &v).unwrap();
        prop_assert!(variational_distance(&again.q_tilde, &proj.q_tilde).unwrap() <= 1e-9);
    }

    #[test]
    fn kappa_is_positive_pmf(k in 2usize..=4, seed in any::<u64>(), n in 1u32..=200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = sample::diag_channel(&mut rng, k, 0.6);
        let beta = sample::pmf(&mut rng, k);
        let q = v.apply(&beta).unwrap();
        let kappa = positivize_kappa(&q, &v, n).unwrap();
        let total: f64 = kappa.weights().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(kappa.weights().iter().all(|x| *x >= 1.0 / (n + k as u32) as f64 - 1e-15));
    }

    #[test]
    fn rounded_type_is_close(alpha in (2usize..=5).prop_flat_map(pmf_strategy), n in 1u32..=500) {
        if let Ok(t) = rounded_type_of_alpha(&alpha, n) {
            let kp = alpha.dim() as f64;
            let d = variational_distance(&alpha, &t.to_pmf()).unwrap();
            prop_assert!(d <= 2.0 * (kp - 1.0) / n as f64 + 1e-12);
        } else {
            prop_assert!(alpha[0] < (alpha.dim() as f64 - 1.0) / n as f64 + 1e-9);
        }
    }

    #[test]
    fn omega_is_a_nonincreasing_step_function(spec in spec_strategy(6, 12), a in 0.001f64..1.0, b in 0.001f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(omega(&spec, hi).unwrap() <= omega(&spec, lo).unwrap());
        let k = spec.k();
        prop_assert_eq!(omega(&spec, lo / k as f64).unwrap(), (spec.r() as f64).log2());
        // 1/l belongs to level l; just above it only l - 1 atoms are merged
        for l in 2..=k {
            let b = 1.0 / l as f64;
            let at = omega(&spec, b).unwrap();
            prop_assert_eq!(omega(&spec, b - 1e-9).unwrap(), at);
            prop_assert!(omega(&spec, b + 1e-9).unwrap() < at);
        }
    }

    #[test]
    fn omega_prefix_equals_best_subset(spec in spec_strategy(6, 12), rho in 0.01f64..1.0) {
        let k = spec.k();
        let best = match level_of_rho(rho, k).unwrap() {
            Level::Full => spec.r(),
            Level::Partial(l) => (0u32..1 << k)
                .filter(|m| m.count_ones() as usize == l)
                .map(|m| (0..k).filter(|j| m >> j & 1 == 1).map(|j| spec.size(j)).sum::<usize>())
                .max()
                .unwrap(),
        };
        prop_assert!((omega(&spec, rho).unwrap() - (best as f64).log2()).abs() <= 1e-12);
    }

    #[test]
    fn gamma_inner_nonnegative(seed in any::<u64>(), n in 1u32..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(2..=3);
        let v = sample::diag_channel(&mut rng, k, 0.6);
        let alpha = v.apply(&sample::pmf(&mut rng, k)).unwrap();
        prop_assert!(gamma_n_inner(&alpha, &v, n).unwrap() >= 0.0);
    }

    #[test]
    fn lambda_sequences_bounded(kp in 2usize..=6, zeta in 1.1f64..4.0, n in 2u64..100_000) {
        let lam = lambda_n(kp, zeta, n as f64);
        let deficit = 1.0 - lam;
        prop_assert!(lam <= 1.0);
        // below one ulp the subtraction from 1 is not representable
        let e = std::f64::consts::E;
        let term = 3.0 * (4.0 * (kp as f64 - 1.0) * zeta.sqrt() / (5.0 * e.sqrt())).exp() / (n as f64).powf(zeta);
        prop_assert!(deficit > 0.0 || term < f64::EPSILON);
        let spec = FunctionSpec::from_sizes(&[4, 2, 1]).unwrap();
        let schedule = default_smooth_schedule(zeta).unwrap();
        for rho in [0.45, 0.8] {
            if let Ok(v) = Lambda_n(&spec, rho, n, &schedule) {
                prop_assert!(v >= -schedule.ratio(n as f64) - 1e-12);
            }
        }
    }

    #[test]
    fn theorem1_matches_omega(spec in spec_strategy(5, 12), rho in 0.01f64..=1.0) {
        let v = theorem1_equality_check(&spec, rho).unwrap();
        prop_assert!((v - omega(&spec, rho).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn exact_privacy_matches_sequence_sum(seed in any::<u64>(), n in 1u32..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(2..=3);
        let r = rng.random_range(k..=4);
        let spec = sample::spec(&mut rng, r, k);
        let w = sample::qr_channel(&mut rng, &spec, 0.4);
        let p = sample::pmf(&mut rng, r);
        let est = sample::estimator(&mut rng, n, k, r);
        let g = GameInstance::new(&spec, 0.4, n, p.clone(), &w, est.clone()).unwrap();
        let alpha = w.apply(&p).unwrap();
        let mut want = 0.0;
        for code in 0..k.pow(n) {
            let mut c = code;
            let mut counts = vec![0u32; k];
            let mut prob = 1.0;
            for _ in 0..n {
                counts[c % k] += 1;
                prob *= alpha[c % k];
                c /= k;
            }
            let t = privlens::simplex::NType::new(counts).unwrap();
            want += prob * kl_divergence(&p, est.get(&t).unwrap()).unwrap();
        }
        prop_assert!((exact_privacy(&g).unwrap() - want).abs() <= 1e-12);
    }
}

#[test]
fn smooth_schedule_limits_hold() {
    let s = default_smooth_schedule(2.0).unwrap();
    let ns: Vec<f64> = (2..=6).map(|e| 10f64.powi(e)).collect();
    s.check_limits(&ns).unwrap();
}

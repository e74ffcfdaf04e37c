use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use gtstorm::algorithms::{self, AlgorithmKind, DecayExponent, Schedule};
use gtstorm::checks::InvariantChecker;
use gtstorm::data::{parse_libsvm, partition_by_label, partition_iid, to_libsvm, Dataset, Sample, SparseVector};
use gtstorm::metrics::stationarity_metric;
use gtstorm::objectives::{
    full_local_gradient, logistic_grad, logistic_loss, node_streams, regularizer, sample_gradient, synthetic_quadratic,
    LogisticObjective, QuadraticObjective, Sampling, StochasticObjective,
};
use gtstorm::stacked::{consensus_sq, max_abs, max_abs_diff, mean};
use gtstorm::theory::derive_constants;
use gtstorm::topology::{build_mixing_matrix, generate_erdos_renyi};

fn gaussian_blocks(seed: u64, m: usize, p: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m).map(|_| (0..p).map(|_| rng.sample(StandardNormal)).collect()).collect()
}

fn dense_sample(values: &[f64], label: u8) -> Sample {
    Sample {
        features: SparseVector::from_dense(values),
        label,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixing_contracts_and_preserves_mean(m in 2usize..14, pc in 0.25f64..1.0, seed in 0u64..1000, p in 1usize..5) {
        let topo = generate_erdos_renyi(m, pc, seed).unwrap();
        prop_assert_eq!(&topo, &generate_erdos_renyi(m, pc, seed).unwrap());
        let w = build_mixing_matrix(&topo).unwrap();
        for k in 0..10 {
            let x = gaussian_blocks(seed * 31 + k, m, p);
            let mixed = w.mix(&x);
            prop_assert!(consensus_sq(&mixed).sqrt() <= w.lambda() * consensus_sq(&x).sqrt() * (1.0 + 1e-10));
            prop_assert!(max_abs_diff(&mean(&mixed), &mean(&x)) <= 1e-12 * max_abs(&mean(&x)).max(1.0));
        }
    }

    #[test]
    fn logistic_gradient_matches_central_differences(
        x in prop::collection::vec(-3.0f64..3.0, 4),
        z in prop::collection::vec(-2.0f64..2.0, 4),
        label in 0u8..2,
        alpha in 0.0f64..1.0,
    ) {
        let s = dense_sample(&z, label);
        let g = logistic_grad(&x, &s, alpha).unwrap();
        let h = 1e-6;
        for k in 0..x.len() {
            let mut hi = x.clone();
            let mut lo = x.clone();
            hi[k] += h;
            lo[k] -= h;
            let fd = (logistic_loss(&hi, &s, alpha).unwrap() - logistic_loss(&lo, &s, alpha).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1.0), "coord {}: fd {} vs {}", k, fd, g[k]);
        }
    }

    #[test]
    fn quadratic_gradient_matches_central_differences(
        x in prop::collection::vec(-3.0f64..3.0, 3),
        seed in 0u64..1000,
    ) {
        let obj = synthetic_quadratic(2, 3, 4, seed).unwrap();
        let g = sample_gradient(&obj, 1, 2, &x).unwrap();
        let h = 1e-5;
        for k in 0..3 {
            let mut hi = x.clone();
            let mut lo = x.clone();
            hi[k] += h;
            lo[k] -= h;
            let fd = (obj.sample_loss(1, 2, &hi) - obj.sample_loss(1, 2, &lo)) / (2.0 * h);
            prop_assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1.0));
        }
    }

    #[test]
    fn enumerated_expectation_is_full_gradient(seed in 0u64..1000, n in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<Sample> = (0..n)
            .map(|_| dense_sample(&[rng.sample(StandardNormal), rng.sample(StandardNormal), 0.0], rng.gen_range(0..2)))
            .collect();
        let obj = LogisticObjective::new(3, 0.1, vec![samples]).unwrap();
        let x = [0.7, -1.3, 0.2];
        let mut avg = vec![0.0; 3];
        for s in 0..n {
            let g = sample_gradient(&obj, 0, s, &x).unwrap();
            avg.iter_mut().zip(&g).for_each(|(a, b)| *a += b / n as f64);
        }
        let full = full_local_gradient(&obj, 0, &x).unwrap();
        prop_assert!(max_abs_diff(&avg, &full) <= 1e-12 * max_abs(&full).max(1.0));
    }

    #[test]
    fn regularizer_gradient_is_bounded(x in prop::collection::vec(-50.0f64..50.0, 1..8), alpha in 0.0f64..5.0) {
        let s = Sample { features: SparseVector::default(), label: 0 };
        let g = logistic_grad(&x, &s, alpha).unwrap();
        let bound = 2.0 * alpha * 3.0 * 3f64.sqrt() / 16.0;
        for gk in g {
            prop_assert!(gk.abs() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn libsvm_round_trip(
        rows in prop::collection::vec(
            (0u8..2, prop::collection::btree_map(1u32..60, -1e6f64..1e6, 0..10)),
            1..30,
        ),
    ) {
        let samples: Vec<Sample> = rows
            .iter()
            .map(|(label, feats)| Sample {
                features: SparseVector::new(
                    feats.keys().map(|k| k - 1).collect(),
                    feats.values().copied().collect(),
                ).unwrap(),
                label: *label,
            })
            .collect();
        let d = samples.iter().map(|s| s.features.span()).max().unwrap_or(0);
        let ds = Dataset::new("prop", d, samples).unwrap();
        let parsed = parse_libsvm(to_libsvm(&ds).as_bytes(), "prop", None).unwrap();
        prop_assert_eq!(&parsed, &ds);
        let again = parse_libsvm(to_libsvm(&parsed).as_bytes(), "prop", None).unwrap();
        prop_assert_eq!(again, parsed);
    }

    #[test]
    fn partitions_are_disjoint_and_cover(n in 1usize..200, m in 1usize..12, seed in 0u64..100, classes in 1usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<Sample> = (0..n)
            .map(|k| dense_sample(&[k as f64], rng.gen_range(0..2)))
            .collect();
        let ds = Dataset::new("p", 1, samples).unwrap();
        let class_of = |s: &Sample| (s.features.values().first().copied().unwrap_or(0.0) as usize) % classes;
        let mut partitions = Vec::new();
        if m <= n {
            partitions.push(partition_iid(&ds, m, seed).unwrap());
        }
        if let Ok(p) = partition_by_label(&ds, m, class_of) {
            partitions.push(p);
        }
        for p in partitions {
            let mut seen: Vec<usize> = p.assignment.iter().flatten().copied().collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
            prop_assert!(p.assignment.iter().all(|a| !a.is_empty()));
        }
    }

    #[test]
    fn constants_shrink_as_lambda_grows(l in 0.1f64..10.0, c0 in 2.0f64..50.0, c1 in 0.05f64..2.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let limit = ((1.0 - 1.0 / c0) / (1.0 + c1)).sqrt();
        let (lam_lo, lam_hi) = (lo * limit * 0.999, hi * limit * 0.999);
        let p_lo = derive_constants(l, lam_lo, c0, c1, 1.0).unwrap();
        let p_hi = derive_constants(l, lam_hi, c0, c1, 1.0).unwrap();
        prop_assert!(p_hi.k1 <= p_lo.k1);
        prop_assert!(p_hi.k2 <= p_lo.k2);
        prop_assert!(p_hi.k3 <= p_lo.k3);
    }

    #[test]
    fn every_step_satisfies_checked_invariants(
        kind_idx in 0usize..3,
        m in 2usize..7,
        pc in 0.3f64..1.0,
        seed in 0u64..500,
        eta0 in 0.01f64..0.5,
        rho in 0.5f64..200.0,
    ) {
        let kind = [AlgorithmKind::GtStorm, AlgorithmKind::Dsgd, AlgorithmKind::Gnsd][kind_idx];
        let obj = synthetic_quadratic(m, 3, 5, seed).unwrap();
        let w = build_mixing_matrix(&generate_erdos_renyi(m, pc, seed).unwrap()).unwrap();
        let sched = Schedule::experiment(eta0, DecayExponent::Third, rho).unwrap();
        let mut rngs = node_streams(seed, m);
        let mut state = algorithms::init(kind, &obj, &[1.0, -2.0, 0.5], &mut rngs, Sampling::single()).unwrap().state;
        let mut checker = InvariantChecker::new(&w, 0.5 + (seed % 4) as f64);
        for _ in 0..60 {
            let before = state.clone();
            let info = algorithms::step(kind, &mut state, &w, &obj, &sched, &mut rngs, Sampling::single()).unwrap();
            let outcome = checker.check_step(kind, &before, &info, &state);
            prop_assert!(outcome.is_ok(), "{:?}", outcome);
        }
    }

    #[test]
    fn consensus_error_ignores_common_translation(seed in 0u64..1000, shift in prop::collection::vec(-100.0f64..100.0, 3)) {
        let obj = synthetic_quadratic(4, 3, 3, seed).unwrap();
        let x = gaussian_blocks(seed, 4, 3);
        let moved: Vec<Vec<f64>> = x.iter().map(|xi| xi.iter().zip(&shift).map(|(a, b)| a + b).collect()).collect();
        let a = stationarity_metric(&state_at(x), &obj).unwrap();
        let b = stationarity_metric(&state_at(moved), &obj).unwrap();
        prop_assert!((a.consensus_err - b.consensus_err).abs() <= 1e-9 * a.consensus_err.max(1.0));
        prop_assert_eq!(a.total, a.grad_norm_sq + a.consensus_err);
    }

    #[test]
    fn gradient_term_ignores_node_order_for_identical_objectives(seed in 0u64..1000, perm_seed in 0u64..1000) {
        let base = synthetic_quadratic(1, 3, 4, seed).unwrap();
        let obj = QuadraticObjective::new(vec![base.centers(0).to_vec(); 5]).unwrap();
        let x = gaussian_blocks(seed + 1, 5, 3);
        let mut order: Vec<usize> = (0..5).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
        for i in (1..5).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let permuted: Vec<Vec<f64>> = order.iter().map(|&i| x[i].clone()).collect();
        let a = stationarity_metric(&state_at(x), &obj).unwrap();
        let b = stationarity_metric(&state_at(permuted), &obj).unwrap();
        prop_assert!((a.grad_norm_sq - b.grad_norm_sq).abs() <= 1e-12 * a.grad_norm_sq.max(1.0));
    }
}

fn state_at(x: Vec<Vec<f64>>) -> algorithms::SwarmState {
    algorithms::SwarmState {
        v: x.clone(),
        prev_x: x.clone(),
        x,
        y: None,
        t: 0,
    }
}

#[test]
fn regularizer_gradient_bound_is_attained() {
    let alpha = 0.1;
    let s = Sample {
        features: SparseVector::default(),
        label: 0,
    };
    let g = logistic_grad(&[1.0 / 3f64.sqrt()], &s, alpha).unwrap();
    assert!((g[0] - 2.0 * alpha * 3.0 * 3f64.sqrt() / 16.0).abs() < 1e-15);
}

#[test]
fn regularizer_is_not_convex() {
    // Midpoint of x=1 and x=3 lies above the chord.
    let f = |v: f64| regularizer(&[v], 0.1);
    assert!(f(2.0) > 0.5 * (f(1.0) + f(3.0)));
}

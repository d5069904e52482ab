use ndarray::Array2;
use pmlp_core::density::path_density_info;
use pmlp_core::graph::{build_affinity, normalize_symmetric};
use pmlp_core::propagate::{build_pipeline_affinity, prepare_labels, propagate_iterative, propagate_on_affinity};
use pmlp_core::synthlab::{gen_gaussian_blobs, gen_two_moons};
use pmlp_core::threshold::{record_high_count, threshold_increment, ThresholdSchedule, ThresholdSchedulerState};
use pmlp_core::{
    run_pmlp, AffinityMatrix, Aggregator, FeatureMatrix, LabelAssignment, Mode, PmlpConfig, SoftLabelMatrix,
};
use proptest::prelude::*;

fn blobs(seed: u64, classes: usize, per_class: usize) -> (FeatureMatrix, Vec<LabelAssignment>) {
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|c| vec![4.0 * c as f64, (c % 2) as f64 * 3.0])
        .collect();
    let ds = gen_gaussian_blobs(&means, 1.0, per_class, 2, seed).unwrap();
    let a = ds.assignments();
    (ds.features, a)
}

fn aggregator() -> impl Strategy<Value = Aggregator> {
    prop_oneof![
        Just(Aggregator::Min),
        Just(Aggregator::Max),
        Just(Aggregator::Avg),
        (0.0f64..=1.0).prop_map(Aggregator::Quantile),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pipeline_output_nonnegative(seed in any::<u64>(), classes in 2usize..4, h in 0.1f64..20.0, k in 1usize..4, agg in aggregator()) {
        let (f, a) = blobs(seed, classes, 15);
        let cfg = PmlpConfig { bandwidth_h: h, path_points_k: k, aggregator: agg, ..PmlpConfig::default() };
        let r = run_pmlp(&f, &a, &cfg).unwrap();
        prop_assert!(r.final_labels.view().iter().all(|&v| v >= 0.0));
        prop_assert!(r.propagated.view().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn path_density_symmetric(seed in any::<u64>(), i in 0usize..30, j in 0usize..30, k in 1usize..5, agg in aggregator()) {
        prop_assume!(i != j);
        let (f, _) = blobs(seed, 2, 15);
        let cfg = PmlpConfig { path_points_k: k, aggregator: agg, kde_support_n: 10, ..PmlpConfig::default() };
        prop_assert_eq!(path_density_info(&f, i, j, &cfg).unwrap(), path_density_info(&f, j, i, &cfg).unwrap());
    }

    #[test]
    fn affinity_degenerates_to_classical(seed in any::<u64>()) {
        let (f, _) = blobs(seed, 3, 8);
        let nodes: Vec<usize> = (0..f.rows()).collect();
        let a = build_affinity(&f, &nodes, &PmlpConfig { bandwidth_h: 1e12, ..PmlpConfig::default() }).unwrap();
        let b = build_affinity(&f, &nodes, &PmlpConfig { mode: Mode::ClassicalLpa, ..PmlpConfig::default() }).unwrap();
        for (x, y) in a.view().iter().zip(b.view().iter()) {
            prop_assert!((x - y).abs() <= 1e-6 * y.max(1.0));
        }
    }

    #[test]
    fn step_norms_non_increasing(seed in any::<u64>(), n in 2usize..25, alpha in 0.05f64..0.95) {
        let mut raw = Array2::zeros((n, n));
        let mut s = seed;
        for i in 0..n {
            for j in 0..n {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                if i != j {
                    raw[[i, j]] = ((s >> 11) as f64 / (1u64 << 53) as f64) + 1e-3;
                }
            }
        }
        let op = normalize_symmetric(&AffinityMatrix::symmetrized(raw).unwrap()).unwrap();
        let y = SoftLabelMatrix::new(Array2::from_shape_fn((n, 2), |(t, c)| if t % 3 == c { 1.0 } else { 0.0 })).unwrap();
        let out = propagate_iterative(&op, &y, alpha, 500, 1e-14).unwrap();
        for w in out.step_norms.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-300, "{} then {}", w[0], w[1]);
        }
    }

    #[test]
    fn rescaled_affinity_keeps_labels(seed in any::<u64>(), log_c in -3.0f64..3.0) {
        let ds = gen_two_moons(60, 0.1, 2, seed).unwrap();
        let cfg = PmlpConfig { bandwidth_h: 0.1, ..PmlpConfig::default() };
        let prepared = prepare_labels(&ds.assignments(), None).unwrap();
        let w = build_pipeline_affinity(&ds.features, 2, &cfg).unwrap();
        let a = propagate_on_affinity(&w, &prepared, &cfg).unwrap();
        let b = propagate_on_affinity(&w.scaled(10f64.powf(log_c)).unwrap(), &prepared, &cfg).unwrap();
        prop_assert!(a.final_labels.max_abs_diff(&b.final_labels) < 1e-9);
        prop_assert_eq!(a.argmax(), b.argmax());
    }

    #[test]
    fn k_triggers_at_one_epoch(tau0 in 0.5f64..0.99, k in 0u64..20, epoch in 0u32..2000, split in 1usize..5) {
        let sched = ThresholdSchedule::default();
        let mut state = ThresholdSchedulerState::new(tau0).unwrap();
        // Deliver k·50 hits in `split` uneven chunks.
        let total = k * 50;
        let mut sent = 0;
        for part in 0..split {
            let chunk = if part + 1 == split { total - sent } else { total / split as u64 };
            let next = record_high_count(&state, chunk, epoch, &sched);
            prop_assert!(next.tau >= state.tau);
            state = next;
            sent += chunk;
        }
        let expected = (tau0 + k as f64 * threshold_increment(epoch)).min(sched.tau_max);
        prop_assert_eq!(state.tau, expected.max(tau0));
    }
}

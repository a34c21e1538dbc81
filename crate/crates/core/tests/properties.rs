use nalgebra::DMatrix;
use proptest::prelude::*;

use sketchlift::dataset::{parse_csv, write_csv, DataMatrix, Labeling};
use sketchlift::eval::{aggregate, misclassification_error, Method, ResultRecord};
use sketchlift::kmeans::{kmeans, KMeansConfig};
use sketchlift::sdp::{affinity, check_feasibility, project_affine, project_psd, solve_kmeans_sdp};
use sketchlift::sketch::{
    fixed_sketch_size, size_adaptive_weights, sketch_indices, sl_cluster, SketchConfig, SketchMode,
    WeightVector,
};
use sketchlift::theory::{threshold_full, threshold_sl, ThresholdInputs};
use sketchlift::SolverConfig;

fn labeling(k: usize, n: usize) -> impl Strategy<Value = Labeling> {
    prop::collection::vec(0..k, n).prop_map(move |a| Labeling::new(a, k).unwrap())
}

fn labeling_pair() -> impl Strategy<Value = (Labeling, Labeling)> {
    (1usize..=6, 1usize..=40).prop_flat_map(|(k, n)| (labeling(k, n), labeling(k, n)))
}

fn permutation(k: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..k).collect::<Vec<_>>()).prop_shuffle()
}

fn data(n: std::ops::RangeInclusive<usize>, p: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = DataMatrix> {
    (n, p).prop_flat_map(|(n, p)| {
        prop::collection::vec(-10.0f64..10.0, n * p).prop_map(move |v| DataMatrix::new(n, p, v).unwrap())
    })
}

fn brute_force_error(pred: &Labeling, truth: &Labeling) -> f64 {
    fn perms(k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        perms(k - 1)
            .into_iter()
            .flat_map(|p| {
                (0..=p.len()).map(move |i| {
                    let mut q = p.clone();
                    q.insert(i, k - 1);
                    q
                })
            })
            .collect()
    }
    let k = pred.k().max(truth.k());
    perms(k)
        .iter()
        .map(|perm| {
            (0..pred.n()).filter(|&i| perm[pred.label(i)] != truth.label(i)).count() as f64 / pred.n() as f64
        })
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn error_equals_exhaustive_minimum((pred, truth) in labeling_pair()) {
        let e = misclassification_error(&pred, &truth).unwrap();
        prop_assert!((e - brute_force_error(&pred, &truth)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&e));
    }

    #[test]
    fn error_ignores_relabeling(
        (pred, truth, perm) in labeling_pair().prop_flat_map(|(a, b)| {
            let k = a.k();
            (Just(a), Just(b), permutation(k))
        })
    ) {
        let e = misclassification_error(&pred, &truth).unwrap();
        let renamed_pred = pred.relabeled(&perm).unwrap();
        let renamed_truth = truth.relabeled(&perm).unwrap();
        prop_assert!((misclassification_error(&renamed_pred, &truth).unwrap() - e).abs() < 1e-12);
        prop_assert!((misclassification_error(&pred, &renamed_truth).unwrap() - e).abs() < 1e-12);
        prop_assert!((misclassification_error(&truth, &pred).unwrap() - e).abs() < 1e-12);
    }

    #[test]
    fn error_invariant_under_joint_reordering(
        (pred, truth, order) in labeling_pair().prop_flat_map(|(a, b)| {
            let n = a.n();
            (Just(a), Just(b), permutation(n))
        })
    ) {
        let e = misclassification_error(&pred, &truth).unwrap();
        let f = misclassification_error(&pred.select(&order), &truth.select(&order)).unwrap();
        prop_assert!((e - f).abs() < 1e-12);
    }

    #[test]
    fn aggregate_ignores_record_order(
        errors in prop::collection::vec((0usize..3, 0.0f64..1.0), 1..20),
        order_seed in any::<u64>(),
    ) {
        let records: Vec<ResultRecord> = errors
            .iter()
            .enumerate()
            .map(|(i, &(m, e))| ResultRecord {
                method: [Method::M0, Method::M1, Method::M4][m],
                n: 10,
                p: 1,
                k: 2,
                gamma: 0.5,
                lambda_star: None,
                delta2: 1.0,
                sigma: 1.0,
                sizes: vec![5, 5],
                replicate: i,
                seed: i as u64,
                error: e,
                wall_time_s: e * 3.0,
                iterations: 0,
                converged: true,
                failure: None,
            })
            .collect();
        let mut shuffled = records.clone();
        let len = shuffled.len();
        let mut state = order_seed;
        for i in (1..len).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (state >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(aggregate(&records), aggregate(&shuffled));
    }

    #[test]
    fn affine_projection_is_idempotent_and_feasible(
        (m, k, values) in (2usize..20).prop_flat_map(|m| (Just(m), 1..=m, prop::collection::vec(-5.0f64..5.0, m * m)))
    ) {
        let raw = DMatrix::from_vec(m, m, values);
        let once = project_affine(&raw, k);
        let twice = project_affine(&once, k);
        prop_assert!((&twice - &once).amax() < 1e-12);
        let report = check_feasibility(&once, k).unwrap();
        prop_assert!(report.symmetry < 1e-12 && report.row_sums < 1e-12 && report.trace < 1e-12);
    }

    #[test]
    fn psd_projection_is_psd_and_idempotent(
        (m, values) in (1usize..20).prop_flat_map(|m| (Just(m), prop::collection::vec(-5.0f64..5.0, m * m)))
    ) {
        let raw = DMatrix::from_vec(m, m, values);
        let once = project_psd(&raw).unwrap();
        let twice = project_psd(&once).unwrap();
        prop_assert!((&twice - &once).amax() < 1e-12 * (1.0 + once.amax()));
        let min_eig = once.clone().symmetric_eigenvalues().min();
        prop_assert!(min_eig > -1e-10);
    }

    #[test]
    fn lloyd_objective_never_increases(d in data(5..=40, 1..=4), k in 1usize..5, seed in any::<u64>()) {
        prop_assume!(k <= d.n());
        let fit = kmeans(&d, k, &KMeansConfig { restarts: 2, max_iter: 50 }, seed).unwrap();
        prop_assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9 * (1.0 + w[0])));
        prop_assert_eq!(fit.labeling.k(), k);
    }

    #[test]
    fn csv_round_trip_is_exact(d in data(1..=12, 1..=5), with_labels in any::<bool>()) {
        let labels = with_labels.then(|| Labeling::new((0..d.n()).map(|i| i % 3).collect(), 3).unwrap());
        let mut buf = Vec::new();
        write_csv(&d, labels.as_ref(), &mut buf).unwrap();
        let (back, truth) = parse_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, d);
        prop_assert_eq!(truth.map(|t| t.assignments().to_vec()), labels.map(|t| t.assignments().to_vec()));
    }

    #[test]
    fn fixed_sketch_has_floor_size_and_follows_rows(
        (d, order) in data(2..=60, 1..=3).prop_flat_map(|d| { let n = d.n(); (Just(d), permutation(n)) }),
        gamma in 0.05f64..=1.0,
        seed in any::<u64>(),
    ) {
        let n = d.n();
        let w = WeightVector::uniform(n, gamma).unwrap();
        let t = sketch_indices(&d, &w, SketchMode::FixedSize, seed).unwrap();
        prop_assert_eq!(t.len(), fixed_sketch_size(n, gamma));
        prop_assert_eq!(t.len(), (n as f64 * gamma + 1e-9).floor() as usize);
        let permuted = d.select(&order);
        let tp = sketch_indices(&permuted, &w, SketchMode::FixedSize, seed).unwrap();
        let mapped: Vec<usize> = tp.iter().map(|&i| order[i]).collect();
        prop_assert_eq!(mapped, t);
    }

    #[test]
    fn adaptive_weights_sum_to_gamma_n(sizes in prop::collection::vec(1usize..50, 1..6), gamma in 0.01f64..0.3) {
        let l = Labeling::from_sizes(&sizes).unwrap();
        let (w, clipped) = size_adaptive_weights(&l, gamma).unwrap();
        let n: usize = sizes.iter().sum();
        if !clipped {
            prop_assert!((w.expected_size() - gamma * n as f64).abs() < 1e-9 * n as f64);
        }
        prop_assert!(w.as_slice().iter().all(|&x| x > 0.0 && x <= 1.0));
    }

    #[test]
    fn thresholds_are_monotone(n in 10usize..5000, p in 0usize..2000, k in 1usize..6, sigma in 0.1f64..3.0) {
        let sizes = vec![n; k];
        let a = threshold_full(&ThresholdInputs::new(sizes.clone(), p, sigma)).unwrap();
        let b = threshold_full(&ThresholdInputs::new(sizes, p + 1, sigma)).unwrap();
        prop_assert!(b >= a);
        let nn = n * k;
        let low = threshold_sl(nn, k, p, sigma, 0.2).unwrap();
        let high = threshold_sl(nn, k, p, sigma, 0.6).unwrap();
        prop_assert!(low >= high);
        prop_assert!(high >= threshold_sl(nn, k, p, sigma, 1.0).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sdp_dominates_any_labeling(d in data(6..=16, 1..=3), k in 2usize..4, assignment_seed in any::<u64>()) {
        let a = affinity(&d);
        let sol = solve_kmeans_sdp(&a, k, &SolverConfig::default()).unwrap();
        let n = d.n();
        let labels: Vec<usize> = (0..n)
            .map(|i| if i < k { i } else { (assignment_seed.rotate_left(i as u32) as usize) % k })
            .collect();
        let z = sketchlift::sdp::ideal_membership(&Labeling::new(labels, k).unwrap());
        prop_assert!(sol.objective >= a.dot(z.matrix()) - 1e-4 * a.norm());
        if sol.converged {
            prop_assert!(sol.primal_residual <= 1e-5 && sol.dual_residual <= 1e-5);
        }
    }

    #[test]
    fn sl_labels_follow_row_permutation(
        (d, order) in data(20..=36, 2..=3).prop_flat_map(|d| { let n = d.n(); (Just(d), permutation(n)) }),
        seed in any::<u64>(),
    ) {
        let cfg = SketchConfig { gamma: 0.5, seed, rounding_seed: seed ^ 5, ..SketchConfig::default() };
        let a = sl_cluster(&d, 2, &cfg).unwrap();
        let b = sl_cluster(&d.select(&order), 2, &cfg).unwrap();
        prop_assert_eq!(b.labeling, a.labeling.select(&order));
    }
}

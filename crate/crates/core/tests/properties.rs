//! Property tests for the invariants each module promises.

mod common;

use distml::clustering::{
    kmeans, kwindows, kwindows_enlarge, kwindows_merge, kwindows_phase1, seed_centers, KMeansConfig,
    KWindowsConfig, Norm, RangeTree, Window,
};
use distml::coordinator::{aggregate_second_order, SwapServer};
use distml::data::{generate_clusters, generate_regression, partition, ClusterShape, Dataset, Labels, SplitMode, SplitSpec};
use distml::gp::{combine, gp_fit, CombinationRule, ExpertPrediction, Kernel};
use distml::learners::{gradient, lipschitz_estimate, loss, prox_l1, Learner, LossKind, Objective, Regularizer, Theta, UpdatePolicy};
use proptest::prelude::*;

use common::inside;

fn split_mode() -> impl Strategy<Value = SplitMode> {
    prop_oneof![
        Just(SplitMode::ShuffledIid),
        Just(SplitMode::Contiguous),
        Just(SplitMode::ByLabelHeterogeneous)
    ]
}

fn objective() -> impl Strategy<Value = Objective> {
    (
        prop_oneof![Just(LossKind::Squared), Just(LossKind::Logistic)],
        prop_oneof![Just(Regularizer::None), Just(Regularizer::L2)],
        0.0..2.0f64,
    )
        .prop_map(|(loss, regularizer, lambda)| Objective { loss, regularizer, lambda })
}

fn sorted_rows(data: &Dataset) -> Vec<Vec<u64>> {
    let y = data.targets().map(|t| t.into_owned());
    let mut rows: Vec<Vec<u64>> = data
        .rows()
        .enumerate()
        .map(|(i, r)| {
            let mut v: Vec<u64> = r.iter().map(|x| x.to_bits()).collect();
            if let Some(y) = &y {
                v.push(y[i].to_bits());
            }
            v
        })
        .collect();
    rows.sort();
    rows
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partition_preserves_rows(n in 4usize..60, k in 1usize..4, mode in split_mode(), seed in 0u64..1000) {
        // Rounded targets give the heterogeneous split a few label groups.
        let raw = generate_regression(n, 2, &Theta::new(vec![1.0, 2.0], 0.0), 1.0, seed).unwrap();
        let y: Vec<f64> = raw.targets().unwrap().iter().map(|v| v.round()).collect();
        let data = Dataset::new(raw.points().to_vec(), 2, Some(Labels::Real(y))).unwrap();
        let spec = SplitSpec { mode, k, seed };
        let Ok(p) = partition(&data, &spec) else {
            // Only the heterogeneous split may lack enough label groups.
            prop_assert_eq!(mode, SplitMode::ByLabelHeterogeneous);
            return Ok(());
        };
        prop_assert_eq!(p.k(), k);
        let pooled = p.pooled();
        prop_assert_eq!(&pooled, &data);
        let mut shard_rows: Vec<Vec<u64>> = p.shards().iter().flat_map(sorted_rows).collect();
        shard_rows.sort();
        prop_assert_eq!(shard_rows, sorted_rows(&data));
        if mode != SplitMode::ByLabelHeterogeneous {
            let sizes: Vec<usize> = p.shards().iter().map(Dataset::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
        prop_assert_eq!(partition(&data, &spec).unwrap(), p);
    }

    #[test]
    fn generators_reproducible(seed in 0u64..1000) {
        let t = Theta::new(vec![0.5, -0.5, 1.0], 0.2);
        prop_assert_eq!(generate_regression(30, 3, &t, 0.3, seed).unwrap(), generate_regression(30, 3, &t, 0.3, seed).unwrap());
        let c = vec![vec![0.0, 1.0], vec![3.0, 3.0]];
        prop_assert_eq!(
            generate_clusters(&c, 0.4, 10, ClusterShape::Gaussian, seed).unwrap(),
            generate_clusters(&c, 0.4, 10, ClusterShape::Gaussian, seed).unwrap()
        );
    }

    #[test]
    fn gradient_matches_finite_differences(
        obj in objective(),
        theta in prop::collection::vec(-2.0..2.0f64, 4),
        x in prop::collection::vec(-1.5..1.5f64, 3),
        y in 0.0..1.0f64,
    ) {
        let theta = Theta::from_vec(theta).unwrap();
        let data = Dataset::new(x, 3, Some(Labels::Real(vec![y]))).unwrap();
        let g = gradient(&obj, &theta, &data, &[0]).unwrap();
        let h = 1e-6;
        for j in 0..4 {
            let shifted = |delta: f64| {
                let mut v = theta.as_slice().to_vec();
                v[j] += delta;
                loss(&obj, &Theta::from_vec(v).unwrap(), &data).unwrap()
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            prop_assert!((fd - g[j]).abs() <= 1e-5 * fd.abs().max(1.0), "coord {}: fd {} vs {}", j, fd, g[j]);
        }
    }

    #[test]
    fn prox_is_non_expansive(
        u in prop::collection::vec(-5.0..5.0f64, 5),
        v in prop::collection::vec(-5.0..5.0f64, 5),
        t in 0.0..3.0f64,
    ) {
        let pu = prox_l1(&u, t).unwrap();
        let pv = prox_l1(&v, t).unwrap();
        prop_assert!(common::l2_diff(&pu, &pv) <= common::l2_diff(&u, &v) + 1e-12);
    }

    #[test]
    fn proximal_step_descends(seed in 0u64..500, lambda in 0.0..1.0f64, l1 in any::<bool>(), scale in 0.1..1.0f64) {
        let data = generate_regression(40, 3, &Theta::new(vec![1.0, -2.0, 0.5], 0.3), 0.2, seed).unwrap();
        let obj = if l1 { Objective::lasso(lambda) } else { Objective::ridge(lambda) };
        let step = scale / lipschitz_estimate(&obj, &data);
        let learner = Learner::new(obj, &data, UpdatePolicy::full_gradient(step, 1));
        let mut theta = Theta::new(vec![0.3, 0.1, -0.7], 1.0);
        for _ in 0..5 {
            let next = learner.local_update(&theta).unwrap();
            prop_assert!(loss(&obj, &next, &data).unwrap() <= loss(&obj, &theta, &data).unwrap() * (1.0 + 1e-12));
            theta = next;
        }
    }

    #[test]
    fn full_gradient_update_is_deterministic(seed in 0u64..500) {
        let data = generate_regression(30, 2, &Theta::new(vec![1.0, 1.0], 0.0), 0.1, seed).unwrap();
        let learner = Learner::new(Objective::lasso(0.2), &data, UpdatePolicy::full_gradient(0.01, 4));
        let start = Theta::new(vec![0.5, -0.5], 0.1);
        prop_assert_eq!(learner.local_update(&start).unwrap(), learner.local_update(&start).unwrap());
    }

    #[test]
    fn aggregation_ignores_grouping(seed in 0u64..500, k1 in 1usize..6, k2 in 1usize..6) {
        let data = generate_regression(60, 3, &Theta::new(vec![1.0, 0.0, -1.0], 2.0), 0.1, seed).unwrap();
        let a = aggregate_second_order(&partition(&data, &SplitSpec { mode: SplitMode::ShuffledIid, k: k1, seed }).unwrap()).unwrap();
        let b = aggregate_second_order(&partition(&data, &SplitSpec { mode: SplitMode::Contiguous, k: k2, seed: 0 }).unwrap()).unwrap();
        prop_assert!(a.dist_inf(&b) <= 1e-10);
    }

    #[test]
    fn pull_does_not_advance(pushes in 0usize..10) {
        let server = SwapServer::new(Theta::zeros(1));
        for i in 0..pushes {
            server.push_swap(0, Theta::new(vec![i as f64], 0.0)).unwrap();
        }
        let (theta, t) = server.pull(0);
        prop_assert_eq!(t, pushes as u64);
        prop_assert_eq!(server.pull(1), (theta, t));
    }

    #[test]
    fn gp_variance_bounded(seed in 0u64..500, l in 0.3..2.0f64, s2 in 0.2..3.0f64, noise in 0.0..0.5f64,
                           x in prop::collection::vec(-3.0..3.0f64, 2)) {
        let data = generate_regression(15, 2, &Theta::new(vec![1.0, -1.0], 0.0), 0.1, seed).unwrap();
        let model = gp_fit(&data, Kernel::new(l, s2, noise)).unwrap();
        let p = model.predict(&x).unwrap();
        prop_assert!(p.var > 0.0);
        prop_assert!(p.var <= s2 + 1e-10);
    }

    #[test]
    fn combine_permutation_invariant(
        experts in prop::collection::vec((-3.0..3.0f64, 0.1..1.0f64, 0.1..1.0f64), 1..6),
        rotate in 0usize..6,
    ) {
        let preds: Vec<ExpertPrediction> = experts.iter().map(|&(mu, var, _)| ExpertPrediction { mu, var }).collect();
        let betas: Vec<f64> = experts.iter().map(|e| e.2).collect();
        let r = rotate % preds.len();
        let mut p2 = preds.clone();
        p2.rotate_left(r);
        let mut b2 = betas.clone();
        b2.rotate_left(r);
        for (rule, rule2) in [
            (CombinationRule::poe(), CombinationRule::poe()),
            (CombinationRule::gpoe(Some(betas.clone())), CombinationRule::gpoe(Some(b2.clone()))),
            (CombinationRule::bcm(1.0), CombinationRule::bcm(1.0)),
            (CombinationRule::gbcm(Some(betas.clone()), 1.0), CombinationRule::gbcm(Some(b2.clone()), 1.0)),
        ] {
            let a = combine(&preds, &rule).unwrap();
            let b = combine(&p2, &rule2).unwrap();
            prop_assert!((a.mu - b.mu).abs() <= 1e-12 * a.mu.abs().max(1.0));
            prop_assert!((a.var - b.var).abs() <= 1e-12 * a.var);
        }
    }

    #[test]
    fn poe_precisions_add(experts in prop::collection::vec((-3.0..3.0f64, 0.1..4.0f64), 1..8)) {
        let preds: Vec<ExpertPrediction> = experts.iter().map(|&(mu, var)| ExpertPrediction { mu, var }).collect();
        let out = combine(&preds, &CombinationRule::poe()).unwrap();
        let total: f64 = preds.iter().map(|p| 1.0 / p.var).sum();
        prop_assert!((1.0 / out.var - total).abs() <= 1e-12 * total);
    }

    #[test]
    fn range_query_equals_scan(
        seed in 0u64..1000,
        dim in 1usize..5,
        center in prop::collection::vec(-1.0..1.0f64, 4),
        weights in prop::collection::vec(0.3..3.0f64, 4),
        r in 0.01..1.5f64,
    ) {
        let rows = generate_clusters(&[vec![0.0; dim]], 0.7, 300, ClusterShape::UniformBox, seed).unwrap();
        let tree = RangeTree::build(&rows);
        prop_assert!(tree.check_invariants().is_ok());
        let (c, w) = (&center[..dim], &weights[..dim]);
        let expected: Vec<usize> = (0..rows.len()).filter(|&i| inside(rows.row(i), c, w, r)).collect();
        prop_assert_eq!(tree.range_query(&Window::new(c.to_vec(), r, w.to_vec())), expected);
    }

    #[test]
    fn kmeans_objective_monotone(seed in 0u64..1000, k in 1usize..5) {
        let data = generate_clusters(&[vec![0.0, 0.0], vec![2.0, 1.0], vec![0.0, 3.0]], 0.8, 20, ClusterShape::Gaussian, seed).unwrap();
        let m = kmeans(&data, &KMeansConfig::new(k, Norm::L2, seed)).unwrap();
        prop_assert!(m.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        prop_assert!(m.converged);
        // Fixed point: every point sits with its nearest centroid.
        for (x, &a) in data.rows().zip(&m.assignment) {
            let mine = Norm::L2.cost(x, &m.centroids[a]);
            prop_assert!(m.centroids.iter().all(|c| Norm::L2.cost(x, c) >= mine));
        }
    }

    #[test]
    fn kwindows_phases_keep_their_promises(seed in 0u64..300, k_init in 1usize..7, r in 0.3..1.5f64) {
        let data = generate_clusters(&[vec![0.0, 0.0], vec![5.0, 5.0]], 0.6, 60, ClusterShape::Gaussian, seed).unwrap();
        let config = KWindowsConfig::new(k_init, r, seed);
        let init = seed_centers(&data, k_init, seed).unwrap();
        let moved = kwindows_phase1(&data, &config, &init).unwrap();
        let enlarged = kwindows_enlarge(&moved, &data, &config).unwrap();
        let merged = kwindows_merge(&enlarged, &data, &config).unwrap();
        for model in [&moved, &enlarged, &merged] {
            for (w, members) in model.windows.iter().zip(&model.memberships) {
                prop_assert_eq!(w.cardinality, members.len());
                for &i in members {
                    prop_assert!(inside(data.row(i), &w.center, &w.weights, w.radius));
                }
            }
            for (i, a) in model.assignment.iter().enumerate() {
                if let Some(j) = a {
                    let w = &model.windows[*j];
                    prop_assert!(inside(data.row(i), &w.center, &w.weights, w.radius));
                }
            }
        }
        prop_assert_eq!(moved.windows.len(), enlarged.windows.len());
        for (a, b) in moved.windows.iter().zip(&enlarged.windows) {
            prop_assert!(b.cardinality >= a.cardinality);
        }
        prop_assert!(merged.windows.len() <= enlarged.windows.len());
    }

    #[test]
    fn clustering_is_deterministic(seed in 0u64..300) {
        let data = generate_clusters(&[vec![0.0, 0.0], vec![4.0, 0.0]], 0.5, 40, ClusterShape::Gaussian, seed).unwrap();
        let config = KWindowsConfig::new(4, 0.8, seed);
        let a = kwindows(&data, &config).unwrap();
        let b = kwindows(&data, &config).unwrap();
        prop_assert_eq!(&a.windows, &b.windows);
        prop_assert_eq!(&a.assignment, &b.assignment);
        prop_assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        let ka = kmeans(&data, &KMeansConfig::new(2, Norm::Linf, seed)).unwrap();
        let kb = kmeans(&data, &KMeansConfig::new(2, Norm::Linf, seed)).unwrap();
        prop_assert_eq!(ka.centroids, kb.centroids);
    }
}

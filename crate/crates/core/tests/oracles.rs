//! Cross-checks against independent reference computations.

mod common;

use std::sync::Arc;

use distml::clustering::{kmeans_best_of, KMeansConfig, Norm};
use distml::coordinator::{
    node_learners, run_operators, run_schedule, wire, DelayModel, ExecutionMode, InProcess, Schedule, SwapServer,
    TcpServerHandle, TcpTransport,
};
use distml::data::{generate_regression, partition, Dataset, Labels, SplitMode, SplitSpec};
use distml::gp::{fit_experts, gp_fit, Kernel};
use distml::learners::{centralized_oracle, closed_form, Learner, Objective, Theta, UpdatePolicy};
use distml::coordinator::aggregate_second_order;

use common::*;

fn regression(n: usize, seed: u64) -> Dataset {
    generate_regression(n, 4, &Theta::new(vec![1.0, -0.5, 0.25, 2.0], -1.0), 0.1, seed).unwrap()
}

#[test]
fn closed_form_matches_lu_ridge() {
    let data = regression(150, 1);
    for lambda in [0.0, 0.1, 3.0] {
        let ours = closed_form(&Objective::ridge(lambda), &data).unwrap();
        assert!(max_abs_diff(ours.as_slice(), &ridge_lu(&data, lambda)) <= 1e-10);
    }
}

#[test]
fn single_shard_aggregation_is_the_closed_form() {
    let data = regression(50, 2);
    let p = partition(&data, &SplitSpec { mode: SplitMode::Contiguous, k: 1, seed: 0 }).unwrap();
    let agg = aggregate_second_order(&p).unwrap();
    assert!(max_abs_diff(agg.as_slice(), &svd_least_squares(&data)) <= 1e-10);
}

#[test]
fn centralized_descent_reaches_closed_form() {
    let data = regression(120, 3);
    let obj = Objective::ridge(0.5);
    let policy = UpdatePolicy::full_gradient(UpdatePolicy::default_step(&obj, &data), 20_000);
    let theta = centralized_oracle(&obj, &data, &policy).unwrap();
    assert!(max_abs_diff(theta.as_slice(), &ridge_lu(&data, 0.5)) <= 1e-8);
}

#[test]
fn six_contacts_compose_three_operators_twice() {
    let data = regression(60, 4);
    let p = partition(&data, &SplitSpec { mode: SplitMode::ShuffledIid, k: 3, seed: 4 }).unwrap();
    let obj = Objective::lasso(0.3);
    let policy = UpdatePolicy::full_gradient(0.005, 2);
    let trace = run_schedule(&p, &obj, &policy, &Schedule::round_robin(3).unwrap(), &ExecutionMode::Serialized, 6).unwrap();
    let f: Vec<Learner> = (0..3)
        .map(|k| Learner::new(obj.with_penalty_share(p.shard(k).len() as f64 / 60.0), p.shard(k), policy))
        .collect();
    let mut theta = Theta::zeros(4);
    for t in 0..6 {
        theta = f[t % 3].local_update(&theta).unwrap();
        assert_eq!(&trace.records[t].theta_pushed, &theta);
    }
    // Each contact returns the value the previous contact pushed.
    for w in trace.records.windows(2) {
        assert_eq!(w[1].theta_returned, w[0].theta_pushed);
    }
}

#[test]
fn overlapped_mode_introduces_staleness() {
    let data = regression(80, 5);
    let p = partition(&data, &SplitSpec { mode: SplitMode::ShuffledIid, k: 4, seed: 5 }).unwrap();
    let obj = Objective::ridge(0.1);
    let policy = UpdatePolicy::full_gradient(UpdatePolicy::default_step(&obj, &data), 1);
    let mode = ExecutionMode::Overlapped { delays: DelayModel::uniform(4, 0.5, 1.5, 1) };
    let trace = run_schedule(&p, &obj, &policy, &Schedule::async_uniform(4, 2).unwrap(), &mode, 200).unwrap();
    assert!(trace.max_staleness() > 1);
    assert!(trace.records.windows(2).all(|w| w[1].sim_time >= w[0].sim_time));
    assert!(trace.records.iter().enumerate().all(|(i, r)| r.t == i as u64 + 1 && r.base_t < r.t));
}

#[test]
fn tcp_byte_counts_match_the_frame_layout() {
    let data = regression(40, 6);
    let p = partition(&data, &SplitSpec { mode: SplitMode::Contiguous, k: 2, seed: 0 }).unwrap();
    let obj = Objective::least_squares();
    let learners = node_learners(&p, &obj, &UpdatePolicy::full_gradient(0.01, 1));
    let theta0 = Theta::zeros(4);
    let handle = TcpServerHandle::spawn("127.0.0.1:0", theta0.clone()).unwrap();
    let mut tcp = TcpTransport::connect(handle.addr()).unwrap();
    let trace = run_operators(&learners, &theta0, &Schedule::round_robin(2).unwrap(), &ExecutionMode::Serialized, 8, &mut tcp).unwrap();
    drop(tcp);
    handle.shutdown();
    // Serialized contact: one pull (0 doubles up, 5 back), one push (5 and 5).
    let per_contact = wire::exchange_bytes(0, 5) + wire::exchange_bytes(5, 5);
    assert_eq!(per_contact, (13 + 17 + 40) + (13 + 40 + 17 + 40));
    assert!(trace.records.iter().all(|r| r.bytes_sent == per_contact));

    let mut local = InProcess::new(Arc::new(SwapServer::new(theta0.clone())));
    let again = run_operators(&learners, &theta0, &Schedule::round_robin(2).unwrap(), &ExecutionMode::Serialized, 8, &mut local).unwrap();
    assert_eq!(again.total_bytes(), trace.total_bytes());
}

#[test]
fn concurrent_tcp_clients_serialize() {
    let handle = TcpServerHandle::spawn("127.0.0.1:0", Theta::zeros(1)).unwrap();
    let addr = handle.addr();
    std::thread::scope(|s| {
        for node in 0..4 {
            s.spawn(move || {
                use distml::coordinator::Transport;
                let mut c = TcpTransport::connect(addr).unwrap();
                for i in 0..50 {
                    c.push_swap(node, &Theta::new(vec![node as f64], i as f64)).unwrap();
                }
            });
        }
    });
    assert_eq!(handle.server().t(), 200);
    handle.shutdown();
}

#[test]
fn gp_alpha_reproduces_centered_targets() {
    let xs: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 2.0 + x.cos()).collect();
    let data = Dataset::new(xs, 1, Some(Labels::Real(ys.clone()))).unwrap();
    let kernel = Kernel { prior_mean: 2.0, ..Kernel::new(0.8, 1.0, 0.02) };
    let model = gp_fit(&data, kernel).unwrap();
    let cov = {
        let mut k = kernel.gram(&data);
        for i in 0..25 {
            k[(i, i)] += 0.02 + model.jitter();
        }
        k
    };
    let back = cov.mul_vec(model.alpha());
    for (b, y) in back.iter().zip(&ys) {
        assert!((b - (y - 2.0)).abs() <= 1e-8);
    }
}

#[test]
fn one_shard_committee_is_the_single_gp() {
    let data = regression(30, 7);
    let p = partition(&data, &SplitSpec { mode: SplitMode::Contiguous, k: 1, seed: 0 }).unwrap();
    let kernel = Kernel::new(1.0, 2.0, 0.1);
    let committee = fit_experts(&p, &[kernel]).unwrap();
    let single = gp_fit(&data, kernel).unwrap();
    let x = [0.1, -0.2, 0.3, 0.0];
    assert_eq!(committee.experts[0].predict(&x).unwrap(), single.predict(&x).unwrap());
    assert_eq!(committee.score, single.log_marginal_likelihood());
}

#[test]
fn kmeans_two_distant_pairs() {
    let rows = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![20.0, 0.0], vec![20.0, 1.0]];
    let data = Dataset::from_rows(&rows, None).unwrap();
    let best = kmeans_best_of(&data, &KMeansConfig::new(2, Norm::L2, 0), 0..10).unwrap();
    assert!((best.objective - kmeans_enumerated_optimum(&rows, 2)).abs() <= 1e-12);
    assert!((best.objective - 1.0).abs() <= 1e-12);
}

//! Configured runs: load data, execute the task, write artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{ExperimentConfig, ParamServerParams, TaskKind, TransportConfig};
use super::metrics::{MetricsRecord, MetricsWriter};
use crate::channel::Channel;
use crate::clustering::{
    distributed_kwindows_via, kmeans_best_of, kwindows, label_agreement, ClusterModel, KMeansConfig,
};
use crate::coordinator::{
    aggregate_second_order_via, node_learners, run_operators_observed, InProcess, SwapServer,
    TcpServerHandle, TcpTransport, Transport,
};
use crate::data::{partition, save_csv, Dataset, Partition};
use crate::error::{Error, Result};
use crate::gp::{fit_experts, CombinationRule, RuleKind};
use crate::learners::{centralized_oracle, closed_form, loss, Objective, Theta, UpdatePolicy};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const MODEL_FILE: &str = "model.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub task: TaskKind,
    pub final_objective: Option<f64>,
    /// `‖θ_final − θ⋆‖₂` for parameter tasks.
    pub oracle_gap: Option<f64>,
    pub total_bytes: usize,
    pub contacts_per_node: Vec<usize>,
    /// Task-specific figures.
    pub details: serde_json::Value,
}

/// The output directory: `override_dir`, else the config's `out_dir`, else `out`.
pub fn resolve_out_dir(config: &ExperimentConfig, override_dir: Option<&Path>) -> PathBuf {
    override_dir
        .map(Path::to_path_buf)
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn load_partition(config: &ExperimentConfig) -> Result<(Dataset, Partition)> {
    let data = config.dataset.load(config.seed, &config.base_dir)?;
    let spec = config
        .split
        .ok_or_else(|| Error::Config { path: "split".into(), message: "this task needs a split".into() })?;
    let p = partition(&data, &spec)?;
    Ok((data, p))
}

/// `gen`: writes the configured dataset as `data.csv`.
pub fn write_dataset(config: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let data = config.dataset.load(config.seed, &config.base_dir)?;
    let path = out_dir.join("data.csv");
    save_csv(&data, &path)?;
    Ok(path)
}

/// `split`: writes `shard_<k>.csv` per node and `provenance.json`.
pub fn write_shards(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let (_, p) = load_partition(config)?;
    let mut paths = Vec::new();
    for (k, shard) in p.shards().iter().enumerate() {
        let path = out_dir.join(format!("shard_{k}.csv"));
        save_csv(shard, &path)?;
        paths.push(path);
    }
    write_json(&out_dir.join("provenance.json"), &p.provenance())?;
    Ok(paths)
}

/// Runs the configured task and writes metrics (parameter tasks), the model
/// and a summary into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<Summary> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let summary = match config.task {
        TaskKind::Paramserver => run_paramserver(config, out_dir)?,
        TaskKind::AggregateLs => run_aggregate(config, out_dir)?,
        TaskKind::GpCommittee => run_gp(config, out_dir)?,
        TaskKind::Kwindows => run_kwindows(config, out_dir)?,
        TaskKind::Kmeans => run_kmeans(config, out_dir)?,
    };
    write_json(&out_dir.join(SUMMARY_FILE), &summary)?;
    info!("wrote {}", out_dir.join(SUMMARY_FILE).display());
    Ok(summary)
}

/// Closed form where it exists, else long full-gradient descent.
fn reference_solution(objective: &Objective, data: &Dataset, step: f64, epochs: usize) -> Result<Theta> {
    match closed_form(objective, data) {
        Ok(theta) => Ok(theta),
        Err(Error::InvalidArgument(_)) => centralized_oracle(objective, data, &UpdatePolicy::full_gradient(step, epochs)),
        Err(e) => Err(e),
    }
}

enum Link {
    Local(InProcess),
    Tcp(TcpTransport, TcpServerHandle),
}

fn open_link(transport: &TransportConfig, theta_init: &Theta) -> Result<Link> {
    Ok(match transport {
        TransportConfig::Inprocess => Link::Local(InProcess::new(Arc::new(SwapServer::new(theta_init.clone())))),
        TransportConfig::Tcp { host, port } => {
            let handle = TcpServerHandle::spawn((host.as_str(), *port), theta_init.clone())?;
            let client = TcpTransport::connect(handle.addr())?;
            Link::Tcp(client, handle)
        }
    })
}

fn run_paramserver(config: &ExperimentConfig, out_dir: &Path) -> Result<Summary> {
    let params: &ParamServerParams = config.paramserver.as_ref().expect("validated");
    let (data, p) = load_partition(config)?;
    let objective = params.objective;
    let step = match params.policy.step_size {
        Some(s) => s,
        None => UpdatePolicy::default_step(&objective, &data),
    };
    let policy = UpdatePolicy {
        step_size: step,
        epochs: params.policy.epochs,
        batch_size: params.policy.batch_size,
        mode: params.policy.mode,
        seed: params.policy.seed,
    };
    policy.validate()?;
    let oracle = reference_solution(&objective, &data, step, params.oracle_epochs)?;
    let learners = node_learners(&p, &objective, &policy);
    let theta_init = Theta::zeros(data.dim());

    let mut writer = MetricsWriter::create(out_dir.join(METRICS_FILE))?;
    let every = (params.contacts / 100).max(1);
    let mut bytes = 0usize;
    let mut observe = |r: &crate::coordinator::TraceRecord| -> Result<()> {
        bytes += r.bytes_sent;
        let checkpoint = r.t.is_multiple_of(every) || r.t == params.contacts;
        writer.write(&MetricsRecord {
            t: r.t,
            objective: loss(&objective, &r.theta_pushed, &data)?,
            dist_to_oracle: Some(r.theta_pushed.dist2(&oracle)),
            node_id: Some(r.node_id),
            simulated_time: r.sim_time,
            bytes_on_wire: bytes,
            theta: checkpoint.then(|| r.theta_pushed.clone()),
        })
    };
    let mut link = open_link(&config.transport, &theta_init)?;
    let transport: &mut dyn Transport = match &mut link {
        Link::Local(t) => t,
        Link::Tcp(t, _) => t,
    };
    let trace = run_operators_observed(
        &learners,
        &theta_init,
        &params.schedule,
        &params.mode,
        params.contacts,
        transport,
        &mut observe,
    )?;
    if let Link::Tcp(client, handle) = link {
        client.shutdown(0)?;
        handle.shutdown();
    }

    let theta = trace.final_theta().clone();
    write_json(&out_dir.join(MODEL_FILE), &json!({ "theta": theta, "oracle": oracle }))?;
    Ok(Summary {
        task: TaskKind::Paramserver,
        final_objective: Some(loss(&objective, &theta, &data)?),
        oracle_gap: Some(theta.dist2(&oracle)),
        total_bytes: trace.total_bytes(),
        contacts_per_node: trace.contacts_per_node(p.k()),
        details: json!({
            "step_size": step,
            "oracle_objective": loss(&objective, &oracle, &data)?,
            "max_staleness": trace.max_staleness(),
            "final_sim_time": trace.records.last().map(|r| r.sim_time),
        }),
    })
}

fn run_aggregate(config: &ExperimentConfig, out_dir: &Path) -> Result<Summary> {
    let (data, p) = load_partition(config)?;
    let objective = Objective::least_squares();
    let mut channel = Channel::new();
    let theta = aggregate_second_order_via(&p, &mut channel)?;
    let oracle = closed_form(&objective, &data)?;
    let bytes = channel.total_reals() * std::mem::size_of::<f64>();
    let final_objective = loss(&objective, &theta, &data)?;
    let mut writer = MetricsWriter::create(out_dir.join(METRICS_FILE))?;
    writer.write(&MetricsRecord {
        t: 1,
        objective: final_objective,
        dist_to_oracle: Some(theta.dist2(&oracle)),
        node_id: None,
        simulated_time: 0.0,
        bytes_on_wire: bytes,
        theta: Some(theta.clone()),
    })?;
    write_json(&out_dir.join(MODEL_FILE), &json!({ "theta": theta, "oracle": oracle }))?;
    let reals: Vec<usize> = (0..p.k()).map(|k| channel.reals_from(k)).collect();
    Ok(Summary {
        task: TaskKind::AggregateLs,
        final_objective: Some(final_objective),
        oracle_gap: Some(theta.dist2(&oracle)),
        total_bytes: bytes,
        contacts_per_node: vec![1; p.k()],
        details: json!({ "reals_per_node": reals }),
    })
}

fn run_gp(config: &ExperimentConfig, out_dir: &Path) -> Result<Summary> {
    let params = config.gp.as_ref().expect("validated");
    let (_, p) = load_partition(config)?;
    let committee = fit_experts(&p, &params.kernel_grid)?;
    let prior = committee.kernel.signal_variance;
    let rules: Vec<CombinationRule> = match &params.rules {
        Some(r) => r
            .iter()
            .cloned()
            .map(|mut r| {
                if matches!(r.kind, RuleKind::Bcm | RuleKind::Gbcm) && r.prior_var.is_none() {
                    r.prior_var = Some(prior);
                }
                r
            })
            .collect(),
        None => vec![
            CombinationRule::poe(),
            CombinationRule::gpoe(None),
            CombinationRule::bcm(prior),
            CombinationRule::gbcm(None, prior),
        ],
    };

    let points = params.predict.points()?;
    let dim = p.shard(0).dim();
    let mut w = csv::Writer::from_path(out_dir.join(PREDICTIONS_FILE)).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let mut header: Vec<String> = (0..dim).map(|d| format!("x{d}")).collect();
    header.extend(["rule", "mean", "variance"].map(String::from));
    w.write_record(&header).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for x in &points {
        Error::check_dim(dim, x.len())?;
        for rule in &rules {
            let pred = committee.predict(x, rule)?;
            let mut row: Vec<String> = x.iter().map(f64::to_string).collect();
            row.push(serde_json::to_value(rule.kind)?.as_str().unwrap_or_default().to_string());
            row.push(pred.mu.to_string());
            row.push(pred.var.to_string());
            w.write_record(&row).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
    }
    w.flush()?;

    let grid: Vec<serde_json::Value> = committee
        .grid_scores
        .iter()
        .map(|(k, s)| json!({ "kernel": k, "score": s }))
        .collect();
    let jitters: Vec<f64> = committee.experts.iter().map(|e| e.jitter()).collect();
    if jitters.iter().any(|j| *j > 0.0) {
        warn!("some experts needed diagonal jitter: {jitters:?}");
    }
    write_json(
        &out_dir.join(MODEL_FILE),
        &json!({ "kernel": committee.kernel, "score": committee.score, "grid": grid, "jitter": jitters }),
    )?;
    Ok(Summary {
        task: TaskKind::GpCommittee,
        final_objective: Some(-committee.score),
        oracle_gap: None,
        total_bytes: 0,
        contacts_per_node: vec![1; p.k()],
        details: json!({
            "kernel": committee.kernel,
            "log_marginal_likelihood": committee.score,
            "rules": rules.iter().map(|r| r.kind).collect::<Vec<_>>(),
            "predictions": points.len() * rules.len(),
        }),
    })
}

/// Agreement between two window assignments, unassigned points forming their
/// own class in the reference.
fn assignment_agreement(a: &[Option<usize>], reference: &[Option<usize>]) -> f64 {
    let unassigned = reference.iter().flatten().max().map_or(0, |m| m + 1);
    let labels: Vec<usize> = reference.iter().map(|r| r.unwrap_or(unassigned)).collect();
    label_agreement(a, &labels)
}

fn cluster_summary(task: TaskKind, model_objective: f64, details: serde_json::Value, bytes: usize, k: usize) -> Summary {
    Summary {
        task,
        final_objective: Some(model_objective),
        oracle_gap: None,
        total_bytes: bytes,
        contacts_per_node: vec![1; k],
        details,
    }
}

fn run_kwindows(config: &ExperimentConfig, out_dir: &Path) -> Result<Summary> {
    let params = config.kwindows.as_ref().expect("validated");
    let data = config.dataset.load(config.seed, &config.base_dir)?;
    let classes = data.classes();
    let central = kwindows(&data, &params.windows)?;
    let mut details = json!({ "windows": central.windows.len(), "unassigned": central.unassigned() });
    if let Some(labels) = &classes {
        details["label_agreement"] = json!(label_agreement(&central.assignment, labels));
    }
    if !params.distributed {
        write_json(&out_dir.join(MODEL_FILE), &central)?;
        return Ok(cluster_summary(TaskKind::Kwindows, central.objective, details, 0, 1));
    }

    let spec = config.split.expect("validated");
    let p = partition(&data, &spec)?;
    let mut channel = Channel::new();
    let model: ClusterModel = distributed_kwindows_via(&p, &params.windows, &mut channel)?;
    let bytes = channel.total_reals() * std::mem::size_of::<f64>();
    let mut dist = json!({
        "windows": model.windows.len(),
        "unassigned": model.unassigned(),
        "agreement_with_centralized": assignment_agreement(&model.assignment, &central.assignment),
        "reals_per_node": (0..p.k()).map(|k| channel.reals_from(k)).collect::<Vec<_>>(),
    });
    if let Some(labels) = &classes {
        dist["label_agreement"] = json!(label_agreement(&model.assignment, labels));
    }
    let details = json!({ "centralized": details, "distributed": dist });
    write_json(&out_dir.join(MODEL_FILE), &model)?;
    Ok(cluster_summary(TaskKind::Kwindows, model.objective, details, bytes, p.k()))
}

fn run_kmeans(config: &ExperimentConfig, out_dir: &Path) -> Result<Summary> {
    let params = config.kmeans.as_ref().expect("validated");
    let data = config.dataset.load(config.seed, &config.base_dir)?;
    let base = KMeansConfig {
        k: params.k,
        norm: params.norm,
        init: params.init.clone(),
        seed: config.seed,
        max_iters: params.max_iters,
    };
    let seeds = (0..params.restarts as u64).map(|i| config.seed.wrapping_add(i));
    let model = kmeans_best_of(&data, &base, seeds)?;
    let mut details = json!({ "iterations": model.iterations, "converged": model.converged });
    if let Some(labels) = data.classes() {
        let assignment: Vec<Option<usize>> = model.assignment.iter().copied().map(Some).collect();
        details["label_agreement"] = json!(label_agreement(&assignment, &labels));
    }
    write_json(&out_dir.join(MODEL_FILE), &model)?;
    Ok(cluster_summary(TaskKind::Kmeans, model.objective, details, 0, 1))
}

//! Deterministic simulation of nodes contacting the swap server.
//!
//! Contact order comes from the [`Schedule`]. In serialized mode every
//! contact reads the current parameter, applies the node's operator and
//! pushes the result, so `θ_t = F^(S_t)(θ_{t-1})` holds exactly. In
//! overlapped mode a node pushes the operator applied to whatever it received
//! at its previous contact, while other nodes contact in between; the delay
//! model places contacts on a simulated clock.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schedule::Schedule;
use super::server::SwapServer;
use super::transport::{InProcess, Transport};
use crate::data::{seeded_rng, Partition};
use crate::error::{Error, Result};
use crate::learners::{Learner, Objective, Theta, UpdateOperator, UpdatePolicy};

/// Compute duration of one local update, in simulated time units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Delay {
    Constant { duration: f64 },
    Uniform { low: f64, high: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayModel {
    /// One entry per node.
    pub per_node: Vec<Delay>,
    #[serde(default)]
    pub seed: u64,
}

impl DelayModel {
    pub fn constant(k: usize, duration: f64) -> Self {
        Self {
            per_node: vec![Delay::Constant { duration }; k],
            seed: 0,
        }
    }

    pub fn uniform(k: usize, low: f64, high: f64, seed: u64) -> Self {
        Self {
            per_node: vec![Delay::Uniform { low, high }; k],
            seed,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        Error::check_dim(k, self.per_node.len())?;
        for d in &self.per_node {
            let ok = match *d {
                Delay::Constant { duration } => duration >= 0.0 && duration.is_finite(),
                Delay::Uniform { low, high } => low >= 0.0 && high >= low && high.is_finite(),
            };
            if !ok {
                return Err(Error::invalid(format!("invalid delay {d:?}")));
            }
        }
        Ok(())
    }

    fn sample(&self, node: usize, rng: &mut ChaCha8Rng) -> f64 {
        match self.per_node[node] {
            Delay::Constant { duration } => duration,
            Delay::Uniform { low, high } if high > low => rng.random_range(low..high),
            Delay::Uniform { low, .. } => low,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExecutionMode {
    Serialized,
    Overlapped { delays: DelayModel },
}

/// One accepted push.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u64,
    pub node_id: usize,
    /// Log index of the parameter the pushed value was computed from.
    pub base_t: u64,
    pub theta_pushed: Theta,
    pub theta_returned: Theta,
    pub sim_time: f64,
    #[serde(skip)]
    pub wallclock: Duration,
    pub bytes_sent: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub theta_init: Theta,
    pub records: Vec<TraceRecord>,
    /// What each node held after its last contact.
    pub node_thetas: Vec<Theta>,
}

impl Trace {
    /// Server parameter after the last push.
    pub fn final_theta(&self) -> &Theta {
        self.records
            .last()
            .map(|r| &r.theta_pushed)
            .unwrap_or(&self.theta_init)
    }

    /// Equality ignoring wall-clock and byte counts.
    pub fn same_protocol(&self, other: &Trace) -> bool {
        self.theta_init == other.theta_init
            && self.node_thetas == other.node_thetas
            && self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.t == b.t
                    && a.node_id == b.node_id
                    && a.base_t == b.base_t
                    && a.theta_pushed == b.theta_pushed
                    && a.theta_returned == b.theta_returned
                    && a.sim_time == b.sim_time
            })
    }

    pub fn contacts_per_node(&self, k: usize) -> Vec<usize> {
        let mut counts = vec![0; k];
        for r in &self.records {
            counts[r.node_id] += 1;
        }
        counts
    }

    pub fn total_bytes(&self) -> usize {
        self.records.iter().map(|r| r.bytes_sent).sum()
    }

    /// Largest `t − base_t` over the run; 1 means no staleness.
    pub fn max_staleness(&self) -> u64 {
        self.records.iter().map(|r| r.t - r.base_t).max().unwrap_or(0)
    }
}

/// Runs `total_contacts` pushes of `operators` against `transport`.
///
/// `operators[k]` is node `k`'s update operator. The server behind the
/// transport must be freshly initialized to `theta_init`.
pub fn run_operators<O: UpdateOperator>(
    operators: &[O],
    theta_init: &Theta,
    schedule: &Schedule,
    mode: &ExecutionMode,
    total_contacts: u64,
    transport: &mut dyn Transport,
) -> Result<Trace> {
    run_operators_observed(operators, theta_init, schedule, mode, total_contacts, transport, &mut |_| Ok(()))
}

/// [`run_operators`], calling `observe` on every record as soon as its push
/// is accepted. An error from `observe` aborts the run.
pub fn run_operators_observed<O: UpdateOperator>(
    operators: &[O],
    theta_init: &Theta,
    schedule: &Schedule,
    mode: &ExecutionMode,
    total_contacts: u64,
    transport: &mut dyn Transport,
    observe: &mut dyn FnMut(&TraceRecord) -> Result<()>,
) -> Result<Trace> {
    let k = operators.len();
    if schedule.k() != k {
        return Err(Error::invalid(format!(
            "schedule covers {} nodes but {k} operators were given",
            schedule.k()
        )));
    }
    if total_contacts == 0 {
        return Err(Error::invalid("total_contacts must be at least 1"));
    }
    let mut contacts = schedule.contacts()?;
    let started = Instant::now();
    let mut records = Vec::with_capacity(total_contacts as usize);

    match mode {
        ExecutionMode::Serialized => {
            let mut node_thetas = vec![theta_init.clone(); k];
            for step in 1..=total_contacts {
                let node = contacts.next().expect("contact stream is infinite");
                let base = transport.pull(node)?;
                let pushed = operators[node].apply(&base.theta)?;
                let reply = transport.push_swap(node, &pushed)?;
                if reply.t != base.t + 1 || reply.theta != base.theta {
                    return Err(Error::Protocol(format!(
                        "serialized contact of node {node} was interleaved (t {} -> {})",
                        base.t, reply.t
                    )));
                }
                node_thetas[node] = pushed.clone();
                let record = TraceRecord {
                    t: reply.t,
                    node_id: node,
                    base_t: base.t,
                    theta_pushed: pushed,
                    theta_returned: reply.theta,
                    sim_time: step as f64,
                    wallclock: started.elapsed(),
                    bytes_sent: base.bytes + reply.bytes,
                };
                observe(&record)?;
                records.push(record);
            }
            Ok(Trace {
                theta_init: theta_init.clone(),
                records,
                node_thetas,
            })
        }
        ExecutionMode::Overlapped { delays } => {
            delays.validate(k)?;
            let mut rng = seeded_rng(delays.seed);
            let mut clock = 0.0f64;
            // Every node pulls θ_0 at time zero and starts computing.
            let mut bases = Vec::with_capacity(k);
            let mut ready_at = Vec::with_capacity(k);
            let mut pull_bytes = vec![0usize; k];
            for node in 0..k {
                let reply = transport.pull(node)?;
                pull_bytes[node] = reply.bytes;
                bases.push((reply.theta, reply.t));
                ready_at.push(delays.sample(node, &mut rng));
            }
            for _ in 0..total_contacts {
                let node = contacts.next().expect("contact stream is infinite");
                clock = clock.max(ready_at[node]);
                let (base, base_t) = &bases[node];
                let pushed = operators[node].apply(base)?;
                let reply = transport.push_swap(node, &pushed)?;
                let record = TraceRecord {
                    t: reply.t,
                    node_id: node,
                    base_t: *base_t,
                    theta_pushed: pushed,
                    theta_returned: reply.theta.clone(),
                    sim_time: clock,
                    wallclock: started.elapsed(),
                    bytes_sent: reply.bytes + std::mem::take(&mut pull_bytes[node]),
                };
                observe(&record)?;
                records.push(record);
                bases[node] = (reply.theta, reply.t - 1);
                ready_at[node] = clock + delays.sample(node, &mut rng);
            }
            Ok(Trace {
                theta_init: theta_init.clone(),
                records,
                node_thetas: bases.into_iter().map(|(theta, _)| theta).collect(),
            })
        }
    }
}

/// Builds one learner per shard and runs them from `θ = 0` on a fresh
/// in-process server.
///
/// Shard `k` penalizes with weight `λ N_k / N`, so the shard objectives sum to
/// the pooled objective.
pub fn run_schedule(
    partition: &Partition,
    objective: &Objective,
    policy: &UpdatePolicy,
    schedule: &Schedule,
    mode: &ExecutionMode,
    total_contacts: u64,
) -> Result<Trace> {
    let learners = node_learners(partition, objective, policy);
    let theta_init = Theta::zeros(partition.shard(0).dim());
    let mut transport = InProcess::new(Arc::new(SwapServer::new(theta_init.clone())));
    run_operators(&learners, &theta_init, schedule, mode, total_contacts, &mut transport)
}

/// The per-node learners used by [`run_schedule`].
pub fn node_learners<'a>(
    partition: &'a Partition,
    objective: &Objective,
    policy: &UpdatePolicy,
) -> Vec<Learner<'a>> {
    let total = partition.total_len() as f64;
    partition
        .shards()
        .iter()
        .map(|shard| {
            let share = shard.len() as f64 / total;
            Learner::new(objective.with_penalty_share(share), shard, *policy)
        })
        .collect()
}

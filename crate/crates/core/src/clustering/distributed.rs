//! Naive distributed k-windows.
//!
//! Each node runs capture/recenter and enlargement on its own shard and sends
//! only window summaries. The server merges every pair of overlapping boxes,
//! however few points they share, and sends the merged windows back so that
//! nodes can label their own points.

use std::thread;

use super::kwindows::{finish, kwindows_enlarge, kwindows_phase1, seed_centers};
use super::{ClusterModel, KWindowsConfig, Window};
use crate::channel::{AsReals, Channel, WireMessage};
use crate::data::Partition;
use crate::error::{Error, Result};

/// What a node reveals about one of its windows: `2n + 2` reals.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSummary {
    pub center: Vec<f64>,
    pub weights: Vec<f64>,
    pub radius: f64,
    pub cardinality: usize,
}

impl From<&Window> for WindowSummary {
    fn from(w: &Window) -> Self {
        Self {
            center: w.center.clone(),
            weights: w.weights.clone(),
            radius: w.radius,
            cardinality: w.cardinality,
        }
    }
}

impl From<&WindowSummary> for Window {
    fn from(s: &WindowSummary) -> Self {
        Window {
            center: s.center.clone(),
            radius: s.radius,
            weights: s.weights.clone(),
            cardinality: s.cardinality,
        }
    }
}

impl WireMessage for WindowSummary {
    fn wire_reals(&self) -> usize {
        self.center.len() + self.weights.len() + 2
    }
}

impl AsReals for WindowSummary {
    fn reals(&self) -> Vec<f64> {
        let mut v = self.center.clone();
        v.extend_from_slice(&self.weights);
        v.push(self.radius);
        v.push(self.cardinality as f64);
        v
    }
}

/// Repeatedly replaces the first overlapping pair by its merged box until no
/// two windows overlap. Cardinalities add up.
pub fn naive_merge(mut windows: Vec<Window>) -> Vec<Window> {
    'scan: loop {
        for i in 0..windows.len() {
            for j in i + 1..windows.len() {
                if windows[i].overlaps(&windows[j]) {
                    windows[i] = windows[i].merged_with(&windows[j]);
                    windows.remove(j);
                    continue 'scan;
                }
            }
        }
        return windows;
    }
}

fn local_windows(shard: &crate::data::Dataset, config: &KWindowsConfig) -> Result<Vec<WindowSummary>> {
    let k = config.k_init.min(shard.len());
    let centers = seed_centers(shard, k, config.seed)?;
    let p1 = kwindows_phase1(shard, config, &centers)?;
    let p2 = kwindows_enlarge(&p1, shard, config)?;
    Ok(p2
        .windows
        .iter()
        .zip(&p2.frozen)
        .filter(|(w, frozen)| !**frozen && w.cardinality > 0)
        .map(|(w, _)| WindowSummary::from(w))
        .collect())
}

/// Runs the distributed pipeline, recording every node upload on `channel`.
///
/// The returned model is indexed like the pooled dataset (source order), with
/// cardinalities and objective summed over the nodes' own counts.
pub fn distributed_kwindows_via(
    partition: &Partition,
    config: &KWindowsConfig,
    channel: &mut Channel<Vec<WindowSummary>>,
) -> Result<ClusterModel> {
    config.validate()?;
    if partition.shards().iter().any(|s| s.is_empty()) {
        return Err(Error::EmptyDataset);
    }
    let uploads: Vec<Result<Vec<WindowSummary>>> = thread::scope(|scope| {
        let handles: Vec<_> = partition
            .shards()
            .iter()
            .map(|shard| scope.spawn(move || local_windows(shard, config)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::invalid("node worker panicked"))))
            .collect()
    });
    for (node, upload) in uploads.into_iter().enumerate() {
        channel.send(node, upload?);
    }

    let received: Vec<Window> = channel
        .messages()
        .iter()
        .flat_map(|e| e.message.iter().map(Window::from))
        .collect();
    let merged = naive_merge(received);

    let total = partition.total_len();
    let mut assignment = vec![None; total];
    let mut memberships = vec![Vec::new(); merged.len()];
    let mut objective = 0.0;
    for (shard, provenance) in partition.shards().iter().zip(partition.provenance()) {
        let local = finish(shard, merged.clone(), vec![false; merged.len()]);
        objective += local.objective;
        for (i, a) in local.assignment.iter().enumerate() {
            assignment[provenance[i]] = *a;
        }
        for (k, m) in local.memberships.iter().enumerate() {
            memberships[k].extend(m.iter().map(|&i| provenance[i]));
        }
    }
    let mut windows = merged;
    for (w, m) in windows.iter_mut().zip(memberships.iter_mut()) {
        m.sort_unstable();
        w.cardinality = m.len();
    }
    let frozen = vec![false; windows.len()];
    Ok(ClusterModel {
        windows,
        assignment,
        objective,
        memberships,
        frozen,
    })
}

pub fn distributed_kwindows(partition: &Partition, config: &KWindowsConfig) -> Result<ClusterModel> {
    distributed_kwindows_via(partition, config, &mut Channel::new())
}

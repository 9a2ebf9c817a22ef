//! Hard k-means, k-windows and the orthogonal range index behind them.
//!
//! A window is an axis-aligned box written as a weighted ℓ∞ ball: `x` is
//! inside when `max_d w_d |x_d − c_d| < r`, so the half-width along `d` is
//! `r / w_d`. Enlarging a dimension divides its weight.

pub mod distributed;
pub mod kmeans;
pub mod kwindows;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use distributed::{distributed_kwindows, distributed_kwindows_via, naive_merge, WindowSummary};
pub use kmeans::{kmeans, kmeans_best_of, KMeansConfig, KMeansInit, KMeansModel, Norm};
pub use kwindows::{
    default_radius, kwindows, kwindows_enlarge, kwindows_merge, kwindows_phase1, seed_centers,
    KWindowsConfig,
};
pub use tree::{range_query_linear, RangeTree};

/// `max_d w_d |x_d − c_d|`.
pub fn weighted_linf_dist(x: &[f64], c: &[f64], w: &[f64]) -> Result<f64> {
    Error::check_dim(x.len(), c.len())?;
    Error::check_dim(x.len(), w.len())?;
    if w.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("weights must be positive"));
    }
    Ok(weighted_linf(x, c, w))
}

pub(crate) fn weighted_linf(x: &[f64], c: &[f64], w: &[f64]) -> f64 {
    x.iter()
        .zip(c)
        .zip(w)
        .map(|((xd, cd), wd)| wd * (xd - cd).abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub center: Vec<f64>,
    #[serde(rename = "r")]
    pub radius: f64,
    pub weights: Vec<f64>,
    pub cardinality: usize,
}

impl Window {
    pub fn new(center: Vec<f64>, radius: f64, weights: Vec<f64>) -> Self {
        debug_assert_eq!(center.len(), weights.len());
        Self {
            center,
            radius,
            weights,
            cardinality: 0,
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        weighted_linf(x, &self.center, &self.weights) < self.radius
    }

    pub fn dist(&self, x: &[f64]) -> f64 {
        weighted_linf(x, &self.center, &self.weights)
    }

    pub fn half_width(&self, d: usize) -> f64 {
        self.radius / self.weights[d]
    }

    /// Whether the two open boxes intersect.
    pub fn overlaps(&self, other: &Window) -> bool {
        (0..self.center.len()).all(|d| {
            (self.center[d] - other.center[d]).abs() < self.half_width(d) + other.half_width(d)
        })
    }

    /// Box centered at the cardinality-weighted mean of both centers that
    /// just contains both boxes.
    pub(crate) fn merged_with(&self, other: &Window) -> Window {
        let total = (self.cardinality + other.cardinality).max(1) as f64;
        let (wa, wb) = if self.cardinality + other.cardinality == 0 {
            (0.5, 0.5)
        } else {
            (self.cardinality as f64 / total, other.cardinality as f64 / total)
        };
        let dim = self.center.len();
        let mut center = Vec::with_capacity(dim);
        let mut weights = Vec::with_capacity(dim);
        for d in 0..dim {
            let lo = (self.center[d] - self.half_width(d)).min(other.center[d] - other.half_width(d));
            let hi = (self.center[d] + self.half_width(d)).max(other.center[d] + other.half_width(d));
            let c = wa * self.center[d] + wb * other.center[d];
            let half = (c - lo).max(hi - c);
            center.push(c);
            weights.push(self.radius / half);
        }
        Window {
            center,
            radius: self.radius,
            weights,
            cardinality: self.cardinality + other.cardinality,
        }
    }
}

/// Result of k-windows: final windows and a per-point assignment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub windows: Vec<Window>,
    /// Window id per point; `None` when no window contains the point.
    pub assignment: Vec<Option<usize>>,
    /// `Σ_k Σ_{x ∈ window k} ‖x − c_k‖₂²`.
    pub objective: f64,
    /// Captured point indices per window.
    #[serde(skip)]
    pub memberships: Vec<Vec<usize>>,
    /// Windows that captured nothing and were left in place.
    #[serde(skip)]
    pub frozen: Vec<bool>,
}

impl ClusterModel {
    pub fn unassigned(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_none()).count()
    }
}

/// Fraction of points whose assigned cluster maps to their true label under
/// the best one-to-one matching of clusters to labels. Unassigned points
/// count as mismatches.
pub fn label_agreement(assignment: &[Option<usize>], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 1.0;
    }
    let n_clusters = assignment.iter().flatten().map(|&c| c + 1).max().unwrap_or(0);
    let n_labels = labels.iter().map(|&l| l + 1).max().unwrap_or(0);
    let mut counts = vec![vec![0usize; n_labels]; n_clusters];
    for (a, &l) in assignment.iter().zip(labels) {
        if let Some(c) = a {
            counts[*c][l] += 1;
        }
    }
    let best = best_matching(&counts, 0, &mut vec![false; n_labels]);
    best as f64 / labels.len() as f64
}

fn best_matching(counts: &[Vec<usize>], cluster: usize, used: &mut Vec<bool>) -> usize {
    if cluster == counts.len() {
        return 0;
    }
    let mut best = best_matching(counts, cluster + 1, used);
    for l in 0..used.len() {
        if !used[l] && counts[cluster][l] > 0 {
            used[l] = true;
            best = best.max(counts[cluster][l] + best_matching(counts, cluster + 1, used));
            used[l] = false;
        }
    }
    best
}

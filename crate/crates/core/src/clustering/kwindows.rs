//! The three k-windows phases: capture and recenter, per-dimension
//! enlargement, overlap-based merging.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::tree::RangeTree;
use super::{ClusterModel, Window};
use crate::data::{seeded_rng, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{dist2, dist_inf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KWindowsConfig {
    pub k_init: usize,
    #[serde(rename = "r")]
    pub radius: f64,
    /// Relative growth of one half-width per enlargement step.
    #[serde(default = "defaults::enlarge_step")]
    pub enlarge_step: f64,
    /// An enlargement along one dimension is kept when the newly captured
    /// points number at least `enlarge_threshold · enlarge_step · card_old`
    /// (and at least one), i.e. the added slab is at least this dense
    /// relative to the window.
    #[serde(default = "defaults::enlarge_threshold")]
    pub enlarge_threshold: f64,
    #[serde(default = "defaults::merge_overlap_ratio")]
    pub merge_overlap_ratio: f64,
    #[serde(default = "defaults::center_tol")]
    pub center_tol: f64,
    #[serde(default = "defaults::max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn enlarge_step() -> f64 {
        0.2
    }
    pub fn enlarge_threshold() -> f64 {
        0.05
    }
    pub fn merge_overlap_ratio() -> f64 {
        0.2
    }
    pub fn center_tol() -> f64 {
        1e-9
    }
    pub fn max_iters() -> usize {
        100
    }
}

impl KWindowsConfig {
    pub fn new(k_init: usize, radius: f64, seed: u64) -> Self {
        Self {
            k_init,
            radius,
            enlarge_step: defaults::enlarge_step(),
            enlarge_threshold: defaults::enlarge_threshold(),
            merge_overlap_ratio: defaults::merge_overlap_ratio(),
            center_tol: defaults::center_tol(),
            max_iters: defaults::max_iters(),
            seed,
        }
    }

    /// Three windows per expected cluster, radius from [`default_radius`].
    pub fn for_clusters(data: &Dataset, expected_clusters: usize, seed: u64) -> Result<Self> {
        Ok(Self::new(3 * expected_clusters, default_radius(data)?, seed))
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_init == 0 {
            return Err(Error::invalid("k_init must be at least 1"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid(format!("radius must be positive, got {}", self.radius)));
        }
        if !(self.enlarge_step > 0.0 && self.enlarge_step.is_finite()) {
            return Err(Error::invalid("enlarge_step must be positive"));
        }
        for (name, v) in [
            ("enlarge_threshold", self.enlarge_threshold),
            ("merge_overlap_ratio", self.merge_overlap_ratio),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::invalid(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        if !(self.center_tol >= 0.0) {
            return Err(Error::invalid("center_tol must be nonnegative"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

/// `0.5 × median nearest-neighbor distance × √n`, over at most 1000 sampled points.
pub fn default_radius(data: &Dataset) -> Result<f64> {
    if data.len() < 2 {
        return Err(Error::invalid("need at least two points to pick a radius"));
    }
    let step = data.len().div_ceil(1000);
    let mut nn: Vec<f64> = (0..data.len())
        .step_by(step)
        .map(|i| {
            data.rows()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, y)| dist2(data.row(i), y))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    let median = nn[nn.len() / 2];
    let r = 0.5 * median * (data.dim() as f64).sqrt();
    if r > 0.0 {
        Ok(r)
    } else {
        Err(Error::invalid("points coincide; cannot pick a radius"))
    }
}

/// `k` distinct data points chosen with `seed`, in index order.
pub fn seed_centers(data: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if k > data.len() {
        return Err(Error::invalid(format!("cannot pick {k} centers from {} points", data.len())));
    }
    let mut picks = sample(&mut seeded_rng(seed), data.len(), k).into_vec();
    picks.sort_unstable();
    Ok(picks.into_iter().map(|i| data.row(i).to_vec()).collect())
}

fn mean_of(data: &Dataset, members: &[usize]) -> Vec<f64> {
    let mut sum = vec![0.0; data.dim()];
    for &i in members {
        for (s, v) in sum.iter_mut().zip(data.row(i)) {
            *s += v;
        }
    }
    sum.iter().map(|s| s / members.len() as f64).collect()
}

/// Capture and recenter until the center moves less than the tolerance.
/// Returns `None` when the window captures nothing.
fn settle(tree: &RangeTree, mut window: Window, config: &KWindowsConfig) -> Option<Window> {
    for _ in 0..config.max_iters {
        let members = tree.range_query(&window);
        if members.is_empty() {
            return None;
        }
        let next = mean_of(tree.data(), &members);
        let moved = dist2(&next, &window.center);
        window.center = next;
        if moved < config.center_tol {
            break;
        }
    }
    window.cardinality = tree.range_query(&window).len();
    Some(window)
}

/// Recounts memberships and assigns each point to the containing window
/// whose weighted ℓ∞ distance is smallest (lowest index on ties).
pub(crate) fn finish(data: &Dataset, mut windows: Vec<Window>, frozen: Vec<bool>) -> ClusterModel {
    let tree = RangeTree::build(data);
    let memberships: Vec<Vec<usize>> = windows.iter().map(|w| tree.range_query(w)).collect();
    let mut best: Vec<Option<(usize, f64)>> = vec![None; data.len()];
    let mut objective = 0.0;
    for (k, (w, members)) in windows.iter_mut().zip(&memberships).enumerate() {
        w.cardinality = members.len();
        for &i in members {
            let x = data.row(i);
            objective += dist2(x, &w.center).powi(2);
            let d = w.dist(x);
            if best[i].is_none_or(|(_, b)| d < b) {
                best[i] = Some((k, d));
            }
        }
    }
    ClusterModel {
        windows,
        assignment: best.into_iter().map(|b| b.map(|(k, _)| k)).collect(),
        objective,
        memberships,
        frozen,
    }
}

/// Phase 1: windows of radius `r` and unit weights at `init_centers`, each
/// moved to the mean of its captured points until it settles. A window that
/// captures nothing is left in place and flagged as frozen.
pub fn kwindows_phase1(
    data: &Dataset,
    config: &KWindowsConfig,
    init_centers: &[Vec<f64>],
) -> Result<ClusterModel> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for c in init_centers {
        Error::check_dim(data.dim(), c.len())?;
    }
    let tree = RangeTree::build(data);
    let mut windows = Vec::with_capacity(init_centers.len());
    let mut frozen = Vec::with_capacity(init_centers.len());
    for c in init_centers {
        let w = Window::new(c.clone(), config.radius, vec![1.0; data.dim()]);
        match settle(&tree, w.clone(), config) {
            Some(settled) => {
                windows.push(settled);
                frozen.push(false);
            }
            None => {
                windows.push(w);
                frozen.push(true);
            }
        }
    }
    Ok(finish(data, windows, frozen))
}

fn data_extent(data: &Dataset) -> Vec<f64> {
    let mut lo = vec![f64::INFINITY; data.dim()];
    let mut hi = vec![f64::NEG_INFINITY; data.dim()];
    for x in data.rows() {
        for (d, &v) in x.iter().enumerate() {
            lo[d] = lo[d].min(v);
            hi[d] = hi[d].max(v);
        }
    }
    lo.iter().zip(&hi).map(|(a, b)| b - a).collect()
}

/// Phase 2: grows each window one dimension at a time by `1 + e`. A step is
/// kept when the larger box, at the same center, adds enough new points;
/// otherwise it is reverted and that dimension stops. Kept steps are followed
/// by re-settling unless that would lose points.
pub fn kwindows_enlarge(model: &ClusterModel, data: &Dataset, config: &KWindowsConfig) -> Result<ClusterModel> {
    config.validate()?;
    let tree = RangeTree::build(data);
    let extent = data_extent(data);
    let growth = 1.0 + config.enlarge_step;
    let mut windows = Vec::with_capacity(model.windows.len());
    for (k, window) in model.windows.iter().enumerate() {
        Error::check_dim(data.dim(), window.center.len())?;
        let mut current = window.clone();
        current.cardinality = tree.range_query(&current).len();
        if model.frozen.get(k).copied().unwrap_or(false) || current.cardinality == 0 {
            windows.push(current);
            continue;
        }
        let caps: Vec<u32> = (0..data.dim())
            .map(|d| {
                let ratio = extent[d] / current.half_width(d);
                if ratio > 1.0 {
                    (ratio.ln() / growth.ln()).ceil() as u32
                } else {
                    0
                }
            })
            .collect();
        let mut steps = vec![0u32; data.dim()];
        let mut stopped = vec![false; data.dim()];
        while stopped.iter().any(|s| !s) {
            for d in 0..data.dim() {
                if stopped[d] {
                    continue;
                }
                if steps[d] >= caps[d] {
                    stopped[d] = true;
                    continue;
                }
                let mut candidate = current.clone();
                candidate.weights[d] /= growth;
                candidate.cardinality = tree.range_query(&candidate).len();
                let added = candidate.cardinality - current.cardinality;
                if (added as f64) < config.enlarge_threshold * config.enlarge_step * current.cardinality as f64
                    || added == 0
                {
                    stopped[d] = true;
                    continue;
                }
                steps[d] += 1;
                current = match settle(&tree, candidate.clone(), config) {
                    Some(c) if c.cardinality >= candidate.cardinality => c,
                    _ => candidate,
                };
            }
        }
        windows.push(current);
    }
    Ok(finish(data, windows, model.frozen.clone()))
}

fn count_common(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn max_half_width(w: &Window) -> f64 {
    (0..w.center.len()).map(|d| w.half_width(d)).fold(0.0, f64::max)
}

/// Phase 3: merges window pairs whose shared points make up at least
/// `merge_overlap_ratio` of the smaller window, until no pair qualifies.
/// Windows holding no points are dropped.
pub fn kwindows_merge(model: &ClusterModel, data: &Dataset, config: &KWindowsConfig) -> Result<ClusterModel> {
    config.validate()?;
    let tree = RangeTree::build(data);
    let mut windows = Vec::new();
    let mut members = Vec::new();
    for w in &model.windows {
        Error::check_dim(data.dim(), w.center.len())?;
        let m = tree.range_query(w);
        if !m.is_empty() {
            let mut w = w.clone();
            w.cardinality = m.len();
            windows.push(w);
            members.push(m);
        }
    }

    'scan: loop {
        for i in 0..windows.len() {
            for j in i + 1..windows.len() {
                let (a, b) = (&windows[i], &windows[j]);
                if !(dist_inf(&a.center, &b.center) < 2.0 * max_half_width(a).max(max_half_width(b))) {
                    continue;
                }
                let common = count_common(&members[i], &members[j]);
                let smaller = a.cardinality.min(b.cardinality);
                if common > 0 && common as f64 >= config.merge_overlap_ratio * smaller as f64 {
                    let mut merged = a.merged_with(b);
                    let m = tree.range_query(&merged);
                    merged.cardinality = m.len();
                    windows[i] = merged;
                    members[i] = m;
                    windows.remove(j);
                    members.remove(j);
                    continue 'scan;
                }
            }
        }
        break;
    }
    let frozen = vec![false; windows.len()];
    Ok(finish(data, windows, frozen))
}

/// All three phases from `k_init` seeded data points.
pub fn kwindows(data: &Dataset, config: &KWindowsConfig) -> Result<ClusterModel> {
    config.validate()?;
    let centers = seed_centers(data, config.k_init, config.seed)?;
    let p1 = kwindows_phase1(data, config, &centers)?;
    let p2 = kwindows_enlarge(&p1, data, config)?;
    kwindows_merge(&p2, data, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::label_agreement;
    use crate::data::{generate_clusters, ClusterShape};

    fn square_cloud() -> Dataset {
        let mut rows = Vec::new();
        for i in -2..=2 {
            for j in -2..=2 {
                rows.push(vec![1.0 + 0.1 * i as f64, 2.0 + 0.1 * j as f64]);
            }
        }
        Dataset::from_rows(&rows, None).unwrap()
    }

    #[test]
    fn phase1_centers_on_symmetric_cloud() {
        let d = square_cloud();
        let cfg = KWindowsConfig::new(1, 1.0, 0);
        let m = kwindows_phase1(&d, &cfg, &[vec![1.3, 1.8]]).unwrap();
        assert!(dist2(&m.windows[0].center, &[1.0, 2.0]) < 1e-9);
        assert_eq!(m.windows[0].cardinality, 25);
        assert!(!m.frozen[0]);
    }

    #[test]
    fn empty_window_is_frozen() {
        let d = square_cloud();
        let cfg = KWindowsConfig::new(1, 0.5, 0);
        let m = kwindows_phase1(&d, &cfg, &[vec![10.0, 10.0]]).unwrap();
        assert!(m.frozen[0]);
        assert_eq!(m.windows[0].center, vec![10.0, 10.0]);
        assert_eq!(m.unassigned(), 25);
    }

    #[test]
    fn phase1_on_two_boxes_finds_box_means() {
        let d = generate_clusters(&[vec![0.0, 0.0], vec![5.0, 5.0]], 1.0, 200, ClusterShape::UniformBox, 3).unwrap();
        let labels = d.classes().unwrap();
        let cfg = KWindowsConfig::new(2, 1.0, 0);
        let m = kwindows_phase1(&d, &cfg, &[vec![-1.0, -1.0], vec![6.0, 6.0]]).unwrap();
        for (k, w) in m.windows.iter().enumerate() {
            let idx: Vec<usize> = (0..d.len()).filter(|&i| labels[i] == k).collect();
            let oracle = mean_of(&d, &idx);
            assert!(dist2(&w.center, &oracle) < 0.1, "{:?} vs {:?}", w.center, oracle);
        }
    }

    #[test]
    fn enlarging_a_full_window_changes_nothing() {
        let d = square_cloud();
        let cfg = KWindowsConfig::new(1, 1.0, 0);
        let p1 = kwindows_phase1(&d, &cfg, &[vec![1.0, 2.0]]).unwrap();
        let p2 = kwindows_enlarge(&p1, &d, &cfg).unwrap();
        assert_eq!(p2.windows[0].cardinality, 25);
        assert_eq!(p2.windows[0].weights, vec![1.0, 1.0]);
    }

    #[test]
    fn enlargement_covers_a_wide_uniform_cluster() {
        let d = generate_clusters(&[vec![0.0, 0.0]], 2.0, 400, ClusterShape::UniformBox, 9).unwrap();
        let cfg = KWindowsConfig::new(1, 0.5, 0);
        let p1 = kwindows_phase1(&d, &cfg, &[vec![0.0, 0.0]]).unwrap();
        let p2 = kwindows_enlarge(&p1, &d, &cfg).unwrap();
        assert!(p2.windows[0].cardinality >= p1.windows[0].cardinality);
        assert!(p2.windows[0].cardinality as f64 >= 0.95 * 400.0, "{}", p2.windows[0].cardinality);
    }

    #[test]
    fn identical_windows_merge_and_disjoint_ones_do_not() {
        let d = square_cloud();
        let cfg = KWindowsConfig::new(2, 1.0, 0);
        let p1 = kwindows_phase1(&d, &cfg, &[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(kwindows_merge(&p1, &d, &cfg).unwrap().windows.len(), 1);

        let rows = vec![vec![0.0], vec![0.1], vec![3.0], vec![3.1]];
        let d = Dataset::from_rows(&rows, None).unwrap();
        let cfg = KWindowsConfig::new(2, 1.0, 0);
        let p1 = kwindows_phase1(&d, &cfg, &[vec![0.0], vec![3.0]]).unwrap();
        let m = kwindows_merge(&p1, &d, &cfg).unwrap();
        assert_eq!(m.windows.len(), 2);
        assert_eq!(m.assignment, vec![Some(0), Some(0), Some(1), Some(1)]);
    }

    #[test]
    fn over_seeded_clusters_collapse_to_two() {
        let d = generate_clusters(&[vec![0.0, 0.0], vec![10.0, 0.0]], 0.5, 100, ClusterShape::Gaussian, 1).unwrap();
        let cfg = KWindowsConfig::new(6, 1.0, 2);
        let m = kwindows(&d, &cfg).unwrap();
        assert_eq!(m.windows.len(), 2);
        assert!(label_agreement(&m.assignment, &d.classes().unwrap()) >= 0.95);
    }

    #[test]
    fn config_validation() {
        let mut cfg = KWindowsConfig::new(2, 1.0, 0);
        cfg.validate().unwrap();
        cfg.enlarge_threshold = 1.5;
        assert!(cfg.validate().is_err());
        let cfg = KWindowsConfig::new(2, 0.0, 0);
        assert!(cfg.validate().is_err());
    }
}

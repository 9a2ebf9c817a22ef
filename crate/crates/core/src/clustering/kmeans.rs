//! Hard k-means under the ℓ2 or ℓ∞ norm.
//!
//! Assignment ties go to the lowest center index. The ℓ2 update is the
//! cluster mean; the ℓ∞ update is the per-dimension midrange. A center that
//! loses all its points is moved onto the point farthest from its own center.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::data::{seeded_rng, Dataset};
use crate::error::{Error, Result};
use crate::linalg::dist_inf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Norm {
    L2,
    Linf,
}

impl Norm {
    /// Per-point cost: squared distance for ℓ2, plain distance for ℓ∞.
    pub fn cost(self, x: &[f64], c: &[f64]) -> f64 {
        match self {
            Norm::L2 => x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum(),
            Norm::Linf => dist_inf(x, c),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KMeansInit {
    SeededRandomPoints,
    Provided(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub norm: Norm,
    pub init: KMeansInit,
    pub seed: u64,
    pub max_iters: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, norm: Norm, seed: u64) -> Self {
        Self {
            k,
            norm,
            init: KMeansInit::SeededRandomPoints,
            seed,
            max_iters: 300,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub objective: f64,
    /// Objective after every center update.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn nearest(x: &[f64], centers: &[Vec<f64>], norm: Norm) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centers.iter().enumerate() {
        let cost = norm.cost(x, c);
        if cost < best.1 {
            best = (j, cost);
        }
    }
    best
}

fn objective(data: &Dataset, centers: &[Vec<f64>], assignment: &[usize], norm: Norm) -> f64 {
    data.rows()
        .zip(assignment)
        .map(|(x, &a)| norm.cost(x, &centers[a]))
        .sum()
}

fn initial_centers(data: &Dataset, config: &KMeansConfig) -> Result<Vec<Vec<f64>>> {
    match &config.init {
        KMeansInit::SeededRandomPoints => {
            if config.k > data.len() {
                return Err(Error::invalid(format!(
                    "cannot pick {} centers from {} points",
                    config.k,
                    data.len()
                )));
            }
            let mut rng = seeded_rng(config.seed);
            let mut picks = sample(&mut rng, data.len(), config.k).into_vec();
            picks.sort_unstable();
            Ok(picks.into_iter().map(|i| data.row(i).to_vec()).collect())
        }
        KMeansInit::Provided(centers) => {
            if centers.len() != config.k {
                return Err(Error::invalid(format!(
                    "{} initial centers provided for k = {}",
                    centers.len(),
                    config.k
                )));
            }
            for c in centers {
                Error::check_dim(data.dim(), c.len())?;
                if c.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("initial centers must be finite"));
                }
            }
            Ok(centers.clone())
        }
    }
}

fn update_center(data: &Dataset, members: &[usize], norm: Norm) -> Vec<f64> {
    let dim = data.dim();
    match norm {
        Norm::L2 => {
            let mut sum = vec![0.0; dim];
            for &i in members {
                for (s, v) in sum.iter_mut().zip(data.row(i)) {
                    *s += v;
                }
            }
            sum.iter().map(|s| s / members.len() as f64).collect()
        }
        Norm::Linf => {
            let mut lo = vec![f64::INFINITY; dim];
            let mut hi = vec![f64::NEG_INFINITY; dim];
            for &i in members {
                for (d, &v) in data.row(i).iter().enumerate() {
                    lo[d] = lo[d].min(v);
                    hi[d] = hi[d].max(v);
                }
            }
            lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect()
        }
    }
}

pub fn kmeans(data: &Dataset, config: &KMeansConfig) -> Result<KMeansModel> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if config.k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if config.max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    let norm = config.norm;
    let mut centers = initial_centers(data, config)?;
    let mut assignment: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iters {
        iterations += 1;
        let next: Vec<usize> = data.rows().map(|x| nearest(x, &centers, norm).0).collect();
        if next == assignment {
            converged = true;
            break;
        }
        assignment = next;

        let mut members = vec![Vec::new(); config.k];
        for (i, &a) in assignment.iter().enumerate() {
            members[a].push(i);
        }
        for (j, m) in members.iter().enumerate() {
            if !m.is_empty() {
                centers[j] = update_center(data, m, norm);
            }
        }
        for (j, m) in members.iter().enumerate() {
            if m.is_empty() {
                let far = data
                    .rows()
                    .zip(&assignment)
                    .map(|(x, &a)| norm.cost(x, &centers[a]))
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (i, c)| if c > b.1 { (i, c) } else { b });
                centers[j] = data.row(far.0).to_vec();
            }
        }
        history.push(objective(data, &centers, &assignment, norm));
    }

    let objective = objective(data, &centers, &assignment, norm);
    Ok(KMeansModel {
        centroids: centers,
        assignment,
        objective,
        history,
        iterations,
        converged,
    })
}

/// Runs [`kmeans`] once per seed and keeps the lowest objective (earliest seed
/// on ties).
pub fn kmeans_best_of(
    data: &Dataset,
    config: &KMeansConfig,
    seeds: impl IntoIterator<Item = u64>,
) -> Result<KMeansModel> {
    let mut best: Option<KMeansModel> = None;
    for seed in seeds {
        let run = kmeans(data, &KMeansConfig { seed, ..config.clone() })?;
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
    }
    best.ok_or_else(|| Error::invalid("no seeds given"))
}

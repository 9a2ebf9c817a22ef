//! Exact Gaussian-process experts and committee combination rules.
//!
//! Each shard gets its own exact GP; a committee merges the experts'
//! predictive distributions at a test point:
//!
//! | rule | precision                                   |
//! |------|---------------------------------------------|
//! | PoE  | `Σ_k σ_k⁻²`                                  |
//! | gPoE | `Σ_k β_k σ_k⁻²`                              |
//! | BCM  | `Σ_k σ_k⁻² + (1 − M) σ_0⁻²`                  |
//! | gBCM | `Σ_k β_k σ_k⁻² + (1 − Σ_k β_k) σ_0⁻²`        |
//!
//! and the mean is `σ*² Σ_k β_k σ_k⁻² μ_k` (β = 1 for PoE and BCM).
//!
//! The noise term is read as a variance: the training covariance is
//! `K(X, X) + σ_n² I`. Predictive variances are those of the latent `f`.

use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Partition};
use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, Matrix};

/// Squared-exponential kernel `s² exp(−‖x − x'‖² / 2ℓ²)` with a constant prior mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Kernel {
    pub lengthscale: f64,
    pub signal_variance: f64,
    pub noise_variance: f64,
    #[serde(default)]
    pub prior_mean: f64,
}

impl Kernel {
    pub fn new(lengthscale: f64, signal_variance: f64, noise_variance: f64) -> Self {
        Self {
            lengthscale,
            signal_variance,
            noise_variance,
            prior_mean: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lengthscale > 0.0
            && self.signal_variance > 0.0
            && self.noise_variance >= 0.0
            && self.lengthscale.is_finite()
            && self.signal_variance.is_finite()
            && self.noise_variance.is_finite()
            && self.prior_mean.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid kernel {self:?}")))
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.signal_variance * (-0.5 * sq / (self.lengthscale * self.lengthscale)).exp()
    }

    /// Every pairwise `k(x_i, x_j)` over the rows of `x`.
    pub fn gram(&self, x: &Dataset) -> Matrix {
        let n = x.len();
        let mut k = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval(x.row(i), x.row(j));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }
}

/// Predictive mean and latent variance of one expert (or a committee).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertPrediction {
    pub mu: f64,
    pub var: f64,
}

/// An exact GP conditioned on one shard.
#[derive(Clone, Debug)]
pub struct GpModel {
    x: Dataset,
    centered: Vec<f64>,
    kernel: Kernel,
    chol: Cholesky,
    alpha: Vec<f64>,
    jitter: f64,
}

/// Factorizes `K + σ_n² I`, retrying once with `1e-10 s²` extra diagonal.
pub fn gp_fit(x: &Dataset, kernel: Kernel) -> Result<GpModel> {
    kernel.validate()?;
    if x.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let y = x
        .targets()
        .ok_or_else(|| Error::invalid("GP training data needs real targets"))?;
    let centered: Vec<f64> = y.iter().map(|v| v - kernel.prior_mean).collect();
    let mut cov = kernel.gram(x);
    for i in 0..x.len() {
        cov[(i, i)] += kernel.noise_variance;
    }
    let (chol, jitter) = match Cholesky::factor(&cov, 0.0) {
        Ok(chol) => (chol, 0.0),
        Err(_) => {
            let jitter = 1e-10 * kernel.signal_variance;
            for i in 0..x.len() {
                cov[(i, i)] += jitter;
            }
            let chol = Cholesky::factor(&cov, 0.0).map_err(|f| Error::NotPositiveDefinite {
                index: f.index,
                pivot: f.pivot,
            })?;
            (chol, jitter)
        }
    };
    let alpha = chol.solve(&centered);
    Ok(GpModel {
        x: x.without_labels(),
        centered,
        kernel,
        chol,
        alpha,
        jitter,
    })
}

impl GpModel {
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `(K + σ_n² I)⁻¹ (y − μ₀)`.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Diagonal jitter added during fitting, zero when none was needed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn inputs(&self) -> &Dataset {
        &self.x
    }

    /// Latent predictive distribution at `x_star`.
    pub fn predict(&self, x_star: &[f64]) -> Result<ExpertPrediction> {
        Error::check_dim(self.x.dim(), x_star.len())?;
        let k_star: Vec<f64> = self.x.rows().map(|xi| self.kernel.eval(xi, x_star)).collect();
        let mu = self.kernel.prior_mean + dot(&k_star, &self.alpha);
        let v = self.chol.solve_lower(&k_star);
        let prior = self.kernel.eval(x_star, x_star);
        // Floor keeps precisions finite at (near-)noiseless training inputs.
        let var = (prior - dot(&v, &v)).max(prior * 1e-12);
        Ok(ExpertPrediction { mu, var })
    }

    /// Predictive distribution of a noisy observation at `x_star`.
    pub fn predict_observation(&self, x_star: &[f64]) -> Result<ExpertPrediction> {
        let p = self.predict(x_star)?;
        Ok(ExpertPrediction {
            var: p.var + self.kernel.noise_variance,
            ..p
        })
    }

    /// `−½ rᵀ(K + σ_n² I)⁻¹r − ½ log det(K + σ_n² I) − ½ N log 2π` with `r = y − μ₀`.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len() as f64;
        -0.5 * dot(&self.centered, &self.alpha) - 0.5 * self.chol.log_det() - 0.5 * n * (2.0 * PI).ln()
    }
}

pub fn gp_predict(model: &GpModel, x_star: &[f64]) -> Result<ExpertPrediction> {
    model.predict(x_star)
}

pub fn log_marginal_likelihood(model: &GpModel) -> f64 {
    model.log_marginal_likelihood()
}

/// One expert per shard, all sharing the kernel that maximized the summed
/// local log marginal likelihoods over the grid.
#[derive(Clone, Debug)]
pub struct Committee {
    pub experts: Vec<GpModel>,
    pub kernel: Kernel,
    /// `Σ_k log p(y_k | X_k)` at the chosen kernel.
    pub score: f64,
    /// Summed likelihood per grid entry; `None` where some shard failed to factorize.
    pub grid_scores: Vec<(Kernel, Option<f64>)>,
}

impl Committee {
    pub fn predict_all(&self, x_star: &[f64]) -> Result<Vec<ExpertPrediction>> {
        self.experts.iter().map(|e| e.predict(x_star)).collect()
    }

    /// Combines the experts at `x_star`, centering on the prior mean.
    pub fn predict(&self, x_star: &[f64], rule: &CombinationRule) -> Result<ExpertPrediction> {
        let mu0 = self.kernel.prior_mean;
        let centered: Vec<ExpertPrediction> = self
            .predict_all(x_star)?
            .into_iter()
            .map(|p| ExpertPrediction { mu: p.mu - mu0, ..p })
            .collect();
        let out = combine(&centered, rule)?;
        Ok(ExpertPrediction { mu: out.mu + mu0, ..out })
    }
}

/// Grid search over kernels, maximizing the factorized likelihood.
///
/// Ties go to the smaller lengthscale, then the smaller signal variance.
pub fn fit_experts(partition: &Partition, kernel_grid: &[Kernel]) -> Result<Committee> {
    if kernel_grid.is_empty() {
        return Err(Error::invalid("kernel grid is empty"));
    }
    if partition.shards().iter().any(Dataset::is_empty) {
        return Err(Error::EmptyDataset);
    }
    let mut order: Vec<usize> = (0..kernel_grid.len()).collect();
    order.sort_by(|&a, &b| {
        let (ka, kb) = (&kernel_grid[a], &kernel_grid[b]);
        ka.lengthscale
            .total_cmp(&kb.lengthscale)
            .then(ka.signal_variance.total_cmp(&kb.signal_variance))
    });

    let mut grid_scores = vec![None; kernel_grid.len()];
    let mut best: Option<(usize, f64, Vec<GpModel>)> = None;
    let mut first_error = None;
    for &g in &order {
        let fitted: Result<Vec<GpModel>> = partition
            .shards()
            .iter()
            .map(|s| gp_fit(s, kernel_grid[g]))
            .collect();
        match fitted {
            Ok(experts) => {
                let score: f64 = experts.iter().map(GpModel::log_marginal_likelihood).sum();
                grid_scores[g] = Some(score);
                if best.as_ref().is_none_or(|(_, s, _)| score > *s) {
                    best = Some((g, score, experts));
                }
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let (g, score, experts) = match best {
        Some(b) => b,
        None => return Err(first_error.expect("grid is nonempty")),
    };
    Ok(Committee {
        experts,
        kernel: kernel_grid[g],
        score,
        grid_scores: kernel_grid.iter().copied().zip(grid_scores).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    Poe,
    Gpoe,
    Bcm,
    Gbcm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombinationRule {
    pub kind: RuleKind,
    /// Expert weights for gPoE/gBCM; `None` means `1/K` each.
    #[serde(default)]
    pub betas: Option<Vec<f64>>,
    /// Prior variance `σ_0²` of `f*`, used by BCM and gBCM.
    #[serde(default)]
    pub prior_var: Option<f64>,
}

impl CombinationRule {
    pub fn poe() -> Self {
        Self {
            kind: RuleKind::Poe,
            betas: None,
            prior_var: None,
        }
    }

    pub fn gpoe(betas: Option<Vec<f64>>) -> Self {
        Self {
            kind: RuleKind::Gpoe,
            betas,
            prior_var: None,
        }
    }

    pub fn bcm(prior_var: f64) -> Self {
        Self {
            kind: RuleKind::Bcm,
            betas: None,
            prior_var: Some(prior_var),
        }
    }

    pub fn gbcm(betas: Option<Vec<f64>>, prior_var: f64) -> Self {
        Self {
            kind: RuleKind::Gbcm,
            betas,
            prior_var: Some(prior_var),
        }
    }

    fn weights(&self, k: usize) -> Result<Vec<f64>> {
        match self.kind {
            RuleKind::Poe | RuleKind::Bcm => Ok(vec![1.0; k]),
            RuleKind::Gpoe | RuleKind::Gbcm => {
                let betas = match &self.betas {
                    Some(b) => {
                        Error::check_dim(k, b.len())?;
                        b.clone()
                    }
                    None => vec![1.0 / k as f64; k],
                };
                if betas.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
                    return Err(Error::invalid("expert weights must be positive"));
                }
                Ok(betas)
            }
        }
    }

    fn prior_precision(&self) -> Result<f64> {
        match self.prior_var {
            Some(v) if v > 0.0 && v.is_finite() => Ok(1.0 / v),
            _ => Err(Error::invalid("bcm and gbcm need a positive prior variance")),
        }
    }
}

/// Merges expert predictions (all centered on a zero prior mean) under `rule`.
pub fn combine(predictions: &[ExpertPrediction], rule: &CombinationRule) -> Result<ExpertPrediction> {
    if predictions.is_empty() {
        return Err(Error::invalid("no expert predictions to combine"));
    }
    if let Some(p) = predictions.iter().find(|p| !(p.var > 0.0) || !p.var.is_finite() || !p.mu.is_finite()) {
        return Err(Error::invalid(format!("invalid expert prediction {p:?}")));
    }
    let k = predictions.len();
    let betas = rule.weights(k)?;
    let beta_sum: f64 = betas.iter().sum();
    if rule.kind == RuleKind::Gpoe && (beta_sum - 1.0).abs() > 1e-9 {
        warn!("gPoE weights sum to {beta_sum}; the committee will not fall back to the prior");
    }

    let mut precision = 0.0;
    let mut weighted_mean = 0.0;
    for (p, b) in predictions.iter().zip(&betas) {
        let w = b / p.var;
        precision += w;
        weighted_mean += w * p.mu;
    }
    precision += match rule.kind {
        RuleKind::Poe | RuleKind::Gpoe => 0.0,
        RuleKind::Bcm | RuleKind::Gbcm => (1.0 - beta_sum) * rule.prior_precision()?,
    };
    if !(precision > 0.0) || !precision.is_finite() {
        return Err(Error::InconsistentPrecision(precision));
    }
    let var = 1.0 / precision;
    Ok(ExpertPrediction {
        mu: var * weighted_mean,
        var,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Labels;

    fn one_point() -> Dataset {
        Dataset::from_rows(&[vec![0.0]], Some(Labels::Real(vec![2.0]))).unwrap()
    }

    #[test]
    fn single_point_alpha() {
        let m = gp_fit(&one_point(), Kernel::new(1.0, 1.0, 0.0)).unwrap();
        assert_eq!(m.alpha(), &[2.0]);
        let p = m.predict(&[0.0]).unwrap();
        assert_eq!(p.mu, 2.0);
    }

    #[test]
    fn single_point_zero_target_likelihood() {
        let d = Dataset::from_rows(&[vec![0.0]], Some(Labels::Real(vec![0.0]))).unwrap();
        let m = gp_fit(&d, Kernel::new(1.0, 1.0, 0.0)).unwrap();
        assert!((m.log_marginal_likelihood() + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn far_field_reverts_to_prior() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.1]).collect();
        let y: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        let d = Dataset::from_rows(&rows, Some(Labels::Real(y))).unwrap();
        let kernel = Kernel {
            prior_mean: 0.7,
            ..Kernel::new(0.3, 1.5, 0.01)
        };
        let m = gp_fit(&d, kernel).unwrap();
        let p = m.predict(&[0.9 + 10.0 * 0.3]).unwrap();
        assert!((p.mu - 0.7).abs() < 1e-6);
        assert!((p.var - 1.5).abs() < 1e-6);
    }

    #[test]
    fn duplicate_noiseless_inputs_get_jitter() {
        let d = Dataset::from_rows(&[vec![1.0], vec![1.0]], Some(Labels::Real(vec![1.0, 1.0])))
            .unwrap();
        let m = gp_fit(&d, Kernel::new(1.0, 1.0, 0.0)).unwrap();
        assert!(m.jitter() > 0.0);
    }

    #[test]
    fn invalid_kernel_rejected() {
        assert!(gp_fit(&one_point(), Kernel::new(0.0, 1.0, 0.0)).is_err());
        assert!(gp_fit(&one_point(), Kernel::new(1.0, 1.0, -1.0)).is_err());
    }

    #[test]
    fn two_identical_experts_double_precision() {
        let e = ExpertPrediction { mu: 1.0, var: 2.0 };
        let out = combine(&[e, e], &CombinationRule::poe()).unwrap();
        assert_eq!(out, ExpertPrediction { mu: 1.0, var: 1.0 });
    }

    #[test]
    fn prior_experts_give_prior_under_gbcm() {
        let e = ExpertPrediction { mu: 0.0, var: 3.0 };
        let rule = CombinationRule::gbcm(Some(vec![0.2, 0.5, 1.3]), 3.0);
        let out = combine(&[e, e, e], &rule).unwrap();
        assert_eq!(out.mu, 0.0);
        assert!((out.var - 3.0).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_bcm_rejected() {
        // Weak experts barely more precise than the prior, many of them.
        let e = ExpertPrediction { mu: 0.0, var: 10.0 };
        let err = combine(&[e; 5], &CombinationRule::bcm(1.0)).unwrap_err();
        assert!(matches!(err, Error::InconsistentPrecision(_)));
    }

    #[test]
    fn rule_argument_errors() {
        let e = ExpertPrediction { mu: 0.0, var: 1.0 };
        assert!(combine(&[], &CombinationRule::poe()).is_err());
        assert!(combine(&[e], &CombinationRule::gpoe(Some(vec![1.0, 1.0]))).is_err());
        assert!(combine(&[e], &CombinationRule::gpoe(Some(vec![0.0]))).is_err());
        let no_prior = CombinationRule {
            prior_var: None,
            ..CombinationRule::bcm(1.0)
        };
        assert!(combine(&[e], &no_prior).is_err());
    }

    #[test]
    fn grid_tie_prefers_smaller_lengthscale() {
        let d = Dataset::from_rows(&[vec![0.0]], Some(Labels::Real(vec![0.5]))).unwrap();
        let p = Partition::from_groups(&d, vec![vec![0]]).unwrap();
        // With one point the likelihood does not depend on the lengthscale.
        let grid = [Kernel::new(2.0, 1.0, 0.1), Kernel::new(0.5, 1.0, 0.1)];
        let c = fit_experts(&p, &grid).unwrap();
        assert_eq!(c.kernel.lengthscale, 0.5);
    }
}

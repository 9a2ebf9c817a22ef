//! Local objectives, proximal steps and the per-node update operator.
//!
//! A node's update operator runs a fixed number of proximal-gradient passes
//! over its shard. The same machinery, run on pooled data, is the centralized
//! reference optimizer that distributed runs are compared against.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{seeded_rng, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{dot, power_iteration, Cholesky, Matrix};

/// Linear-model parameters `(a, b)` stored flat as `[a_0, …, a_{n-1}, b]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Theta(Vec<f64>);

impl Theta {
    pub fn new(weights: Vec<f64>, intercept: f64) -> Self {
        let mut v = weights;
        v.push(intercept);
        Theta(v)
    }

    pub fn zeros(dim: usize) -> Self {
        Theta(vec![0.0; dim + 1])
    }

    /// Wraps a flat vector whose last entry is the intercept.
    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("theta needs at least the intercept"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("theta entries must be finite"));
        }
        Ok(Theta(values))
    }

    /// Number of weights (feature dimension), excluding the intercept.
    pub fn dim(&self) -> usize {
        self.0.len() - 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.0[..self.dim()]
    }

    pub fn intercept(&self) -> f64 {
        self.0[self.dim()]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `a·x + b`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        dot(self.weights(), x) + self.intercept()
    }

    pub fn dist2(&self, other: &Theta) -> f64 {
        crate::linalg::dist2(&self.0, &other.0)
    }

    pub fn dist_inf(&self, other: &Theta) -> f64 {
        crate::linalg::dist_inf(&self.0, &other.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `0.5 (y − a·x − b)²`.
    Squared,
    /// `log(1 + e^z) − y z` with `z = a·x + b` and `y ∈ [0, 1]`.
    Logistic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularizer {
    None,
    /// `‖a‖₁`, handled by the proximal step.
    L1,
    /// `0.5 ‖a‖₂²`, handled by the gradient.
    L2,
}

/// `Σ_i f(x_i, y_i | θ) + λ g(a)`; the intercept is never penalized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Objective {
    pub loss: LossKind,
    pub regularizer: Regularizer,
    #[serde(default)]
    pub lambda: f64,
}

impl Objective {
    pub fn least_squares() -> Self {
        Self {
            loss: LossKind::Squared,
            regularizer: Regularizer::None,
            lambda: 0.0,
        }
    }

    pub fn ridge(lambda: f64) -> Self {
        Self {
            loss: LossKind::Squared,
            regularizer: Regularizer::L2,
            lambda,
        }
    }

    pub fn lasso(lambda: f64) -> Self {
        Self {
            loss: LossKind::Squared,
            regularizer: Regularizer::L1,
            lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!(
                "lambda must be finite and nonnegative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// The same objective with the penalty weight scaled by `fraction`.
    ///
    /// Shard objectives built with `fraction = N_k / N` sum to the pooled one.
    pub fn with_penalty_share(&self, fraction: f64) -> Self {
        Self {
            lambda: self.lambda * fraction,
            ..*self
        }
    }

    fn point_loss(&self, theta: &Theta, x: &[f64], y: f64) -> f64 {
        let z = theta.predict(x);
        match self.loss {
            LossKind::Squared => {
                let r = y - z;
                0.5 * r * r
            }
            LossKind::Logistic => softplus(z) - y * z,
        }
    }

    /// Derivative of the point loss with respect to `z = a·x + b`.
    fn point_slope(&self, theta: &Theta, x: &[f64], y: f64) -> f64 {
        let z = theta.predict(x);
        match self.loss {
            LossKind::Squared => z - y,
            LossKind::Logistic => sigmoid(z) - y,
        }
    }

    fn penalty(&self, theta: &Theta) -> f64 {
        match self.regularizer {
            Regularizer::None => 0.0,
            Regularizer::L1 => self.lambda * theta.weights().iter().map(|a| a.abs()).sum::<f64>(),
            Regularizer::L2 => 0.5 * self.lambda * dot(theta.weights(), theta.weights()),
        }
    }

    /// Loss plus the differentiable part of the penalty (everything but ℓ1).
    pub fn smooth_value(&self, theta: &Theta, dataset: &Dataset) -> Result<f64> {
        let y = checked_targets(theta, dataset)?;
        let data: f64 = dataset
            .rows()
            .zip(y.iter())
            .map(|(x, &yi)| self.point_loss(theta, x, yi))
            .sum();
        Ok(match self.regularizer {
            Regularizer::L2 => data + self.penalty(theta),
            _ => data,
        })
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn checked_targets<'a>(theta: &Theta, dataset: &'a Dataset) -> Result<std::borrow::Cow<'a, [f64]>> {
    Error::check_dim(dataset.dim(), theta.dim())?;
    dataset
        .targets()
        .ok_or_else(|| Error::invalid("objective needs a labeled dataset"))
}

/// Full objective value `Σ f + λ g`.
pub fn loss(objective: &Objective, theta: &Theta, dataset: &Dataset) -> Result<f64> {
    objective.validate()?;
    let y = checked_targets(theta, dataset)?;
    let data: f64 = dataset
        .rows()
        .zip(y.iter())
        .map(|(x, &yi)| objective.point_loss(theta, x, yi))
        .sum();
    Ok(data + objective.penalty(theta))
}

/// Gradient of the smooth part over a batch.
///
/// Returns `Σ_{i∈B} ∇f_i + (|B|/N) λ ∇g` when the penalty is ℓ2, so that the
/// gradients of any set of batches covering the data sum to the full gradient.
/// The ℓ1 penalty is left to [`prox_l1`].
pub fn gradient(
    objective: &Objective,
    theta: &Theta,
    dataset: &Dataset,
    batch: &[usize],
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::invalid("gradient batch is empty"));
    }
    let y = checked_targets(theta, dataset)?;
    if let Some(&bad) = batch.iter().find(|&&i| i >= dataset.len()) {
        return Err(Error::invalid(format!("batch index {bad} out of range")));
    }
    Ok(batch_gradient(objective, theta, dataset, &y, batch))
}

fn batch_gradient(
    objective: &Objective,
    theta: &Theta,
    dataset: &Dataset,
    y: &[f64],
    batch: &[usize],
) -> Vec<f64> {
    let n = theta.dim();
    let mut g = vec![0.0; n + 1];
    for &i in batch {
        let x = dataset.row(i);
        let s = objective.point_slope(theta, x, y[i]);
        for (gd, xd) in g.iter_mut().zip(x) {
            *gd += s * xd;
        }
        g[n] += s;
    }
    if objective.regularizer == Regularizer::L2 && objective.lambda > 0.0 {
        let share = objective.lambda * batch.len() as f64 / dataset.len() as f64;
        for (gd, a) in g.iter_mut().zip(theta.weights()) {
            *gd += share * a;
        }
    }
    g
}

/// Soft-thresholds the weights by `t`; the intercept passes through.
pub fn prox_l1(v: &[f64], t: f64) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("threshold must be nonnegative, got {t}")));
    }
    let Some((&b, weights)) = v.split_last() else {
        return Ok(Vec::new());
    };
    let mut out: Vec<f64> = weights.iter().map(|&w| soft_threshold(w, t)).collect();
    out.push(b);
    Ok(out)
}

fn soft_threshold(w: f64, t: f64) -> f64 {
    w.signum() * (w.abs() - t).max(0.0)
}

/// Upper bound estimate of the smooth part's Lipschitz constant:
/// `c ‖X̃ᵀX̃‖₂ + λ` (ℓ2 only), with `c = 1` for squared and `1/4` for logistic loss.
///
/// `X̃` is the design matrix with a ones column appended.
pub fn lipschitz_estimate(objective: &Objective, dataset: &Dataset) -> f64 {
    let w = augmented_gram(dataset);
    let top = power_iteration(&w, 8, 1e-6);
    let curvature = match objective.loss {
        LossKind::Squared => 1.0,
        LossKind::Logistic => 0.25,
    };
    let ridge = match objective.regularizer {
        Regularizer::L2 => objective.lambda,
        _ => 0.0,
    };
    curvature * top + ridge
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateMode {
    DeterministicFullGradient,
    StochasticMinibatch,
}

/// How a node runs its local optimizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdatePolicy {
    pub step_size: f64,
    pub epochs: usize,
    /// Mini-batch size; `None` means the full shard.
    #[serde(default)]
    pub batch_size: Option<usize>,
    pub mode: UpdateMode,
    #[serde(default)]
    pub seed: u64,
}

impl UpdatePolicy {
    pub fn full_gradient(step_size: f64, epochs: usize) -> Self {
        Self {
            step_size,
            epochs,
            batch_size: None,
            mode: UpdateMode::DeterministicFullGradient,
            seed: 0,
        }
    }

    /// `0.5 / L` with `L` from [`lipschitz_estimate`].
    pub fn default_step(objective: &Objective, dataset: &Dataset) -> f64 {
        0.5 / lipschitz_estimate(objective, dataset)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::invalid(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// The per-node update operator: something that maps a received parameter
/// to a new one.
pub trait UpdateOperator {
    fn apply(&self, theta: &Theta) -> Result<Theta>;
}

impl<F> UpdateOperator for F
where
    F: Fn(&Theta) -> Result<Theta>,
{
    fn apply(&self, theta: &Theta) -> Result<Theta> {
        self(theta)
    }
}

/// A node's local learner: objective, shard and update policy.
#[derive(Clone, Debug)]
pub struct Learner<'a> {
    pub objective: Objective,
    pub shard: &'a Dataset,
    pub policy: UpdatePolicy,
}

impl<'a> Learner<'a> {
    pub fn new(objective: Objective, shard: &'a Dataset, policy: UpdatePolicy) -> Self {
        Self {
            objective,
            shard,
            policy,
        }
    }

    /// Runs `policy.epochs` passes of (mini-batch) proximal gradient from `theta_in`.
    pub fn local_update(&self, theta_in: &Theta) -> Result<Theta> {
        self.run(theta_in, None)
    }

    fn run(&self, theta_in: &Theta, stop_below: Option<f64>) -> Result<Theta> {
        self.objective.validate()?;
        self.policy.validate()?;
        if self.shard.is_empty() {
            return Err(Error::invalid("local update on an empty shard"));
        }
        let y = checked_targets(theta_in, self.shard)?;
        let n_rows = self.shard.len();
        let step = self.policy.step_size;
        let mut theta = theta_in.clone();

        let batch_size = match self.policy.mode {
            UpdateMode::DeterministicFullGradient => n_rows,
            UpdateMode::StochasticMinibatch => self.policy.batch_size.unwrap_or(n_rows).min(n_rows),
        };
        let mut order: Vec<usize> = (0..n_rows).collect();
        let mut rng = seeded_rng(self.policy.seed);

        for _ in 0..self.policy.epochs {
            if self.policy.mode == UpdateMode::StochasticMinibatch {
                order.shuffle(&mut rng);
            }
            let mut moved: f64 = 0.0;
            for batch in order.chunks(batch_size) {
                let next = self.prox_step(&theta, &y, batch, step)?;
                moved = moved.max(next.dist_inf(&theta));
                theta = next;
            }
            if !theta.is_finite() {
                return Err(Error::Diverged("local update; reduce step_size".to_string()));
            }
            if stop_below.is_some_and(|tol| moved <= tol) {
                break;
            }
        }
        Ok(theta)
    }

    fn prox_step(&self, theta: &Theta, y: &[f64], batch: &[usize], step: f64) -> Result<Theta> {
        let g = batch_gradient(&self.objective, theta, self.shard, y, batch);
        let moved: Vec<f64> = theta
            .as_slice()
            .iter()
            .zip(&g)
            .map(|(t, gi)| t - step * gi)
            .collect();
        let values = match self.objective.regularizer {
            Regularizer::L1 if self.objective.lambda > 0.0 => {
                let share = batch.len() as f64 / self.shard.len() as f64;
                prox_l1(&moved, step * self.objective.lambda * share)?
            }
            _ => moved,
        };
        Ok(Theta(values))
    }
}

impl UpdateOperator for Learner<'_> {
    fn apply(&self, theta: &Theta) -> Result<Theta> {
        self.local_update(theta)
    }
}

/// Non-distributed reference optimizer on the whole dataset.
///
/// Starts at zero and runs the policy on `dataset`; in full-gradient mode it
/// stops early once a step moves no coordinate by more than `1e-14`.
pub fn centralized_oracle(
    objective: &Objective,
    dataset: &Dataset,
    policy: &UpdatePolicy,
) -> Result<Theta> {
    let learner = Learner::new(*objective, dataset, *policy);
    let stop = (policy.mode == UpdateMode::DeterministicFullGradient).then_some(1e-14);
    learner.run(&Theta::zeros(dataset.dim()), stop)
}

/// `(X̃ᵀX̃, X̃ᵀy)` with `X̃` the design matrix augmented by a ones column.
pub fn normal_statistics(dataset: &Dataset) -> Result<(Matrix, Vec<f64>)> {
    let y = dataset
        .targets()
        .ok_or_else(|| Error::invalid("normal statistics need a labeled dataset"))?;
    let w = augmented_gram(dataset);
    let m = dataset.dim() + 1;
    let mut v = vec![0.0; m];
    for (x, &yi) in dataset.rows().zip(y.iter()) {
        for (vd, xd) in v.iter_mut().zip(x) {
            *vd += xd * yi;
        }
        v[m - 1] += yi;
    }
    Ok((w, v))
}

fn augmented_gram(dataset: &Dataset) -> Matrix {
    let m = dataset.dim() + 1;
    let mut w = Matrix::zeros(m, m);
    let mut aug = vec![1.0; m];
    for x in dataset.rows() {
        aug[..m - 1].copy_from_slice(x);
        for i in 0..m {
            for j in 0..=i {
                w[(i, j)] += aug[i] * aug[j];
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            w[(j, i)] = w[(i, j)];
        }
    }
    w
}

/// Solves `(W + λ D) θ = V` where `D` penalizes the weights but not the intercept.
pub fn solve_normal_equations(w: &Matrix, v: &[f64], ridge: f64) -> Result<Theta> {
    let m = w.rows();
    Error::check_dim(m, v.len())?;
    let mut a = w.clone();
    for i in 0..m.saturating_sub(1) {
        a[(i, i)] += ridge;
    }
    let floor = 1e-12 * a.max_abs_diag().max(f64::MIN_POSITIVE);
    let chol = Cholesky::factor(&a, floor).map_err(|f| Error::RankDeficient {
        index: f.index,
        pivot: f.pivot,
    })?;
    Theta::from_vec(chol.solve(v))
}

/// Closed-form minimizer for squared loss with no penalty or an ℓ2 penalty.
pub fn closed_form(objective: &Objective, dataset: &Dataset) -> Result<Theta> {
    objective.validate()?;
    if objective.loss != LossKind::Squared || objective.regularizer == Regularizer::L1 {
        return Err(Error::invalid(
            "closed form exists only for squared loss without an l1 penalty",
        ));
    }
    let ridge = match objective.regularizer {
        Regularizer::L2 => objective.lambda,
        _ => 0.0,
    };
    let (w, v) = normal_statistics(dataset)?;
    solve_normal_equations(&w, &v, ridge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_regression, Labels};

    fn line_data() -> Dataset {
        Dataset::from_rows(&[vec![0.0], vec![1.0]], Some(Labels::Real(vec![1.0, 3.0]))).unwrap()
    }

    #[test]
    fn single_point_hand_loss() {
        let d = Dataset::from_rows(&[vec![1.0]], Some(Labels::Real(vec![3.0]))).unwrap();
        let theta = Theta::new(vec![1.0], 0.0);
        assert_eq!(loss(&Objective::least_squares(), &theta, &d).unwrap(), 2.0);
    }

    #[test]
    fn noiseless_loss_is_zero_at_truth() {
        let truth = Theta::new(vec![0.5, -1.5, 2.0], 0.25);
        let d = generate_regression(100, 3, &truth, 0.0, 5).unwrap();
        assert_eq!(loss(&Objective::least_squares(), &truth, &d).unwrap(), 0.0);
    }

    #[test]
    fn l1_penalty_is_additive() {
        let truth = Theta::new(vec![0.5, -1.5], 0.25);
        let d = generate_regression(40, 2, &truth, 0.2, 8).unwrap();
        let theta = Theta::new(vec![0.3, 0.7], -1.0);
        let plain = loss(&Objective::least_squares(), &theta, &d).unwrap();
        let with_l1 = loss(&Objective::lasso(1.0), &theta, &d).unwrap();
        assert!((with_l1 - (plain + 0.3 + 0.7)).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let d = line_data();
        let theta = Theta::zeros(2);
        assert!(matches!(
            loss(&Objective::least_squares(), &theta, &d),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn empty_batch_rejected() {
        let d = line_data();
        assert!(gradient(&Objective::least_squares(), &Theta::zeros(1), &d, &[]).is_err());
    }

    #[test]
    fn prox_examples() {
        assert_eq!(prox_l1(&[0.5, 9.0], 1.0).unwrap(), vec![0.0, 9.0]);
        assert_eq!(prox_l1(&[2.0, -3.0, 9.0], 1.0).unwrap(), vec![1.0, -2.0, 9.0]);
        let v = [0.3, -0.2, 4.0];
        assert_eq!(prox_l1(&v, 0.0).unwrap(), v.to_vec());
        assert!(prox_l1(&v, -1.0).is_err());
    }

    #[test]
    fn closed_form_interpolates_two_points() {
        let theta = closed_form(&Objective::least_squares(), &line_data()).unwrap();
        assert!((theta.weights()[0] - 2.0).abs() < 1e-12);
        assert!((theta.intercept() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_normal_matrix_is_rank_deficient() {
        let d = Dataset::from_rows(&[vec![1.0], vec![1.0]], Some(Labels::Real(vec![1.0, 2.0])))
            .unwrap();
        assert!(matches!(
            closed_form(&Objective::least_squares(), &d),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn closed_form_rejects_lasso() {
        assert!(closed_form(&Objective::lasso(0.1), &line_data()).is_err());
    }

    #[test]
    fn truth_is_a_fixed_point_of_noiseless_update() {
        let truth = Theta::new(vec![0.5, -1.5], 0.25);
        let d = generate_regression(60, 2, &truth, 0.0, 2).unwrap();
        let obj = Objective::least_squares();
        let policy = UpdatePolicy::full_gradient(UpdatePolicy::default_step(&obj, &d), 5);
        let out = Learner::new(obj, &d, policy).local_update(&truth).unwrap();
        assert_eq!(out, truth);
    }

    #[test]
    fn empty_shard_rejected() {
        let d = Dataset::new(Vec::new(), 1, Some(Labels::Real(Vec::new()))).unwrap();
        let learner = Learner::new(Objective::least_squares(), &d, UpdatePolicy::full_gradient(0.1, 1));
        assert!(learner.local_update(&Theta::zeros(1)).is_err());
    }

    #[test]
    fn invalid_policy_rejected() {
        let d = line_data();
        let policy = UpdatePolicy::full_gradient(0.0, 1);
        let learner = Learner::new(Objective::least_squares(), &d, policy);
        assert!(learner.local_update(&Theta::zeros(1)).is_err());
    }

    #[test]
    fn minibatch_update_is_seed_deterministic() {
        let truth = Theta::new(vec![1.0, 2.0], -1.0);
        let d = generate_regression(50, 2, &truth, 0.1, 3).unwrap();
        let obj = Objective::ridge(0.1);
        let policy = UpdatePolicy {
            step_size: 0.01,
            epochs: 3,
            batch_size: Some(7),
            mode: UpdateMode::StochasticMinibatch,
            seed: 42,
        };
        let learner = Learner::new(obj, &d, policy);
        let a = learner.local_update(&Theta::zeros(2)).unwrap();
        let b = learner.local_update(&Theta::zeros(2)).unwrap();
        assert_eq!(a, b);
        let other = Learner::new(obj, &d, UpdatePolicy { seed: 43, ..policy });
        assert_ne!(a, other.local_update(&Theta::zeros(2)).unwrap());
    }

    #[test]
    fn logistic_gradient_points_downhill() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0 - 1.0]).collect();
        let y: Vec<f64> = (0..20).map(|i| f64::from(i >= 10)).collect();
        let d = Dataset::from_rows(&rows, Some(Labels::Real(y))).unwrap();
        let obj = Objective {
            loss: LossKind::Logistic,
            regularizer: Regularizer::None,
            lambda: 0.0,
        };
        let step = UpdatePolicy::default_step(&obj, &d);
        let learner = Learner::new(obj, &d, UpdatePolicy::full_gradient(step, 50));
        let start = Theta::zeros(1);
        let out = learner.local_update(&start).unwrap();
        assert!(loss(&obj, &out, &d).unwrap() < loss(&obj, &start, &d).unwrap());
        assert!(out.weights()[0] > 0.0);
    }
}

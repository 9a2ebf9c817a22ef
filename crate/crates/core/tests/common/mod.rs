//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use distml::data::Dataset;
use distml::learners::Theta;
use nalgebra::{DMatrix, DVector};

/// Design matrix with a trailing ones column.
pub fn augmented(data: &Dataset) -> DMatrix<f64> {
    let n = data.dim();
    DMatrix::from_fn(data.len(), n + 1, |i, j| if j < n { data.row(i)[j] } else { 1.0 })
}

pub fn targets(data: &Dataset) -> DVector<f64> {
    DVector::from_vec(data.targets().expect("labeled").into_owned())
}

/// Least squares by SVD of the design matrix, never forming `XᵀX`.
pub fn svd_least_squares(data: &Dataset) -> Vec<f64> {
    let x = augmented(data);
    x.svd(true, true)
        .solve(&targets(data), 1e-14)
        .expect("svd solve")
        .as_slice()
        .to_vec()
}

/// `argmin ½‖y − X̃θ‖² + ½λ‖a‖²` via LU on the regularized normal matrix.
pub fn ridge_lu(data: &Dataset, lambda: f64) -> Vec<f64> {
    let x = augmented(data);
    let mut a = x.transpose() * &x;
    for i in 0..data.dim() {
        a[(i, i)] += lambda;
    }
    let b = x.transpose() * targets(data);
    a.lu().solve(&b).expect("lu solve").as_slice().to_vec()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn theta_of(values: &[f64]) -> Theta {
    Theta::from_vec(values.to_vec()).expect("finite")
}

/// Membership by the box predicate, written out directly.
pub fn inside(x: &[f64], center: &[f64], weights: &[f64], r: f64) -> bool {
    x.iter()
        .zip(center)
        .zip(weights)
        .map(|((a, c), w)| w * (a - c).abs())
        .fold(0.0, f64::max)
        < r
}

/// Lowest sum of squared distances to cluster means over every labeling of
/// the points with at most `k` labels.
pub fn kmeans_enumerated_optimum(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let dim = points[0].len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for d in 0..dim {
                sums[l][d] += p[d];
            }
        }
        let cost: f64 = points
            .iter()
            .zip(&labels)
            .map(|(p, &l)| {
                (0..dim)
                    .map(|d| (p[d] - sums[l][d] / counts[l] as f64).powi(2))
                    .sum::<f64>()
            })
            .sum();
        best = best.min(cost);
        // Next labeling in base k.
        let mut i = 0;
        while i < n {
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

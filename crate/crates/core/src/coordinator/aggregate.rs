//! One-shot least squares from shard second-order statistics.
//!
//! Each node sends `W_k = X̃_kᵀX̃_k` and `V_k = X̃_kᵀy_k` (with `X̃` the shard
//! design matrix plus a ones column). The server sums them and solves
//! `W θ = V`, which is exactly the pooled normal-equations solution.

use crate::channel::{AsReals, Channel, WireMessage};
use crate::data::{Dataset, Partition};
use crate::error::{Error, Result};
use crate::learners::{normal_statistics, solve_normal_equations, Theta};
use crate::linalg::Matrix;

/// A node's contribution: `(n+1)² + (n+1)` reals, never raw rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SecondOrderStats {
    gram: Matrix,
    moment: Vec<f64>,
}

impl SecondOrderStats {
    pub fn from_shard(shard: &Dataset) -> Result<Self> {
        let (gram, moment) = normal_statistics(shard)?;
        Ok(Self { gram, moment })
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn moment(&self) -> &[f64] {
        &self.moment
    }

    fn accumulate(&mut self, other: &SecondOrderStats) -> Result<()> {
        Error::check_dim(self.moment.len(), other.moment.len())?;
        self.gram.add_assign(&other.gram);
        for (a, b) in self.moment.iter_mut().zip(&other.moment) {
            *a += b;
        }
        Ok(())
    }
}

impl WireMessage for SecondOrderStats {
    fn wire_reals(&self) -> usize {
        self.gram.as_slice().len() + self.moment.len()
    }
}

impl AsReals for SecondOrderStats {
    fn reals(&self) -> Vec<f64> {
        let mut v = self.gram.as_slice().to_vec();
        v.extend_from_slice(&self.moment);
        v
    }
}

/// Server side: sums the received statistics and solves the normal equations.
pub fn solve_from_stats<'a>(stats: impl IntoIterator<Item = &'a SecondOrderStats>) -> Result<Theta> {
    let mut iter = stats.into_iter();
    let mut total = iter
        .next()
        .ok_or_else(|| Error::invalid("no statistics received"))?
        .clone();
    for s in iter {
        total.accumulate(s)?;
    }
    solve_normal_equations(&total.gram, &total.moment, 0.0)
}

/// Runs the aggregation, recording every node message on `channel`.
pub fn aggregate_second_order_via(
    partition: &Partition,
    channel: &mut Channel<SecondOrderStats>,
) -> Result<Theta> {
    let params = partition.shard(0).dim() + 1;
    if partition.total_len() <= params {
        return Err(Error::invalid(format!(
            "{} rows cannot determine {params} parameters",
            partition.total_len()
        )));
    }
    for (node, shard) in partition.shards().iter().enumerate() {
        channel.send(node, SecondOrderStats::from_shard(shard)?);
    }
    solve_from_stats(channel.messages().iter().map(|e| &e.message))
}

/// The exact pooled least-squares solution from shard statistics.
pub fn aggregate_second_order(partition: &Partition) -> Result<Theta> {
    aggregate_second_order_via(partition, &mut Channel::new())
}

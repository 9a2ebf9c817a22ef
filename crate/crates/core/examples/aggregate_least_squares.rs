//! Exact least squares from per-shard second-order statistics. Only the
//! statistics cross the channel.

use distml::channel::Channel;
use distml::coordinator::aggregate_second_order_via;
use distml::data::{generate_regression, partition, SplitMode, SplitSpec};
use distml::learners::{closed_form, Objective, Theta};

fn main() -> distml::Result<()> {
    let truth = Theta::new(vec![0.5, -1.5, 2.0, 0.0, 1.0], -0.25);
    let data = generate_regression(200, 5, &truth, 0.1, 3)?;
    let parts = partition(&data, &SplitSpec { mode: SplitMode::Contiguous, k: 4, seed: 0 })?;

    let mut channel = Channel::new();
    let theta = aggregate_second_order_via(&parts, &mut channel)?;
    let pooled = closed_form(&Objective::least_squares(), &data)?;

    println!("aggregated: {:?}", theta.as_slice());
    println!("pooled:     {:?}", pooled.as_slice());
    println!("max abs difference: {:.3e}", theta.dist_inf(&pooled));
    for node in 0..parts.k() {
        println!("node {node} sent {} reals", channel.reals_from(node));
    }
    Ok(())
}

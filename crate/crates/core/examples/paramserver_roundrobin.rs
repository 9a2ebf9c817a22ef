//! Round-robin parameter swapping over four shards, serialized, compared
//! with the centralized ridge solution.

use distml::coordinator::{run_schedule, ExecutionMode, Schedule};
use distml::data::{generate_regression, partition, SplitMode, SplitSpec};
use distml::learners::{closed_form, loss, Objective, Theta, UpdatePolicy};

fn main() -> distml::Result<()> {
    let truth = Theta::new(vec![1.0, -2.0, 0.5], 0.3);
    let data = generate_regression(400, 3, &truth, 0.05, 7)?;
    let parts = partition(&data, &SplitSpec { mode: SplitMode::ShuffledIid, k: 4, seed: 7 })?;

    let objective = Objective::ridge(0.1);
    let step = UpdatePolicy::default_step(&objective, &data);
    let policy = UpdatePolicy::full_gradient(step, 1);
    let schedule = Schedule::round_robin(4)?;

    let trace = run_schedule(&parts, &objective, &policy, &schedule, &ExecutionMode::Serialized, 2000)?;
    let oracle = closed_form(&objective, &data)?;
    let theta = trace.final_theta();

    println!("contacts per node: {:?}", trace.contacts_per_node(4));
    println!("final theta:  {:?}", theta.as_slice());
    println!("closed form:  {:?}", oracle.as_slice());
    println!("oracle gap:   {:.3e}", theta.dist2(&oracle));
    println!("objective:    {:.6} (optimum {:.6})", loss(&objective, theta, &data)?, loss(&objective, &oracle, &data)?);
    println!("bytes on wire: {}", trace.total_bytes());
    Ok(())
}

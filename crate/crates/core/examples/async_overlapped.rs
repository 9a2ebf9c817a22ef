//! Asynchronous contacts with overlapping compute: each node works from a
//! stale copy while others push. Prints staleness and the gap to the optimum.

use distml::coordinator::{run_schedule, DelayModel, ExecutionMode, Schedule};
use distml::data::{generate_regression, partition, SplitMode, SplitSpec};
use distml::learners::{closed_form, Objective, Theta, UpdatePolicy};

fn main() -> distml::Result<()> {
    let truth = Theta::new(vec![1.0, -1.0, 1.0, -1.0, 1.0], 0.0);
    let data = generate_regression(1000, 5, &truth, 0.01, 1)?;
    let parts = partition(&data, &SplitSpec { mode: SplitMode::ShuffledIid, k: 4, seed: 1 })?;

    let objective = Objective::ridge(0.1);
    let policy = UpdatePolicy::full_gradient(UpdatePolicy::default_step(&objective, &data), 1);
    let schedule = Schedule::async_uniform(4, 11)?;
    let mode = ExecutionMode::Overlapped { delays: DelayModel::uniform(4, 0.5, 1.5, 3) };

    let oracle = closed_form(&objective, &data)?;
    for contacts in [100, 1_000, 10_000] {
        let trace = run_schedule(&parts, &objective, &policy, &schedule, &mode, contacts)?;
        let last = trace.records.last().expect("at least one contact");
        println!(
            "T = {contacts:>6}  gap = {:.3e}  max staleness = {}  sim time = {:.1}",
            trace.final_theta().dist2(&oracle),
            trace.max_staleness(),
            last.sim_time
        );
    }
    Ok(())
}

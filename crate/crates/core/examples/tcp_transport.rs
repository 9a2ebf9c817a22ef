//! The same serialized run through a TCP server and in process; the traces
//! agree in everything but byte counts and wall-clock time.

use std::sync::Arc;

use distml::coordinator::{
    node_learners, run_operators, ExecutionMode, InProcess, Schedule, SwapServer, TcpServerHandle,
    TcpTransport,
};
use distml::data::{generate_regression, partition, SplitMode, SplitSpec};
use distml::learners::{Objective, Theta, UpdatePolicy};

fn main() -> distml::Result<()> {
    let data = generate_regression(120, 2, &Theta::new(vec![1.0, 2.0], -1.0), 0.1, 8)?;
    let parts = partition(&data, &SplitSpec { mode: SplitMode::ShuffledIid, k: 3, seed: 8 })?;
    let objective = Objective::least_squares();
    let policy = UpdatePolicy::full_gradient(UpdatePolicy::default_step(&objective, &data), 2);
    let learners = node_learners(&parts, &objective, &policy);
    let schedule = Schedule::round_robin(3)?;
    let theta0 = Theta::zeros(2);

    let server = TcpServerHandle::spawn("127.0.0.1:0", theta0.clone())?;
    println!("server listening on {}", server.addr());
    let mut tcp = TcpTransport::connect(server.addr())?;
    let over_tcp = run_operators(&learners, &theta0, &schedule, &ExecutionMode::Serialized, 30, &mut tcp)?;
    drop(tcp);
    server.shutdown();

    let mut local = InProcess::new(Arc::new(SwapServer::new(theta0.clone())));
    let in_process = run_operators(&learners, &theta0, &schedule, &ExecutionMode::Serialized, 30, &mut local)?;

    println!("same protocol: {}", over_tcp.same_protocol(&in_process));
    println!("tcp bytes {}, in-process bytes {}", over_tcp.total_bytes(), in_process.total_bytes());
    println!("final theta {:?}", over_tcp.final_theta().as_slice());
    Ok(())
}

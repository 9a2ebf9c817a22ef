//! The central parameter server and the one-shot least-squares aggregation.
//!
//! The server keeps an append-only log `θ_0, θ_1, …`. A push records the
//! node's value as the next entry and hands back the entry before it; a pull
//! reads the latest entry without changing anything.

pub mod aggregate;
pub mod engine;
pub mod schedule;
pub mod server;
pub mod transport;
pub mod wire;

pub use aggregate::{aggregate_second_order, aggregate_second_order_via, SecondOrderStats};
pub use engine::{
    node_learners, run_operators, run_operators_observed, run_schedule, Delay, DelayModel, ExecutionMode, Trace,
    TraceRecord,
};
pub use schedule::Schedule;
pub use server::{ServerState, SwapServer};
pub use transport::{InProcess, Reply, TcpServerHandle, TcpTransport, Transport};

use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::learners::Theta;

/// The server's swap log `θ_0, θ_1, …, θ_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ServerState {
    theta_log: Vec<Theta>,
}

impl ServerState {
    pub fn new(theta_init: Theta) -> Self {
        Self {
            theta_log: vec![theta_init],
        }
    }

    /// Number of accepted pushes.
    pub fn t(&self) -> u64 {
        (self.theta_log.len() - 1) as u64
    }

    pub fn theta_init(&self) -> &Theta {
        &self.theta_log[0]
    }

    pub fn current(&self) -> &Theta {
        self.theta_log.last().expect("log always holds theta_init")
    }

    pub fn theta_log(&self) -> &[Theta] {
        &self.theta_log
    }

    /// Records `theta` as `θ_{t+1}` and returns `(θ_t, t + 1)`.
    fn swap(&mut self, theta: Theta) -> (Theta, u64) {
        let prev = self.current().clone();
        self.theta_log.push(theta);
        (prev, self.t())
    }
}

/// Thread-safe central server; all mutation goes through one lock, so
/// concurrent pushes serialize in arrival order.
#[derive(Debug)]
pub struct SwapServer {
    dim: usize,
    state: Mutex<ServerState>,
}

impl SwapServer {
    pub fn new(theta_init: Theta) -> Self {
        Self {
            dim: theta_init.as_slice().len(),
            state: Mutex::new(ServerState::new(theta_init)),
        }
    }

    /// Length of the flat parameter vector (weights plus intercept).
    pub fn param_len(&self) -> usize {
        self.dim
    }

    /// Reads `(θ_t, t)` without advancing `t`.
    pub fn pull(&self, _node_id: usize) -> (Theta, u64) {
        let state = self.lock();
        (state.current().clone(), state.t())
    }

    /// Records `theta` as the next log entry and returns the previous one.
    pub fn push_swap(&self, node_id: usize, theta: Theta) -> Result<Theta> {
        self.push_swap_indexed(node_id, theta).map(|(prev, _)| prev)
    }

    /// Like [`push_swap`](Self::push_swap), also returning the new `t`.
    pub fn push_swap_indexed(&self, _node_id: usize, theta: Theta) -> Result<(Theta, u64)> {
        Error::check_dim(self.dim, theta.as_slice().len())?;
        if !theta.is_finite() {
            return Err(Error::invalid("pushed theta must be finite"));
        }
        Ok(self.lock().swap(theta))
    }

    pub fn t(&self) -> u64 {
        self.lock().t()
    }

    pub fn snapshot(&self) -> ServerState {
        self.lock().clone()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, ServerState> {
        // A panic while holding the lock cannot leave the log half-written:
        // `swap` only pushes after cloning.
        self.state.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }
}

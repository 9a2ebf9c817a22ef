//! Simulated node-to-server channel.
//!
//! Only types implementing [`WireMessage`] can be sent, and every summary type
//! that implements it carries aggregates only. Raw datasets have no
//! implementation, so they cannot cross a channel.

/// A value that may be transmitted from a node to the server.
pub trait WireMessage: Clone {
    /// Number of real values this message puts on the wire.
    fn wire_reals(&self) -> usize;
}

impl<M: WireMessage> WireMessage for Vec<M> {
    fn wire_reals(&self) -> usize {
        self.iter().map(WireMessage::wire_reals).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Envelope<M> {
    pub from: usize,
    pub message: M,
}

/// An append-only record of every message sent.
#[derive(Clone, Debug)]
pub struct Channel<M> {
    log: Vec<Envelope<M>>,
}

impl<M> Default for Channel<M> {
    fn default() -> Self {
        Self { log: Vec::new() }
    }
}

impl<M: WireMessage> Channel<M> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn send(&mut self, from: usize, message: M) {
        self.log.push(Envelope { from, message });
    }

    pub fn messages(&self) -> &[Envelope<M>] {
        &self.log
    }

    pub fn total_reals(&self) -> usize {
        self.log.iter().map(|e| e.message.wire_reals()).sum()
    }

    pub fn reals_from(&self, node: usize) -> usize {
        self.log
            .iter()
            .filter(|e| e.from == node)
            .map(|e| e.message.wire_reals())
            .sum()
    }

    /// Every real value sent, in order, for content audits.
    pub fn payload(&self) -> Vec<f64>
    where
        M: AsReals,
    {
        self.log.iter().flat_map(|e| e.message.reals()).collect()
    }
}

/// Flattens a message into the reals it transmits.
pub trait AsReals {
    fn reals(&self) -> Vec<f64>;
}

impl<M: AsReals> AsReals for Vec<M> {
    fn reals(&self) -> Vec<f64> {
        self.iter().flat_map(AsReals::reals).collect()
    }
}

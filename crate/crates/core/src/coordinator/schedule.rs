use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::seeded_rng;
use crate::error::{Error, Result};

/// Order in which nodes contact the server.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Schedule {
    RoundRobin {
        k: usize,
    },
    /// Each contact is an independent draw with `P(S = i) = probs[i] > 0`.
    AsyncRandom {
        probs: Vec<f64>,
        #[serde(default)]
        seed: u64,
    },
}

impl Schedule {
    pub fn round_robin(k: usize) -> Result<Self> {
        let s = Schedule::RoundRobin { k };
        s.validate()?;
        Ok(s)
    }

    pub fn async_random(probs: Vec<f64>, seed: u64) -> Result<Self> {
        let s = Schedule::AsyncRandom { probs, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn async_uniform(k: usize, seed: u64) -> Result<Self> {
        Self::async_random(vec![1.0 / k as f64; k], seed)
    }

    pub fn k(&self) -> usize {
        match self {
            Schedule::RoundRobin { k } => *k,
            Schedule::AsyncRandom { probs, .. } => probs.len(),
        }
    }

    /// Rejects empty schedules and any node that would never be contacted.
    pub fn validate(&self) -> Result<()> {
        match self {
            Schedule::RoundRobin { k } if *k == 0 => {
                Err(Error::invalid("schedule needs at least one node"))
            }
            Schedule::RoundRobin { .. } => Ok(()),
            Schedule::AsyncRandom { probs, .. } => {
                if probs.is_empty() {
                    return Err(Error::invalid("schedule needs at least one node"));
                }
                if let Some((i, p)) = probs
                    .iter()
                    .enumerate()
                    .find(|(_, p)| !(**p > 0.0) || !p.is_finite())
                {
                    return Err(Error::invalid(format!(
                        "node {i} has contact probability {p}; every node must have positive probability"
                    )));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(format!(
                        "contact probabilities sum to {total}, not 1"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Infinite stream of contacting node ids.
    pub fn contacts(&self) -> Result<Contacts> {
        self.validate()?;
        Ok(match self {
            Schedule::RoundRobin { k } => Contacts::RoundRobin { k: *k, next: 0 },
            Schedule::AsyncRandom { probs, seed } => Contacts::Random {
                index: WeightedIndex::new(probs).map_err(|e| Error::invalid(e.to_string()))?,
                rng: seeded_rng(*seed),
            },
        })
    }
}

#[derive(Clone, Debug)]
pub enum Contacts {
    RoundRobin { k: usize, next: usize },
    Random {
        index: WeightedIndex<f64>,
        rng: ChaCha8Rng,
    },
}

impl Iterator for Contacts {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        Some(match self {
            Contacts::RoundRobin { k, next } => {
                let node = *next;
                *next = (*next + 1) % *k;
                node
            }
            Contacts::Random { index, rng } => index.sample(rng),
        })
    }
}

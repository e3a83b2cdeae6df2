//! Bounded trajectory replay buffer with three regimes.
//!
//! * `none` — no storage at all; every insert is rejected.
//! * `random` — FIFO eviction, uniform sampling.
//! * `rprs` — reward-prioritized: at capacity an insert replaces the current
//!   minimum-reward entry only if the newcomer beats it (ties keep the
//!   incumbent), and sampling draws without replacement with probability
//!   proportional to stored reward.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hypergrid::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    None,
    Random,
    Rprs,
}

impl std::str::FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Regime::None),
            "random" => Ok(Regime::Random),
            "rprs" => Ok(Regime::Rprs),
            other => Err(Error::Config(format!(
                "regime must be none, random or rprs, got {:?}",
                other
            ))),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::None => "none",
            Regime::Random => "random",
            Regime::Rprs => "rprs",
        })
    }
}

#[derive(Debug, Clone)]
struct Entry {
    trajectory: Trajectory,
    reward: f64,
    insertion: u64,
}

/// Aggregates over the stored rewards; `None` aggregates mark an empty
/// buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferStats {
    pub size: usize,
    pub min_reward: Option<f64>,
    pub max_reward: Option<f64>,
    pub mean_reward: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    regime: Regime,
    entries: Vec<Entry>,
    next_insertion: u64,
    inserts_seen: u64,
    samples_served: u64,
}

impl ReplayBuffer {
    pub fn new(regime: Regime, capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("buffer capacity must be at least 1".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            regime,
            entries: Vec::new(),
            next_insertion: 0,
            inserts_seen: 0,
            samples_served: 0,
        })
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Instrumentation counters: (inserts offered, trajectories served).
    pub fn op_counts(&self) -> (u64, u64) {
        (self.inserts_seen, self.samples_served)
    }

    /// Offer a trajectory. Returns whether it was stored.
    pub fn insert(&mut self, trajectory: Trajectory) -> bool {
        self.inserts_seen += 1;
        let reward = trajectory.terminal_reward;
        match self.regime {
            Regime::None => false,
            Regime::Random => {
                if self.entries.len() == self.capacity {
                    // FIFO: the oldest insertion index goes first (entries
                    // stay ordered by insertion, so that is the front).
                    self.entries.remove(0);
                }
                self.push(trajectory, reward);
                true
            }
            Regime::Rprs => {
                if self.entries.len() < self.capacity {
                    self.push(trajectory, reward);
                    return true;
                }
                let (min_idx, min_reward) = self
                    .entries
                    .iter()
                    .enumerate()
                    .min_by(|(_, a), (_, b)| {
                        a.reward
                            .partial_cmp(&b.reward)
                            .unwrap()
                            .then(b.insertion.cmp(&a.insertion))
                    })
                    .map(|(i, e)| (i, e.reward))
                    .unwrap();
                if reward > min_reward {
                    self.entries[min_idx] = Entry {
                        trajectory,
                        reward,
                        insertion: self.bump_insertion(),
                    };
                    true
                } else {
                    false
                }
            }
        }
    }

    fn push(&mut self, trajectory: Trajectory, reward: f64) {
        let insertion = self.bump_insertion();
        self.entries.push(Entry {
            trajectory,
            reward,
            insertion,
        });
    }

    fn bump_insertion(&mut self) -> u64 {
        let i = self.next_insertion;
        self.next_insertion += 1;
        i
    }

    /// Draw `min(m, len)` stored trajectories without replacement. Uniform
    /// under the random regime; reward-proportional among the remaining
    /// entries under rprs.
    pub fn sample(&mut self, m: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Trajectory>> {
        if self.regime == Regime::None {
            return Err(Error::Usage("cannot sample from the none regime".into()));
        }
        if self.entries.is_empty() {
            return Err(Error::Usage("cannot sample from an empty buffer".into()));
        }
        let take = m.min(self.entries.len());
        let mut pool: Vec<usize> = (0..self.entries.len()).collect();
        let mut out = Vec::with_capacity(take);
        for _ in 0..take {
            let pick = match self.regime {
                Regime::Random => rng.gen_range(0..pool.len()),
                Regime::Rprs => {
                    let total: f64 = pool.iter().map(|&i| self.entries[i].reward).sum();
                    let u: f64 = rng.gen::<f64>() * total;
                    let mut cumulative = 0.0;
                    let mut chosen = pool.len() - 1;
                    for (k, &i) in pool.iter().enumerate() {
                        cumulative += self.entries[i].reward;
                        if u < cumulative {
                            chosen = k;
                            break;
                        }
                    }
                    chosen
                }
                Regime::None => unreachable!(),
            };
            let idx = pool.swap_remove(pick);
            out.push(self.entries[idx].trajectory.clone());
        }
        self.samples_served += out.len() as u64;
        Ok(out)
    }

    pub fn stats(&self) -> BufferStats {
        if self.entries.is_empty() {
            return BufferStats {
                size: 0,
                min_reward: None,
                max_reward: None,
                mean_reward: None,
            };
        }
        let rewards: Vec<f64> = self.entries.iter().map(|e| e.reward).collect();
        let min = rewards.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = rewards.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
        BufferStats {
            size: rewards.len(),
            min_reward: Some(min),
            max_reward: Some(max),
            mean_reward: Some(mean),
        }
    }

    /// Stored rewards in insertion order (test and logging hook).
    pub fn rewards(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.reward).collect()
    }
}

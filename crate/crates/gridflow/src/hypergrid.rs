//! The n-dimensional hypergrid DAG.
//!
//! States are cells of an `n`-dimensional grid of side `H`. From any state
//! the agent may increment one coordinate that is not yet at the boundary,
//! or stop, which terminates the episode at the current cell. Every episode
//! starts at the all-zeros origin, so the reachable graph is a DAG ordered
//! by coordinate sum.
//!
//! The reward has three plateaus:
//!
//! ```text
//! R(x) = R0 + R1 * prod_i 1[ |x_i/H - 0.5| > 0.25 ]
//!           + R2 * prod_i 1[ 0.3 < |x_i/H - 0.5| < 0.4 ]
//! ```
//!
//! Cells where the R2 indicator fires are the modes; at `H = 8` the
//! qualifying coordinates are `{1, 7}`, giving `2^n` modes.

use crate::error::{Error, Result};

/// Largest state count `true_distribution` and the DP evaluator will
/// enumerate.
pub const MAX_ENUMERABLE_STATES: usize = 2_097_152;

/// A grid cell; the DAG vertex.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridState {
    coords: Vec<u16>,
}

impl GridState {
    pub fn new(coords: Vec<u16>) -> Self {
        GridState { coords }
    }

    pub fn coords(&self) -> &[u16] {
        &self.coords
    }

    pub fn coord_sum(&self) -> u32 {
        self.coords.iter().map(|&c| c as u32).sum()
    }
}

impl std::fmt::Display for GridState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", c)?;
        }
        write!(f, ")")
    }
}

/// An edge of the DAG: bump one coordinate, or stop at the current cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Increment(usize),
    Stop,
}

impl Action {
    /// Index of this action in a network output row of width `ndim + 1`
    /// (increments first, stop last).
    pub fn output_index(&self, ndim: usize) -> usize {
        match self {
            Action::Increment(i) => *i,
            Action::Stop => ndim,
        }
    }
}

/// Result of applying an action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Moved(GridState),
    Terminated(GridState),
}

/// Plateau heights of the reward. `0 < R0 < R1 < R2` is enforced; the
/// interesting regimes have `R0` much smaller than the plateaus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParams {
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
}

impl RewardParams {
    pub fn new(r0: f64, r1: f64, r2: f64) -> Result<Self> {
        if !(r0 > 0.0 && r0 < r1 && r1 < r2) {
            return Err(Error::Config(format!(
                "reward params must satisfy 0 < R0 < R1 < R2, got ({}, {}, {})",
                r0, r1, r2
            )));
        }
        Ok(RewardParams { r0, r1, r2 })
    }
}

/// One episode from the origin to a stopped cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<GridState>,
    pub actions: Vec<Action>,
    pub terminal_reward: f64,
}

impl Trajectory {
    /// Final (stopped) state of the episode.
    pub fn terminal(&self) -> &GridState {
        self.states.last().expect("trajectory has states")
    }

    /// Check the structural invariants against an environment.
    pub fn validate(&self, env: &Hypergrid, rp: &RewardParams) -> Result<()> {
        if self.states.is_empty() || self.actions.len() != self.states.len() {
            return Err(Error::Usage(
                "trajectory must hold k states and k actions (last one stop)".into(),
            ));
        }
        if self.states[0] != env.origin() {
            return Err(Error::Usage("trajectory must start at the origin".into()));
        }
        if self.actions.last() != Some(&Action::Stop) {
            return Err(Error::Usage("trajectory must end with stop".into()));
        }
        for (i, w) in self.states.windows(2).enumerate() {
            match env.step(&w[0], self.actions[i])? {
                Step::Moved(next) if next == w[1] => {}
                _ => {
                    return Err(Error::Usage(format!(
                        "transition {} does not match action {:?}",
                        i, self.actions[i]
                    )))
                }
            }
        }
        let want = env.reward(self.terminal(), rp);
        if (self.terminal_reward - want).abs() > 1e-12 {
            return Err(Error::Usage(format!(
                "terminal reward {} does not match reward({}) = {}",
                self.terminal_reward,
                self.terminal(),
                want
            )));
        }
        Ok(())
    }
}

/// Exact terminal distribution `p*(x) = R(x) / Z`, indexed by
/// [`Hypergrid::state_index`].
#[derive(Debug, Clone)]
pub struct TrueDistribution {
    probs: Vec<f64>,
    z: f64,
}

impl TrueDistribution {
    /// Build directly from per-state rewards (must be positive).
    pub fn from_rewards(rewards: &[f64]) -> Result<Self> {
        if rewards.is_empty() || rewards.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::Usage("rewards must be non-empty and positive".into()));
        }
        let z: f64 = rewards.iter().sum();
        Ok(TrueDistribution {
            probs: rewards.iter().map(|r| r / z).collect(),
            z,
        })
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// The environment: dimension count and side length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hypergrid {
    ndim: usize,
    side: u16,
}

impl Hypergrid {
    pub fn new(ndim: usize, side: u16) -> Result<Self> {
        if ndim == 0 {
            return Err(Error::Config("ndim must be at least 1".into()));
        }
        if side < 2 {
            return Err(Error::Config(format!("side must be at least 2, got {}", side)));
        }
        Ok(Hypergrid { ndim, side })
    }

    pub fn ndim(&self) -> usize {
        self.ndim
    }

    pub fn side(&self) -> u16 {
        self.side
    }

    pub fn origin(&self) -> GridState {
        GridState::new(vec![0; self.ndim])
    }

    /// Total number of cells, or a capacity error if it exceeds the
    /// enumerable bound.
    pub fn num_states(&self) -> Result<usize> {
        let mut n: usize = 1;
        for _ in 0..self.ndim {
            n = n
                .checked_mul(self.side as usize)
                .filter(|&n| n <= MAX_ENUMERABLE_STATES)
                .ok_or_else(|| {
                    Error::Capacity(format!(
                        "{}^{} states exceed the enumerable bound {}",
                        self.side, self.ndim, MAX_ENUMERABLE_STATES
                    ))
                })?;
        }
        Ok(n)
    }

    /// Mixed-radix index of a state: `sum_i coords[i] * side^i`.
    pub fn state_index(&self, s: &GridState) -> usize {
        let mut idx = 0usize;
        let mut stride = 1usize;
        for &c in s.coords() {
            idx += c as usize * stride;
            stride *= self.side as usize;
        }
        idx
    }

    /// Inverse of [`Self::state_index`].
    pub fn index_state(&self, mut idx: usize) -> GridState {
        let mut coords = vec![0u16; self.ndim];
        for c in coords.iter_mut() {
            *c = (idx % self.side as usize) as u16;
            idx /= self.side as usize;
        }
        GridState::new(coords)
    }

    fn check_state(&self, s: &GridState) -> Result<()> {
        if s.coords().len() != self.ndim || s.coords().iter().any(|&c| c >= self.side) {
            return Err(Error::Usage(format!(
                "state {} is not a valid {}-dim side-{} cell",
                s, self.ndim, self.side
            )));
        }
        Ok(())
    }

    /// Every action legal at `s`: one increment per non-saturated coordinate
    /// plus stop. Stop is always present.
    pub fn allowed_actions(&self, s: &GridState) -> Vec<Action> {
        let mut out: Vec<Action> = s
            .coords()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c + 1 < self.side)
            .map(|(i, _)| Action::Increment(i))
            .collect();
        out.push(Action::Stop);
        out
    }

    /// Apply an action. Disallowed moves are an error rather than a clamp.
    pub fn step(&self, s: &GridState, a: Action) -> Result<Step> {
        self.check_state(s)?;
        match a {
            Action::Stop => Ok(Step::Terminated(s.clone())),
            Action::Increment(i) => {
                if i >= self.ndim || s.coords()[i] + 1 >= self.side {
                    return Err(Error::IllegalMove(format!(
                        "increment {} not allowed at {}",
                        i, s
                    )));
                }
                let mut coords = s.coords().to_vec();
                coords[i] += 1;
                Ok(Step::Moved(GridState::new(coords)))
            }
        }
    }

    /// Parents in the DAG: one per nonzero coordinate. The origin has none.
    pub fn parents(&self, s: &GridState) -> Vec<(GridState, Action)> {
        let mut out = Vec::new();
        for (i, &c) in s.coords().iter().enumerate() {
            if c > 0 {
                let mut coords = s.coords().to_vec();
                coords[i] -= 1;
                out.push((GridState::new(coords), Action::Increment(i)));
            }
        }
        out
    }

    fn band_r1(&self, c: u16) -> bool {
        (c as f64 / self.side as f64 - 0.5).abs() > 0.25
    }

    fn band_r2(&self, c: u16) -> bool {
        let d = (c as f64 / self.side as f64 - 0.5).abs();
        d > 0.3 && d < 0.4
    }

    /// The three-plateau reward; strictly positive for every cell.
    pub fn reward(&self, s: &GridState, rp: &RewardParams) -> f64 {
        let r1 = s.coords().iter().all(|&c| self.band_r1(c));
        let r2 = s.coords().iter().all(|&c| self.band_r2(c));
        rp.r0 + if r1 { rp.r1 } else { 0.0 } + if r2 { rp.r2 } else { 0.0 }
    }

    /// Whether `s` sits on the highest-reward plateau.
    pub fn is_mode(&self, s: &GridState) -> bool {
        s.coords().iter().all(|&c| self.band_r2(c))
    }

    /// Coordinates that satisfy the mode band in one dimension.
    pub fn mode_coords(&self) -> Vec<u16> {
        (0..self.side).filter(|&c| self.band_r2(c)).collect()
    }

    /// Number of modes: (qualifying coordinates per dimension)^ndim.
    pub fn mode_count(&self) -> usize {
        self.mode_coords().len().pow(self.ndim as u32)
    }

    /// Width of the one-hot encoding: `ndim * side`.
    pub fn encoding_width(&self) -> usize {
        self.ndim * self.side as usize
    }

    /// Write the per-dimension one-hot encoding of `s` into `row`.
    pub fn encode_into(&self, s: &GridState, row: &mut [f64]) {
        debug_assert_eq!(row.len(), self.encoding_width());
        row.fill(0.0);
        for (i, &c) in s.coords().iter().enumerate() {
            row[i * self.side as usize + c as usize] = 1.0;
        }
    }

    pub fn encode(&self, s: &GridState) -> Vec<f64> {
        let mut row = vec![0.0; self.encoding_width()];
        self.encode_into(s, &mut row);
        row
    }

    /// Recover a state from its one-hot encoding.
    pub fn decode(&self, row: &[f64]) -> Result<GridState> {
        if row.len() != self.encoding_width() {
            return Err(Error::Dimension(format!(
                "encoding length {} vs expected {}",
                row.len(),
                self.encoding_width()
            )));
        }
        let mut coords = Vec::with_capacity(self.ndim);
        for block in row.chunks(self.side as usize) {
            let ones: Vec<usize> = block
                .iter()
                .enumerate()
                .filter(|(_, &v)| v == 1.0)
                .map(|(i, _)| i)
                .collect();
            if ones.len() != 1 || block.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Usage("encoding block is not one-hot".into()));
            }
            coords.push(ones[0] as u16);
        }
        Ok(GridState::new(coords))
    }

    /// Longest possible episode: every coordinate saturated, then stop.
    pub fn max_trajectory_len(&self) -> usize {
        self.ndim * (self.side as usize - 1) + 1
    }

    /// Exact normalized reward distribution over all cells.
    pub fn true_distribution(&self, rp: &RewardParams) -> Result<TrueDistribution> {
        let n = self.num_states()?;
        let rewards: Vec<f64> = (0..n)
            .map(|i| self.reward(&self.index_state(i), rp))
            .collect();
        TrueDistribution::from_rewards(&rewards)
    }
}

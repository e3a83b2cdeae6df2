//! Flow models, exploratory trajectory sampling, and the two training
//! objectives: flow matching and trajectory balance.
//!
//! A [`FlowModel`] wraps an MLP whose output row has one entry per increment
//! action plus one for stop. Under the flow-matching objective the outputs
//! are log edge flows; under trajectory balance they are policy logits and
//! the model carries a learnable log-partition scalar.
//!
//! The flow-matching loss per batch state `s` has two parts:
//! a conservation term (skipped at the origin, which has no parents)
//!
//! ```text
//! ( log[eps + sum_parents F(s'->s)] - log[eps + sum_allowed F(s->a)] )^2
//! ```
//!
//! and, at states a trajectory stopped at, a terminal-matching term
//! anchoring the stop edge to the observed reward
//!
//! ```text
//! ( log[eps + F(s->stop)] - log[eps + R(s)] )^2
//! ```
//!
//! Without the anchor the objective is degenerate (all-zero flows minimize
//! it); anchoring only at stopped states keeps rewards observable solely
//! through termination. The trajectory-balance loss per trajectory ending
//! at `x` is
//!
//! ```text
//! ( logZ + sum_t log P_F(s_{t+1}|s_t) - sum_t log P_B(s_t|s_{t+1}) - log R(x) )^2
//! ```
//!
//! with a uniform backward policy over parents.

use std::collections::HashMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hypergrid::{Action, GridState, Hypergrid, RewardParams, Step, Trajectory};
use crate::nn::{init_params, mlp_forward, AdamParams, AdamState, MlpGrads, MlpParams, Tape};
use crate::tensor::Tensor;

/// Smoothing constant inside the flow-matching logarithms.
pub const FM_LOG_EPS: f64 = 1e-8;

/// Hidden width of the default network.
pub const HIDDEN_WIDTH: usize = 256;

/// Which training objective the model is wired for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    FlowMatching,
    TrajectoryBalance,
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fm" => Ok(Objective::FlowMatching),
            "tb" => Ok(Objective::TrajectoryBalance),
            other => Err(Error::Config(format!(
                "objective must be fm or tb, got {:?}",
                other
            ))),
        }
    }
}

/// The learnable model: an MLP over one-hot state encodings plus, for
/// trajectory balance, a log-partition scalar.
#[derive(Debug, Clone)]
pub struct FlowModel {
    pub mlp: MlpParams,
    pub objective: Objective,
    pub log_z: f64,
}

impl FlowModel {
    /// Paper-sized network: two hidden layers of 256 units.
    pub fn new(objective: Objective, seed: u64, env: &Hypergrid) -> Result<Self> {
        Self::with_hidden(objective, seed, env, HIDDEN_WIDTH)
    }

    /// Same architecture with a custom hidden width (small nets keep
    /// gradient-check tests fast).
    pub fn with_hidden(
        objective: Objective,
        seed: u64,
        env: &Hypergrid,
        hidden: usize,
    ) -> Result<Self> {
        let dims = [env.encoding_width(), hidden, hidden, env.ndim() + 1];
        Ok(FlowModel {
            mlp: init_params(seed, &dims)?,
            objective,
            log_z: 0.0,
        })
    }

    /// Lengths of the optimizer slots for this model (MLP slots, plus one
    /// for log Z under trajectory balance).
    pub fn adam_slot_lens(&self) -> Vec<usize> {
        let mut lens = self.mlp.param_slot_lens();
        if self.objective == Objective::TrajectoryBalance {
            lens.push(1);
        }
        lens
    }

    /// Fresh optimizer state sized for this model.
    pub fn new_adam(&self, hp: AdamParams) -> Result<AdamState> {
        AdamState::new(hp, &self.adam_slot_lens())
    }

    /// Forward pass over a batch of states (one row per state).
    pub fn forward_states(
        &self,
        env: &Hypergrid,
        states: &[GridState],
    ) -> Result<(Tensor, Tape)> {
        let width = env.encoding_width();
        let mut x = Tensor::zeros(&[states.len(), width]);
        for (i, s) in states.iter().enumerate() {
            env.encode_into(s, x.row_mut(i));
        }
        mlp_forward(&self.mlp, &x)
    }
}

/// Probabilities over `allowed`, from a masked stable softmax of the output
/// row. For flow-matching models this equals flows normalized by their sum.
fn masked_softmax(row: &[f64], allowed: &[Action], ndim: usize) -> Vec<f64> {
    let max = allowed
        .iter()
        .map(|a| row[a.output_index(ndim)])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = allowed
        .iter()
        .map(|a| (row[a.output_index(ndim)] - max).exp())
        .collect();
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    probs
}

/// Log-probabilities over `allowed` (stable masked log-softmax).
fn masked_log_softmax(row: &[f64], allowed: &[Action], ndim: usize) -> Vec<f64> {
    let max = allowed
        .iter()
        .map(|a| row[a.output_index(ndim)])
        .fold(f64::NEG_INFINITY, f64::max);
    let lse = allowed
        .iter()
        .map(|a| (row[a.output_index(ndim)] - max).exp())
        .sum::<f64>()
        .ln()
        + max;
    allowed
        .iter()
        .map(|a| row[a.output_index(ndim)] - lse)
        .collect()
}

/// Edge flows at `s`: `exp` of the network outputs restricted to the allowed
/// actions. The stop entry is the terminal flow. Flow-matching models only.
pub fn edge_flows(
    model: &FlowModel,
    env: &Hypergrid,
    s: &GridState,
) -> Result<Vec<(Action, f64)>> {
    if model.objective != Objective::FlowMatching {
        return Err(Error::Usage(
            "edge flows are defined for flow-matching models".into(),
        ));
    }
    let (y, _) = model.forward_states(env, std::slice::from_ref(s))?;
    let row = y.row(0);
    let out: Vec<(Action, f64)> = env
        .allowed_actions(s)
        .into_iter()
        .map(|a| (a, row[a.output_index(env.ndim())].exp()))
        .collect();
    if out.iter().any(|(_, f)| !f.is_finite()) {
        return Err(Error::Diverged(format!("non-finite edge flow at {}", s)));
    }
    Ok(out)
}

/// Forward transition probabilities over the allowed actions at `s`.
pub fn forward_policy(
    model: &FlowModel,
    env: &Hypergrid,
    s: &GridState,
) -> Result<Vec<(Action, f64)>> {
    let (y, _) = model.forward_states(env, std::slice::from_ref(s))?;
    let allowed = env.allowed_actions(s);
    let probs = masked_softmax(y.row(0), &allowed, env.ndim());
    Ok(allowed.into_iter().zip(probs).collect())
}

/// Policies for a whole batch of states with one forward pass.
pub fn batched_policies(
    model: &FlowModel,
    env: &Hypergrid,
    states: &[GridState],
) -> Result<Vec<Vec<(Action, f64)>>> {
    if states.is_empty() {
        return Ok(Vec::new());
    }
    let (y, _) = model.forward_states(env, states)?;
    let mut out = Vec::with_capacity(states.len());
    for (i, s) in states.iter().enumerate() {
        let allowed = env.allowed_actions(s);
        let probs = masked_softmax(y.row(i), &allowed, env.ndim());
        out.push(allowed.into_iter().zip(probs).collect());
    }
    Ok(out)
}

/// Exploration settings for the rollout policy: with probability `epsilon`
/// an action is drawn uniformly over the allowed set.
#[derive(Debug, Clone, Copy)]
pub struct SamplerConfig {
    pub epsilon: f64,
    pub seed: u64,
}

/// Stateful trajectory sampler; the RNG stream persists across calls so a
/// fixed seed yields an identical trajectory sequence.
pub struct TrajectorySampler {
    epsilon: f64,
    rng: ChaCha8Rng,
}

struct Rollout {
    states: Vec<GridState>,
    actions: Vec<Action>,
    done: bool,
}

impl TrajectorySampler {
    pub fn new(cfg: SamplerConfig) -> Result<Self> {
        if !(0.0..=1.0).contains(&cfg.epsilon) {
            return Err(Error::Config(format!(
                "epsilon must be in [0, 1], got {}",
                cfg.epsilon
            )));
        }
        Ok(TrajectorySampler {
            epsilon: cfg.epsilon,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        })
    }

    pub fn sample(
        &mut self,
        model: &FlowModel,
        env: &Hypergrid,
        rp: &RewardParams,
    ) -> Result<Trajectory> {
        Ok(self.sample_batch(model, env, rp, 1)?.pop().unwrap())
    }

    /// Roll out `count` trajectories in lockstep, sharing one forward pass
    /// per round over the distinct live states.
    pub fn sample_batch(
        &mut self,
        model: &FlowModel,
        env: &Hypergrid,
        rp: &RewardParams,
        count: usize,
    ) -> Result<Vec<Trajectory>> {
        if count == 0 {
            return Err(Error::Usage("cannot sample zero trajectories".into()));
        }
        let max_len = env.max_trajectory_len();
        let mut rollouts: Vec<Rollout> = (0..count)
            .map(|_| Rollout {
                states: vec![env.origin()],
                actions: Vec::new(),
                done: false,
            })
            .collect();

        loop {
            // Distinct current states of the live rollouts, first-seen order.
            let mut row_of: HashMap<GridState, usize> = HashMap::new();
            let mut rows: Vec<GridState> = Vec::new();
            for r in rollouts.iter().filter(|r| !r.done) {
                let cur = r.states.last().unwrap();
                if !row_of.contains_key(cur) {
                    row_of.insert(cur.clone(), rows.len());
                    rows.push(cur.clone());
                }
            }
            if rows.is_empty() {
                break;
            }
            let policies = batched_policies(model, env, &rows)?;

            for r in rollouts.iter_mut().filter(|r| !r.done) {
                let cur = r.states.last().unwrap().clone();
                let policy = &policies[row_of[&cur]];
                let k = policy.len() as f64;
                let u: f64 = self.rng.gen();
                let mut cumulative = 0.0;
                let mut chosen = policy.last().unwrap().0;
                for (a, p) in policy {
                    cumulative += (1.0 - self.epsilon) * p + self.epsilon / k;
                    if u < cumulative {
                        chosen = *a;
                        break;
                    }
                }
                r.actions.push(chosen);
                match env.step(&cur, chosen)? {
                    Step::Terminated(_) => r.done = true,
                    Step::Moved(next) => {
                        r.states.push(next);
                        if r.states.len() > max_len {
                            return Err(Error::Usage(format!(
                                "rollout exceeded the DAG length bound {} — internal logic error",
                                max_len
                            )));
                        }
                    }
                }
            }
        }

        Ok(rollouts
            .into_iter()
            .map(|r| {
                let terminal_reward = env.reward(r.states.last().unwrap(), rp);
                Trajectory {
                    states: r.states,
                    actions: r.actions,
                    terminal_reward,
                }
            })
            .collect())
    }

    /// Advance the underlying stream; used to derive independent substreams.
    pub fn fork_seed(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

/// Distinct states appearing in the given trajectories, in first-seen order.
pub fn collect_unique_states<'a>(
    trajectories: impl IntoIterator<Item = &'a Trajectory>,
) -> Vec<GridState> {
    let mut seen: HashMap<GridState, ()> = HashMap::new();
    let mut out = Vec::new();
    for traj in trajectories {
        for s in &traj.states {
            if seen.insert(s.clone(), ()).is_none() {
                out.push(s.clone());
            }
        }
    }
    out
}

/// A flow-matching training batch: the distinct states drawn from a set of
/// trajectories, with the subset that trajectories stopped at marked as
/// terminal. Conservation is enforced at every state; the reward anchor on
/// the stop edge applies only at terminal states — the reward of a cell is
/// only observed by stopping there.
#[derive(Debug, Clone)]
pub struct FmBatch {
    states: Vec<GridState>,
    is_terminal: Vec<bool>,
}

impl FmBatch {
    /// Decompose trajectories into their distinct states (first-seen order),
    /// marking every stopped-at state as terminal.
    pub fn from_trajectories<'a>(
        trajectories: impl IntoIterator<Item = &'a Trajectory> + Clone,
    ) -> Self {
        let states = collect_unique_states(trajectories.clone());
        let mut index: HashMap<&GridState, usize> = HashMap::new();
        for (i, s) in states.iter().enumerate() {
            index.insert(s, i);
        }
        let mut is_terminal = vec![false; states.len()];
        for traj in trajectories {
            is_terminal[index[traj.terminal()]] = true;
        }
        FmBatch { states, is_terminal }
    }

    /// A batch with explicit terminal markings (test and evaluation hook).
    pub fn new(states: Vec<GridState>, terminals: &[GridState]) -> Self {
        let is_terminal = states.iter().map(|s| terminals.contains(s)).collect();
        FmBatch { states, is_terminal }
    }

    pub fn states(&self) -> &[GridState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    fn entries(&self) -> impl Iterator<Item = (&GridState, bool)> {
        self.states.iter().zip(self.is_terminal.iter().copied())
    }
}

/// The two components of the flow-matching loss over a batch, averaged over
/// the batch states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FmLossParts {
    /// Mean squared log-ratio of parent inflow to total outflow
    /// (origin states contribute zero here).
    pub conservation: f64,
    /// Mean squared log-ratio of the stop flow to the reward at terminal
    /// states.
    pub terminal: f64,
}

impl FmLossParts {
    pub fn total(&self) -> f64 {
        self.conservation + self.terminal
    }
}

/// Evaluate the flow-matching loss from an explicit edge-flow table.
/// `flow(s, a)` must be defined for every allowed action of every batch
/// state and for every parent edge into a batch state.
pub fn fm_loss_from_flows(
    env: &Hypergrid,
    rp: &RewardParams,
    batch: &FmBatch,
    flow: impl Fn(&GridState, Action) -> f64,
    eps_log: f64,
) -> Result<FmLossParts> {
    if batch.is_empty() {
        return Err(Error::Usage("flow-matching batch is empty".into()));
    }
    let mut conservation = 0.0;
    let mut terminal = 0.0;
    for (s, is_terminal) in batch.entries() {
        let outflow: f64 = env
            .allowed_actions(s)
            .into_iter()
            .map(|a| flow(s, a))
            .sum();
        let parents = env.parents(s);
        if !parents.is_empty() {
            let inflow: f64 = parents.iter().map(|(p, a)| flow(p, *a)).sum();
            let d = (eps_log + inflow).ln() - (eps_log + outflow).ln();
            conservation += d * d;
        }
        if is_terminal {
            let stop_flow = flow(s, Action::Stop);
            let d = (eps_log + stop_flow).ln() - (eps_log + env.reward(s, rp)).ln();
            terminal += d * d;
        }
    }
    let n = batch.len() as f64;
    Ok(FmLossParts {
        conservation: conservation / n,
        terminal: terminal / n,
    })
}

/// Flow-matching loss over a batch, with gradients for every network
/// parameter. Returns `(loss, grads)`.
pub fn fm_loss(
    model: &FlowModel,
    env: &Hypergrid,
    rp: &RewardParams,
    batch: &FmBatch,
) -> Result<(f64, MlpGrads)> {
    if model.objective != Objective::FlowMatching {
        return Err(Error::Usage(
            "fm_loss requires a flow-matching model".into(),
        ));
    }
    if batch.is_empty() {
        return Err(Error::Usage("flow-matching batch is empty".into()));
    }
    let ndim = env.ndim();
    let eps = FM_LOG_EPS;

    // Rows: batch states plus any parent not already present.
    let mut row_of: HashMap<GridState, usize> = HashMap::new();
    let mut rows: Vec<GridState> = Vec::new();
    let add_row = |s: &GridState, rows: &mut Vec<GridState>, row_of: &mut HashMap<GridState, usize>| {
        if !row_of.contains_key(s) {
            row_of.insert(s.clone(), rows.len());
            rows.push(s.clone());
        }
    };
    for s in batch.states() {
        add_row(s, &mut rows, &mut row_of);
    }
    let parent_lists: Vec<Vec<(GridState, Action)>> =
        batch.states().iter().map(|s| env.parents(s)).collect();
    for parents in &parent_lists {
        for (p, _) in parents {
            add_row(p, &mut rows, &mut row_of);
        }
    }

    let (y, tape) = model.forward_states(env, &rows)?;

    // Flows for the allowed actions of every row (disallowed entries stay 0
    // and are never read: parent edges are always allowed at the parent).
    let width = ndim + 1;
    let mut flows = vec![0.0; rows.len() * width];
    for (i, s) in rows.iter().enumerate() {
        let row = y.row(i);
        for a in env.allowed_actions(s) {
            let j = a.output_index(ndim);
            flows[i * width + j] = row[j].exp();
        }
    }

    let inv_n = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut seed = Tensor::zeros(y.shape());
    for ((s, is_terminal), parents) in batch.entries().zip(&parent_lists) {
        let si = row_of[s];
        let outflow: f64 = env
            .allowed_actions(s)
            .iter()
            .map(|a| flows[si * width + a.output_index(ndim)])
            .sum();
        if !parents.is_empty() {
            let inflow: f64 = parents
                .iter()
                .map(|(p, a)| flows[row_of[p] * width + a.output_index(ndim)])
                .sum();
            let d = (eps + inflow).ln() - (eps + outflow).ln();
            loss += d * d * inv_n;
            let d_in = 2.0 * d * inv_n / (eps + inflow);
            let d_out = -2.0 * d * inv_n / (eps + outflow);
            for (p, a) in parents {
                let (pi, j) = (row_of[p], a.output_index(ndim));
                seed.row_mut(pi)[j] += d_in * flows[pi * width + j];
            }
            for a in env.allowed_actions(s) {
                let j = a.output_index(ndim);
                seed.row_mut(si)[j] += d_out * flows[si * width + j];
            }
        }
        if is_terminal {
            let stop = ndim;
            let stop_flow = flows[si * width + stop];
            let d = (eps + stop_flow).ln() - (eps + env.reward(s, rp)).ln();
            loss += d * d * inv_n;
            seed.row_mut(si)[stop] += 2.0 * d * inv_n / (eps + stop_flow) * stop_flow;
        }
    }

    if !loss.is_finite() {
        return Err(Error::Diverged(format!(
            "flow-matching loss is {} over {} states",
            loss,
            batch.len()
        )));
    }
    let grads = tape.backward(&model.mlp, &seed)?;
    Ok((loss, grads))
}

/// Trajectory-balance loss of a single trajectory (value only).
pub fn tb_loss(model: &FlowModel, env: &Hypergrid, traj: &Trajectory) -> Result<f64> {
    let (loss, _, _) = tb_loss_batch(model, env, std::slice::from_ref(traj))?;
    Ok(loss)
}

/// Trajectory-balance loss averaged over a batch, with gradients for the
/// network parameters and the log-partition scalar.
pub fn tb_loss_batch(
    model: &FlowModel,
    env: &Hypergrid,
    trajectories: &[Trajectory],
) -> Result<(f64, MlpGrads, f64)> {
    if model.objective != Objective::TrajectoryBalance {
        return Err(Error::Usage(
            "tb_loss requires a trajectory-balance model".into(),
        ));
    }
    if trajectories.is_empty() {
        return Err(Error::Usage("trajectory-balance batch is empty".into()));
    }
    let ndim = env.ndim();

    let mut row_of: HashMap<GridState, usize> = HashMap::new();
    let mut rows: Vec<GridState> = Vec::new();
    for traj in trajectories {
        for s in &traj.states {
            if !row_of.contains_key(s) {
                row_of.insert(s.clone(), rows.len());
                rows.push(s.clone());
            }
        }
    }
    let (y, tape) = model.forward_states(env, &rows)?;

    // Log-policies per row, aligned with the allowed-action list.
    let allowed_per_row: Vec<Vec<Action>> =
        rows.iter().map(|s| env.allowed_actions(s)).collect();
    let log_probs: Vec<Vec<f64>> = rows
        .iter()
        .enumerate()
        .map(|(i, _)| masked_log_softmax(y.row(i), &allowed_per_row[i], ndim))
        .collect();

    let inv_b = 1.0 / trajectories.len() as f64;
    let mut loss = 0.0;
    let mut d_log_z = 0.0;
    let mut seed = Tensor::zeros(y.shape());
    for traj in trajectories {
        if traj.actions.is_empty() || *traj.actions.last().unwrap() != Action::Stop {
            return Err(Error::Usage("trajectory must end with stop".into()));
        }
        let mut log_pf = 0.0;
        for (s, a) in traj.states.iter().zip(&traj.actions) {
            let ri = row_of[s];
            let pos = allowed_per_row[ri]
                .iter()
                .position(|x| x == a)
                .ok_or_else(|| {
                    Error::Usage(format!("action {:?} not allowed at {}", a, s))
                })?;
            log_pf += log_probs[ri][pos];
        }
        // Uniform backward policy over parents; the stop step has no
        // backward counterpart.
        let log_pb: f64 = traj.states[1..]
            .iter()
            .map(|s| -(env.parents(s).len() as f64).ln())
            .sum();
        let residual = model.log_z + log_pf - log_pb - traj.terminal_reward.ln();
        loss += residual * residual * inv_b;
        let scale = 2.0 * residual * inv_b;
        d_log_z += scale;
        // d log-softmax: delta(a = chosen) - p(a), over the allowed set.
        for (s, a) in traj.states.iter().zip(&traj.actions) {
            let ri = row_of[s];
            let row_seed = seed.row_mut(ri);
            for (pos, b) in allowed_per_row[ri].iter().enumerate() {
                let p = log_probs[ri][pos].exp();
                let indicator = if b == a { 1.0 } else { 0.0 };
                row_seed[b.output_index(ndim)] += scale * (indicator - p);
            }
        }
    }

    if !loss.is_finite() {
        return Err(Error::Diverged(format!(
            "trajectory-balance loss is {} over {} trajectories",
            loss,
            trajectories.len()
        )));
    }
    let grads = tape.backward(&model.mlp, &seed)?;
    Ok((loss, grads, d_log_z))
}

/// One optimizer update on the union of an online batch and a replayed
/// batch. Online and replayed trajectories weigh equally; flow matching
/// decomposes the union into its distinct states first. Returns the
/// pre-update objective value.
pub fn train_step(
    model: &mut FlowModel,
    env: &Hypergrid,
    rp: &RewardParams,
    online: &[Trajectory],
    replayed: &[Trajectory],
    opt: &mut AdamState,
) -> Result<f64> {
    if online.is_empty() {
        return Err(Error::Usage("online batch must be non-empty".into()));
    }
    match model.objective {
        Objective::FlowMatching => {
            let batch = FmBatch::from_trajectories(online.iter().chain(replayed));
            let (loss, grads) = fm_loss(model, env, rp, &batch)?;
            let grad_slices = grads.grad_slices();
            let mut param_slices = model.mlp.param_slices_mut();
            opt.step(&mut param_slices, &grad_slices)?;
            Ok(loss)
        }
        Objective::TrajectoryBalance => {
            let union: Vec<Trajectory> = online.iter().chain(replayed).cloned().collect();
            let (loss, grads, d_log_z) = tb_loss_batch(model, env, &union)?;
            let FlowModel { mlp, log_z, .. } = model;
            let mut grad_slices = grads.grad_slices();
            let d_log_z_slice = [d_log_z];
            grad_slices.push(&d_log_z_slice);
            let mut param_slices = mlp.param_slices_mut();
            param_slices.push(std::slice::from_mut(log_z));
            opt.step(&mut param_slices, &grad_slices)?;
            Ok(loss)
        }
    }
}

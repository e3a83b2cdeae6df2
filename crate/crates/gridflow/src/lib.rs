//! GFlowNet training on hypergrid environments, with a study harness for
//! replay-buffer regimes.
//!
//! The crate trains a flow network to sample terminal grid cells with
//! probability proportional to a three-plateau reward, and compares three
//! ways of feeding the learner: on-policy samples only, a FIFO replay
//! buffer with uniform sampling, and a reward-prioritized buffer (R-PRS)
//! that keeps and preferentially replays the highest-reward trajectories.
//!
//! Everything runs on a small self-contained numerical stack: dense f64
//! tensors, a two-hidden-layer MLP with a reverse-mode tape, and Adam.
//!
//! Start with the runnable examples:
//!
//! ```bash
//! cargo run --release --example hypergrid_tour
//! cargo run --release --example train_tiny_grid
//! cargo run --release --example replay_regimes
//! cargo run --release --example mode_discovery_4d
//! cargo run --release --example replay_sweep
//! cargo run --release --example plot_curves
//! cargo run --release --example gradient_check
//! ```
//!
//! or with the thin CLI (`run`, `matrix`, `plot` subcommands):
//!
//! ```bash
//! cargo run --release -- run --set ndim=2 --set train_steps=500 --out-dir out
//! ```

pub mod error;
pub mod gflownet;
pub mod harness;
pub mod hypergrid;
pub mod metrics;
pub mod nn;
pub mod replay;
pub mod tensor;

pub use error::{Error, Result};
pub use gflownet::{
    batched_policies, collect_unique_states, edge_flows, fm_loss, fm_loss_from_flows,
    forward_policy, tb_loss, tb_loss_batch, train_step, FlowModel, FmBatch, FmLossParts,
    Objective, SamplerConfig, TrajectorySampler, FM_LOG_EPS, HIDDEN_WIDTH,
};
pub use harness::{RunConfig, RunReport};
pub use hypergrid::{
    Action, GridState, Hypergrid, RewardParams, Step, Trajectory, TrueDistribution,
};
pub use metrics::{
    empirical_l1, empirical_l1_to, mean_abs_diff, terminal_distribution, MetricsRecord,
    ModeTracker, SampleSource,
};
pub use nn::{init_params, mlp_forward, AdamParams, AdamState, MlpGrads, MlpParams, Tape};
pub use replay::{BufferStats, Regime, ReplayBuffer};
pub use tensor::Tensor;

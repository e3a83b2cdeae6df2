//! Mode-discovery tracking, exact evaluation of the learned terminal
//! distribution, the empirical L1 metric, and CSV emission.
//!
//! The learned terminal distribution is computed exactly by a forward pass
//! over the DAG in coordinate-sum order: unit mass enters at the origin,
//! each state keeps `mass * P(stop|s)` as terminal probability and splits
//! the rest over its increment children. No rollouts are involved, so the
//! metric is free of estimator noise.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gflownet::{batched_policies, FlowModel};
use crate::hypergrid::{Action, GridState, Hypergrid, RewardParams, Step, TrueDistribution};

/// Where a terminal state came from. Only online samples advance the
/// states-visited counter; replayed trajectories revisit old states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSource {
    Online,
    Replay,
}

/// Tracks which modes have been reached and how many online terminal states
/// have been generated.
#[derive(Debug, Clone)]
pub struct ModeTracker {
    discovered: HashSet<GridState>,
    total_modes: usize,
    states_visited: u64,
}

impl ModeTracker {
    pub fn new(env: &Hypergrid) -> Self {
        ModeTracker {
            discovered: HashSet::new(),
            total_modes: env.mode_count(),
            states_visited: 0,
        }
    }

    pub fn record(&mut self, env: &Hypergrid, terminal: &GridState, source: SampleSource) {
        if source == SampleSource::Online {
            self.states_visited += 1;
        }
        if env.is_mode(terminal) {
            self.discovered.insert(terminal.clone());
        }
    }

    pub fn modes_found(&self) -> usize {
        self.discovered.len()
    }

    pub fn total_modes(&self) -> usize {
        self.total_modes
    }

    pub fn modes_pct(&self) -> f64 {
        if self.total_modes == 0 {
            // Degenerate grids (small H) have no mode band at all.
            return 0.0;
        }
        self.discovered.len() as f64 / self.total_modes as f64
    }

    pub fn states_visited(&self) -> u64 {
        self.states_visited
    }
}

/// Exact learned terminal distribution `p_theta(x)`, indexed by
/// [`Hypergrid::state_index`]. Errors if the state space is not enumerable
/// or probability mass is not conserved to 1e-9.
pub fn terminal_distribution(model: &FlowModel, env: &Hypergrid) -> Result<Vec<f64>> {
    let n = env.num_states()?;
    let max_sum = env.ndim() * (env.side() as usize - 1);
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); max_sum + 1];
    for i in 0..n {
        buckets[env.index_state(i).coord_sum() as usize].push(i);
    }

    let mut mass = vec![0.0f64; n];
    mass[env.state_index(&env.origin())] = 1.0;
    let mut p_term = vec![0.0f64; n];

    for bucket in &buckets {
        if bucket.is_empty() {
            continue;
        }
        let states: Vec<GridState> = bucket.iter().map(|&i| env.index_state(i)).collect();
        let policies = batched_policies(model, env, &states)?;
        for ((&i, s), policy) in bucket.iter().zip(&states).zip(&policies) {
            let m = mass[i];
            for (a, p) in policy {
                match a {
                    Action::Stop => p_term[i] = m * p,
                    Action::Increment(_) => {
                        if let Step::Moved(child) = env.step(s, *a)? {
                            mass[env.state_index(&child)] += m * p;
                        }
                    }
                }
            }
        }
    }

    let total: f64 = p_term.iter().sum();
    if !(total.is_finite() && (total - 1.0).abs() <= 1e-9) {
        return Err(Error::Diverged(format!(
            "terminal distribution mass {} is not 1 within 1e-9",
            total
        )));
    }
    Ok(p_term)
}

/// Mean absolute difference between two distributions over the same states.
pub fn mean_abs_diff(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::Usage(format!(
            "distributions must share a non-empty support, got {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64)
}

/// Empirical L1 against a precomputed true distribution.
pub fn empirical_l1_to(
    model: &FlowModel,
    env: &Hypergrid,
    target: &TrueDistribution,
) -> Result<f64> {
    let p_theta = terminal_distribution(model, env)?;
    mean_abs_diff(&p_theta, target.probs())
}

/// Empirical L1: mean over states of `|p_theta(x) - R(x)/Z|`.
pub fn empirical_l1(model: &FlowModel, env: &Hypergrid, rp: &RewardParams) -> Result<f64> {
    let target = env.true_distribution(rp)?;
    empirical_l1_to(model, env, &target)
}

/// One evaluation row of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub wall_step: u64,
    pub states_visited: u64,
    pub modes_found: u64,
    pub modes_pct: f64,
    pub empirical_l1: f64,
    pub mean_loss: f64,
    pub mean_online_reward: f64,
}

pub const CSV_HEADER: &str =
    "step,states_visited,modes_found,modes_pct,empirical_l1,mean_loss,mean_online_reward";

/// Format a float so that it parses back to the identical value and shows at
/// least six significant digits (trailing zeros pad shorter values).
pub fn fmt_float(x: f64) -> String {
    let mut s = format!("{}", x);
    if !x.is_finite() {
        return s;
    }
    let sig = s
        .chars()
        .filter(|c| c.is_ascii_digit())
        .skip_while(|&c| c == '0')
        .count();
    if sig >= 6 {
        return s;
    }
    if !s.contains('.') {
        s.push('.');
    }
    for _ in 0..(6 - sig) {
        s.push('0');
    }
    s
}

/// Write records as CSV with the exact schema above (LF line endings).
pub fn write_csv(records: &[MetricsRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Usage("no records to write".into()));
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.wall_step,
            r.states_visited,
            r.modes_found,
            fmt_float(r.modes_pct),
            fmt_float(r.empirical_l1),
            fmt_float(r.mean_loss),
            fmt_float(r.mean_online_reward),
        ));
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Parse a CSV produced by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::Usage(format!(
                "unexpected metrics header: {:?}",
                other
            )))
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Usage(format!(
                "line {} has {} fields, expected 7",
                i + 2,
                fields.len()
            )));
        }
        let parse_u = |s: &str| -> Result<u64> {
            s.parse()
                .map_err(|e| Error::Usage(format!("bad integer {:?}: {}", s, e)))
        };
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|e| Error::Usage(format!("bad float {:?}: {}", s, e)))
        };
        records.push(MetricsRecord {
            wall_step: parse_u(fields[0])?,
            states_visited: parse_u(fields[1])?,
            modes_found: parse_u(fields[2])?,
            modes_pct: parse_f(fields[3])?,
            empirical_l1: parse_f(fields[4])?,
            mean_loss: parse_f(fields[5])?,
            mean_online_reward: parse_f(fields[6])?,
        });
    }
    Ok(records)
}

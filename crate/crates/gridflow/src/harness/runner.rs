//! Single-run training loop and the seeded run matrix.
//!
//! One run is fully determined by its [`RunConfig`]: parameter
//! initialization, rollout sampling, replay sampling and evaluation all
//! derive from the config seed, so identical configs produce byte-identical
//! metric CSVs. Matrix cells are independent and may execute in parallel;
//! aggregation happens after every cell finished.

use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gflownet::{train_step, FlowModel, SamplerConfig, TrajectorySampler};
use crate::metrics::{
    empirical_l1_to, write_csv, MetricsRecord, ModeTracker, SampleSource,
};
use crate::nn::AdamParams;
use crate::replay::{Regime, ReplayBuffer};

use super::aggregate::{aggregate, write_aggregate_csv, AggregateSeries};
use super::config::RunConfig;

/// Outcome of one training run. A run that hits a non-finite loss is marked
/// failed but keeps the records gathered so far (partial CSV retained).
#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: RunConfig,
    pub records: Vec<MetricsRecord>,
    pub csv_path: Option<PathBuf>,
    pub completed: bool,
    pub failure: Option<String>,
    /// (inserts offered, trajectories served) — both zero when no buffer
    /// exists.
    pub buffer_ops: (u64, u64),
    /// Exact states-visited count when the last mode was first reached.
    pub states_to_all_modes: Option<u64>,
    pub final_modes_found: usize,
}

impl RunReport {
    pub fn summary_line(&self) -> String {
        let status = if self.completed {
            "ok".to_string()
        } else {
            format!("FAILED ({})", self.failure.as_deref().unwrap_or("unknown"))
        };
        let l1 = self
            .records
            .last()
            .map(|r| format!("{:.5}", r.empirical_l1))
            .unwrap_or_else(|| "-".into());
        format!(
            "run regime={} seed={}: {} modes={}/{} final_l1={} csv={}",
            self.config.regime,
            self.config.seed,
            status,
            self.final_modes_found,
            self.config.env().map(|e| e.mode_count()).unwrap_or(0),
            l1,
            self.csv_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "-".into()),
        )
    }
}

/// Execute one run and write its metrics CSV under `config.out_dir`.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let env = config.env()?;
    let rp = config.reward_params()?;
    let target = env.true_distribution(&rp)?;

    // Independent deterministic streams, all derived from the config seed.
    let mut seeder = ChaCha8Rng::seed_from_u64(config.seed);
    let param_seed = seeder.next_u64();
    let sampler_seed = seeder.next_u64();
    let replay_seed = seeder.next_u64();

    let mut model = FlowModel::new(config.objective, param_seed, &env)?;
    let mut adam = model.new_adam(AdamParams::with_lr(config.lr))?;
    let mut sampler = TrajectorySampler::new(SamplerConfig {
        epsilon: config.epsilon,
        seed: sampler_seed,
    })?;
    let mut replay_rng = ChaCha8Rng::seed_from_u64(replay_seed);
    let mut buffer = match config.regime {
        Regime::None => None,
        regime => Some(ReplayBuffer::new(regime, config.buffer_capacity)?),
    };
    let mut tracker = ModeTracker::new(&env);

    let mut records: Vec<MetricsRecord> = Vec::new();
    let mut states_to_all_modes: Option<u64> = None;
    let mut failure: Option<String> = None;
    let mut loss_sum = 0.0;
    let mut loss_count = 0u64;
    let mut reward_sum = 0.0;
    let mut reward_count = 0u64;

    'training: for step in 1..=config.train_steps {
        let online = sampler.sample_batch(&model, &env, &rp, config.batch_online)?;
        for traj in &online {
            tracker.record(&env, traj.terminal(), SampleSource::Online);
            reward_sum += traj.terminal_reward;
            reward_count += 1;
            if states_to_all_modes.is_none()
                && tracker.total_modes() > 0
                && tracker.modes_found() == tracker.total_modes()
            {
                states_to_all_modes = Some(tracker.states_visited());
            }
            if let Some(buf) = buffer.as_mut() {
                buf.insert(traj.clone());
            }
        }

        let replayed = match buffer.as_mut() {
            Some(buf) if !buf.is_empty() && config.batch_replay > 0 => {
                buf.sample(config.batch_replay, &mut replay_rng)?
            }
            _ => Vec::new(),
        };

        match train_step(&mut model, &env, &rp, &online, &replayed, &mut adam) {
            Ok(loss) => {
                loss_sum += loss;
                loss_count += 1;
            }
            Err(Error::Diverged(msg)) => {
                failure = Some(msg);
                break 'training;
            }
            Err(other) => return Err(other),
        }

        if step % config.eval_every == 0 || step == config.train_steps {
            let l1 = match empirical_l1_to(&model, &env, &target) {
                Ok(l1) => l1,
                Err(Error::Diverged(msg)) => {
                    failure = Some(msg);
                    break 'training;
                }
                Err(other) => return Err(other),
            };
            records.push(MetricsRecord {
                wall_step: step,
                states_visited: tracker.states_visited(),
                modes_found: tracker.modes_found() as u64,
                modes_pct: tracker.modes_pct(),
                empirical_l1: l1,
                mean_loss: loss_sum / loss_count.max(1) as f64,
                mean_online_reward: reward_sum / reward_count.max(1) as f64,
            });
            loss_sum = 0.0;
            loss_count = 0;
            reward_sum = 0.0;
            reward_count = 0;
        }
    }

    let csv_path = if records.is_empty() {
        None
    } else {
        let path = config
            .out_dir
            .join(format!("run_seed{}.csv", config.seed));
        write_csv(&records, &path)?;
        Some(path)
    };

    Ok(RunReport {
        config: config.clone(),
        final_modes_found: tracker.modes_found(),
        completed: failure.is_none(),
        failure,
        buffer_ops: buffer.map(|b| b.op_counts()).unwrap_or((0, 0)),
        states_to_all_modes,
        records,
        csv_path,
    })
}

/// One sweep cell: a config variation evaluated over every seed.
#[derive(Debug, Clone)]
pub struct CellReport {
    pub label: String,
    pub runs: Vec<RunReport>,
    /// Hard errors (I/O, config) that prevented a run from producing a
    /// report at all.
    pub errors: Vec<String>,
    pub aggregate: Option<AggregateSeries>,
    pub aggregate_path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct MatrixReport {
    pub cells: Vec<CellReport>,
}

impl MatrixReport {
    pub fn cell(&self, label: &str) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.label == label)
    }
}

/// Cartesian product of the sweep lists applied to the base config.
/// Returns `(label, config)` pairs; an empty sweep yields the single cell
/// `base`.
pub fn expand_sweeps(
    base: &RunConfig,
    sweeps: &[(String, Vec<String>)],
) -> Result<Vec<(String, RunConfig)>> {
    for (key, values) in sweeps {
        if values.is_empty() {
            return Err(Error::Config(format!("sweep {:?} has no values", key)));
        }
        // Surface unknown sweep keys before any cell runs.
        base.clone().apply_set(key, &values[0])?;
    }
    let mut cells: Vec<(String, RunConfig)> = vec![(String::new(), base.clone())];
    for (key, values) in sweeps {
        let mut next = Vec::with_capacity(cells.len() * values.len());
        for (label, cfg) in &cells {
            for value in values {
                let mut cfg = cfg.clone();
                cfg.apply_set(key, value)?;
                let part = format!("{}={}", key, value);
                let label = if label.is_empty() {
                    part
                } else {
                    format!("{}__{}", label, part)
                };
                next.push((label, cfg));
            }
        }
        cells = next;
    }
    Ok(cells
        .into_iter()
        .map(|(label, cfg)| {
            if label.is_empty() {
                ("base".to_string(), cfg)
            } else {
                (label, cfg)
            }
        })
        .collect())
}

/// Run the sweep × seed matrix, writing one CSV per run plus one aggregate
/// CSV per cell (when at least two seeds completed). Cells execute in
/// parallel; any cell failure is recorded and the matrix continues.
pub fn run_matrix(
    base: &RunConfig,
    sweeps: &[(String, Vec<String>)],
    seeds: &[u64],
    out_root: &Path,
) -> Result<MatrixReport> {
    if seeds.is_empty() {
        return Err(Error::Config("matrix needs at least one seed".into()));
    }
    let cells = expand_sweeps(base, sweeps)?;
    // Validate every cell config up front so typos fail fast.
    for (label, cfg) in &cells {
        let mut probe = cfg.clone();
        probe.seed = seeds[0];
        probe
            .validate()
            .map_err(|e| Error::Config(format!("cell {}: {}", label, e)))?;
    }

    let jobs: Vec<(usize, u64, RunConfig)> = cells
        .iter()
        .enumerate()
        .flat_map(|(ci, (label, cfg))| {
            seeds.iter().map(move |&seed| {
                let mut cfg = cfg.clone();
                cfg.seed = seed;
                cfg.out_dir = out_root.join(label);
                (ci, seed, cfg)
            })
        })
        .collect();

    let results: Vec<(usize, u64, Result<RunReport>)> = jobs
        .into_par_iter()
        .map(|(ci, seed, cfg)| {
            let outcome = run(&cfg);
            (ci, seed, outcome)
        })
        .collect();

    let mut reports: Vec<CellReport> = cells
        .iter()
        .map(|(label, _)| CellReport {
            label: label.clone(),
            runs: Vec::new(),
            errors: Vec::new(),
            aggregate: None,
            aggregate_path: None,
        })
        .collect();
    for (ci, seed, outcome) in results {
        match outcome {
            Ok(report) => reports[ci].runs.push(report),
            Err(e) => reports[ci]
                .errors
                .push(format!("seed {}: {}", seed, e)),
        }
    }

    for cell in reports.iter_mut() {
        cell.runs.sort_by_key(|r| r.config.seed);
        let completed: Vec<&[MetricsRecord]> = cell
            .runs
            .iter()
            .filter(|r| r.completed)
            .map(|r| r.records.as_slice())
            .collect();
        if completed.len() >= 2 {
            match aggregate(&completed) {
                Ok(agg) => {
                    let path = out_root.join(&cell.label).join("aggregate.csv");
                    write_aggregate_csv(&agg, &path)?;
                    cell.aggregate = Some(agg);
                    cell.aggregate_path = Some(path);
                }
                Err(e) => cell.errors.push(format!("aggregate: {}", e)),
            }
        }
    }

    Ok(MatrixReport { cells: reports })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Tiny config that trains in well under a second.
    fn tiny_config(out_dir: &Path) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.ndim = 2;
        cfg.side = 4;
        cfg.train_steps = 12;
        cfg.eval_every = 5;
        cfg.batch_online = 4;
        cfg.batch_replay = 4;
        cfg.buffer_capacity = 32;
        cfg.out_dir = out_dir.to_path_buf();
        cfg
    }

    #[test]
    fn identical_config_and_seed_give_identical_csv_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg_a = tiny_config(&dir.path().join("a"));
        cfg_a.seed = 9;
        let mut cfg_b = tiny_config(&dir.path().join("b"));
        cfg_b.seed = 9;
        let ra = run(&cfg_a).unwrap();
        let rb = run(&cfg_b).unwrap();
        let bytes_a = std::fs::read(ra.csv_path.unwrap()).unwrap();
        let bytes_b = std::fs::read(rb.csv_path.unwrap()).unwrap();
        assert_eq!(bytes_a, bytes_b);
    }

    #[test]
    fn no_buffer_regime_never_touches_a_buffer() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.regime = Regime::None;
        cfg.batch_replay = 0;
        let report = run(&cfg).unwrap();
        assert_eq!(report.buffer_ops, (0, 0));
        assert!(report.completed);
    }

    #[test]
    fn replay_run_counts_only_online_states() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let report = run(&cfg).unwrap();
        // states_visited advances by exactly batch_online per step.
        for record in &report.records {
            assert_eq!(
                record.states_visited,
                record.wall_step * cfg.batch_online as u64
            );
        }
        // Buffer saw every online trajectory.
        assert_eq!(report.buffer_ops.0, cfg.train_steps * cfg.batch_online as u64);
        assert!(report.buffer_ops.1 > 0);
    }

    #[test]
    fn records_align_with_eval_cadence_and_final_step() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.train_steps = 13;
        cfg.eval_every = 5;
        let report = run(&cfg).unwrap();
        let steps: Vec<u64> = report.records.iter().map(|r| r.wall_step).collect();
        assert_eq!(steps, vec![5, 10, 13]);
        // Mode discovery is monotone in states visited.
        for w in report.records.windows(2) {
            assert!(w[1].modes_found >= w[0].modes_found);
            assert!(w[1].states_visited >= w[0].states_visited);
        }
    }

    #[test]
    fn matrix_produces_run_and_aggregate_csvs() {
        let dir = tempfile::tempdir().unwrap();
        let base = tiny_config(dir.path());
        let sweeps = vec![(
            "batch_replay".to_string(),
            vec!["2".to_string(), "4".to_string()],
        )];
        let report = run_matrix(&base, &sweeps, &[0, 1], dir.path()).unwrap();
        assert_eq!(report.cells.len(), 2);
        for cell in &report.cells {
            assert_eq!(cell.runs.len(), 2);
            assert!(cell.errors.is_empty(), "{:?}", cell.errors);
            assert!(cell.aggregate.is_some());
            assert!(cell.aggregate_path.as_ref().unwrap().exists());
            for run in &cell.runs {
                assert!(run.csv_path.as_ref().unwrap().exists());
            }
        }
        assert!(report.cell("batch_replay=2").is_some());
        assert!(report.cell("batch_replay=4").is_some());
    }

    #[test]
    fn replay_size_sweep_yields_twenty_runs_and_four_aggregates() {
        let dir = tempfile::tempdir().unwrap();
        let mut base = tiny_config(dir.path());
        base.train_steps = 6;
        base.eval_every = 3;
        let sweeps = vec![(
            "batch_replay".to_string(),
            vec!["4", "8", "12", "16"].into_iter().map(String::from).collect(),
        )];
        let report = run_matrix(&base, &sweeps, &[0, 1, 2, 3, 4], dir.path()).unwrap();
        let run_csvs: usize = report.cells.iter().map(|c| c.runs.len()).sum();
        assert_eq!(run_csvs, 20);
        let aggregates = report
            .cells
            .iter()
            .filter(|c| c.aggregate_path.as_ref().is_some_and(|p| p.exists()))
            .count();
        assert_eq!(aggregates, 4);
    }

    #[test]
    fn empty_sweep_single_seed_is_one_run_without_aggregate() {
        let dir = tempfile::tempdir().unwrap();
        let base = tiny_config(dir.path());
        let report = run_matrix(&base, &[], &[3], dir.path()).unwrap();
        assert_eq!(report.cells.len(), 1);
        assert_eq!(report.cells[0].label, "base");
        assert_eq!(report.cells[0].runs.len(), 1);
        assert!(report.cells[0].aggregate.is_none());
    }

    #[test]
    fn unknown_sweep_key_fails_before_running() {
        let dir = tempfile::tempdir().unwrap();
        let base = tiny_config(dir.path());
        let sweeps = vec![("bogus".to_string(), vec!["1".to_string()])];
        assert!(matches!(
            run_matrix(&base, &sweeps, &[0], dir.path()),
            Err(Error::Config(_))
        ));
    }
}

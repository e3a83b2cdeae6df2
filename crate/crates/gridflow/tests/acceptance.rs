//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers (run with `--nocapture` to see them).
//!
//! Criteria 5-8 share one set of seeded training runs (three replay regimes,
//! the replay-sample-size sweep, and the batch-size control, five seeds
//! each). The runs execute once, in parallel, on first access.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gridflow::harness::{run, RunConfig, RunReport};
use gridflow::metrics::terminal_distribution;
use gridflow::nn::{init_params, mlp_forward, MlpParams};
use gridflow::replay::{Regime, ReplayBuffer};
use gridflow::tensor::Tensor;
use gridflow::{
    fm_loss, tb_loss_batch, FlowModel, FmBatch, GridState, Hypergrid, Objective, RewardParams,
    SamplerConfig, Trajectory, TrajectorySampler,
};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

fn base_config(out_dir: PathBuf) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.out_dir = out_dir;
    cfg
}

struct HeavyRuns {
    by_label: BTreeMap<String, Vec<RunReport>>,
}

impl HeavyRuns {
    fn runs(&self, label: &str) -> &[RunReport] {
        &self.by_label[label]
    }

    /// Mean modes_found per evaluation point across seeds.
    fn mean_modes_curve(&self, label: &str) -> Vec<f64> {
        let runs = self.runs(label);
        let points = runs[0].records.len();
        (0..points)
            .map(|i| {
                runs.iter().map(|r| r.records[i].modes_found as f64).sum::<f64>()
                    / runs.len() as f64
            })
            .collect()
    }

    /// Mean states-visited-to-reach-all-modes across seeds; runs that never
    /// finished count as one full budget plus one batch.
    fn mean_states_to_all_modes(&self, label: &str) -> f64 {
        let runs = self.runs(label);
        runs.iter()
            .map(|r| {
                let sentinel =
                    r.config.train_steps * r.config.batch_online as u64 + r.config.batch_online as u64;
                r.states_to_all_modes.unwrap_or(sentinel) as f64
            })
            .sum::<f64>()
            / runs.len() as f64
    }

    fn mean_final_l1(&self, label: &str) -> f64 {
        let runs = self.runs(label);
        runs.iter()
            .map(|r| r.records.last().unwrap().empirical_l1)
            .sum::<f64>()
            / runs.len() as f64
    }
}

static HEAVY: OnceLock<HeavyRuns> = OnceLock::new();

/// Execute one run, reusing an on-disk result when an identical config
/// already produced one. Runs are byte-deterministic in `(config, seed)`
/// (criterion 10), so a cached result equals a fresh computation; the cache
/// only lets interrupted invocations of this suite resume instead of
/// restarting all thirty-five trainings.
fn run_cached(cfg: &RunConfig) -> RunReport {
    let sidecar = cfg
        .out_dir
        .join(format!("report_seed{}.txt", cfg.seed));
    let csv = cfg.out_dir.join(format!("run_seed{}.csv", cfg.seed));
    if let Ok(text) = std::fs::read_to_string(&sidecar) {
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                fields.insert(k, v);
            }
        }
        let config_matches = fields.get("config") == Some(&format!("{:?}", cfg).as_str());
        if config_matches && fields.get("completed") == Some(&"true") {
            if let Ok(records) = gridflow::metrics::read_csv(&csv) {
                return RunReport {
                    config: cfg.clone(),
                    records,
                    csv_path: Some(csv),
                    completed: true,
                    failure: None,
                    buffer_ops: (
                        fields["buffer_inserts"].parse().unwrap(),
                        fields["buffer_samples"].parse().unwrap(),
                    ),
                    states_to_all_modes: match fields["states_to_all_modes"] {
                        "none" => None,
                        n => Some(n.parse().unwrap()),
                    },
                    final_modes_found: fields["final_modes_found"].parse().unwrap(),
                };
            }
        }
    }
    let report = run(cfg).expect("acceptance run failed hard");
    let sidecar_text = format!(
        "config={:?}\ncompleted={}\nbuffer_inserts={}\nbuffer_samples={}\nstates_to_all_modes={}\nfinal_modes_found={}\n",
        cfg,
        report.completed,
        report.buffer_ops.0,
        report.buffer_ops.1,
        report
            .states_to_all_modes
            .map(|s| s.to_string())
            .unwrap_or_else(|| "none".into()),
        report.final_modes_found,
    );
    std::fs::write(&sidecar, sidecar_text).expect("write run sidecar");
    report
}

fn heavy() -> &'static HeavyRuns {
    HEAVY.get_or_init(|| {
        let root = std::env::temp_dir().join("gridflow-acceptance-cache");
        let mut jobs: Vec<(String, RunConfig)> = Vec::new();
        let cell = |label: &str, tweak: &dyn Fn(&mut RunConfig)| {
            let mut cfgs = Vec::new();
            for seed in SEEDS {
                let mut cfg = base_config(root.join(label));
                tweak(&mut cfg);
                cfg.seed = seed;
                cfgs.push((label.to_string(), cfg));
            }
            cfgs
        };
        jobs.extend(cell("rprs", &|_| {}));
        jobs.extend(cell("random", &|c| c.regime = Regime::Random));
        jobs.extend(cell("none", &|c| {
            c.regime = Regime::None;
            c.batch_replay = 0;
        }));
        jobs.extend(cell("rprs_rss4", &|c| c.batch_replay = 4));
        jobs.extend(cell("rprs_rss8", &|c| c.batch_replay = 8));
        jobs.extend(cell("rprs_rss12", &|c| c.batch_replay = 12));
        jobs.extend(cell("none_b32", &|c| {
            c.regime = Regime::None;
            c.batch_replay = 0;
            c.batch_online = 32;
        }));

        use rayon::prelude::*;
        let mut results: Vec<(String, RunReport)> = jobs
            .into_par_iter()
            .map(|(label, cfg)| (label, run_cached(&cfg)))
            .collect();
        results.sort_by(|a, b| (&a.0, a.1.config.seed).cmp(&(&b.0, b.1.config.seed)));

        let mut by_label: BTreeMap<String, Vec<RunReport>> = BTreeMap::new();
        for (label, report) in results {
            assert!(
                report.completed,
                "run {} seed {} failed: {:?}",
                label, report.config.seed, report.failure
            );
            by_label.entry(label).or_default().push(report);
        }
        HeavyRuns { by_label }
    })
}

#[test]
fn criterion_01_gradient_correctness() {
    // Analytic vs central-difference gradients, |an - fd| / max(1, |fd|).
    let mut worst = 0.0f64;

    // Full-width random MLP with a fixed random linear loss; sampled
    // parameter coordinates.
    let dims = [8usize, 256, 256, 5];
    let params = init_params(2024, &dims).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x_data: Vec<f64> = (0..4 * dims[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x = Tensor::from_vec(&[4, dims[0]], x_data).unwrap();
    let weights: Vec<f64> = (0..4 * dims[3]).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let loss_of = |p: &MlpParams| -> f64 {
        let (y, _) = mlp_forward(p, &x).unwrap();
        y.data().iter().zip(&weights).map(|(a, b)| a * b).sum()
    };
    let (y, tape) = mlp_forward(&params, &x).unwrap();
    let seed_grad = Tensor::from_vec(y.shape(), weights.clone()).unwrap();
    let analytic = tape.backward(&params, &seed_grad).unwrap();
    for _ in 0..60 {
        let layer = rng.gen_range(0..3);
        let is_weight = rng.gen_bool(0.8);
        let len = if is_weight {
            params.layers()[layer].weights.len()
        } else {
            params.layers()[layer].bias.len()
        };
        let i = rng.gen_range(0..len);
        let an = if is_weight {
            analytic.layers[layer].weights.data()[i]
        } else {
            analytic.layers[layer].bias.data()[i]
        };
        let rel = fd_rel_error(an, |delta| {
            let mut p = params.clone();
            let l = p.layer_mut(layer);
            let t = if is_weight { l.weights.data_mut() } else { l.bias.data_mut() };
            t[i] += delta;
            loss_of(&p)
        });
        worst = worst.max(rel);
    }

    // Flow-matching and trajectory-balance losses on a small grid, every
    // parameter checked.
    let env = Hypergrid::new(2, 4).unwrap();
    let rp = RewardParams::new(1e-3, 0.5, 2.0).unwrap();
    let fm_model = FlowModel::with_hidden(Objective::FlowMatching, 31, &env, 8).unwrap();
    let mut fm_sampler =
        TrajectorySampler::new(SamplerConfig { epsilon: 0.2, seed: 4 }).unwrap();
    let fm_trajs = fm_sampler.sample_batch(&fm_model, &env, &rp, 8).unwrap();
    let fm_batch = FmBatch::from_trajectories(fm_trajs.iter());
    let (_, fm_grads) = fm_loss(&fm_model, &env, &rp, &fm_batch).unwrap();
    worst = worst.max(fd_check_model(&fm_model, &fm_grads, |m| {
        fm_loss(m, &env, &rp, &fm_batch).unwrap().0
    }));

    let mut tb_model = FlowModel::with_hidden(Objective::TrajectoryBalance, 32, &env, 8).unwrap();
    tb_model.log_z = 0.25;
    let mut sampler = TrajectorySampler::new(SamplerConfig { epsilon: 0.2, seed: 5 }).unwrap();
    let trajs = sampler.sample_batch(&tb_model, &env, &rp, 8).unwrap();
    let (_, tb_grads, _) = tb_loss_batch(&tb_model, &env, &trajs).unwrap();
    worst = worst.max(fd_check_model(&tb_model, &tb_grads, |m| {
        tb_loss_batch(m, &env, &trajs).unwrap().0
    }));

    println!("criterion 01 gradient-correctness: PASS (max relative error {:.3e})", worst);
    assert!(worst < 1e-4, "max relative error {} >= 1e-4", worst);
}

/// Relative error of an analytic gradient against central differences,
/// shrinking h when a perturbation window straddles a leaky-rectifier kink
/// (the artifact collapses with h; a real gradient bug persists).
fn fd_rel_error(an: f64, mut eval: impl FnMut(f64) -> f64) -> f64 {
    let mut rel = f64::INFINITY;
    for h in [1e-5, 1e-6, 1e-7] {
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        rel = rel.min((an - fd).abs() / fd.abs().max(1.0));
        if rel < 1e-6 {
            break;
        }
    }
    rel
}

fn fd_check_model(
    model: &FlowModel,
    analytic: &gridflow::MlpGrads,
    loss_of: impl Fn(&FlowModel) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    for layer in 0..model.mlp.layers().len() {
        for is_weight in [true, false] {
            let len = if is_weight {
                model.mlp.layers()[layer].weights.len()
            } else {
                model.mlp.layers()[layer].bias.len()
            };
            for i in 0..len {
                let an = if is_weight {
                    analytic.layers[layer].weights.data()[i]
                } else {
                    analytic.layers[layer].bias.data()[i]
                };
                let rel = fd_rel_error(an, |delta| {
                    let mut m = model.clone();
                    let l = m.mlp.layer_mut(layer);
                    let t = if is_weight { l.weights.data_mut() } else { l.bias.data_mut() };
                    t[i] += delta;
                    loss_of(&m)
                });
                worst = worst.max(rel);
            }
        }
    }
    worst
}

#[test]
fn criterion_02_exact_solution_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let mut results = Vec::new();
    for (name, objective, ndim, side) in [
        ("fm n=1 H=2", Objective::FlowMatching, 1usize, 2u16),
        ("fm 2D H=4", Objective::FlowMatching, 2, 4),
        ("tb n=1 H=2", Objective::TrajectoryBalance, 1, 2),
    ] {
        let mut cfg = base_config(dir.path().join(name.replace(' ', "_")));
        cfg.ndim = ndim;
        cfg.side = side;
        cfg.objective = objective;
        cfg.regime = Regime::None;
        cfg.batch_replay = 0;
        cfg.train_steps = 5000;
        cfg.eval_every = 500;
        let report = run(&cfg).unwrap();
        assert!(report.completed, "{} failed: {:?}", name, report.failure);
        let final_l1 = report.records.last().unwrap().empirical_l1;
        results.push(format!("{} l1={:.2e}", name, final_l1));
        assert!(
            final_l1 < 0.02,
            "{}: final empirical L1 {} >= 0.02",
            name,
            final_l1
        );
    }
    println!("criterion 02 exact-solution-oracle: PASS ({})", results.join(", "));
}

#[test]
fn criterion_03_dp_vs_monte_carlo() {
    let env = Hypergrid::new(2, 8).unwrap();
    let rp = RewardParams::new(1e-3, 0.5, 2.0).unwrap();
    let model = FlowModel::new(Objective::FlowMatching, 42, &env).unwrap();
    let dp = terminal_distribution(&model, &env).unwrap();
    let mass: f64 = dp.iter().sum();
    assert!((mass - 1.0).abs() <= 1e-9, "DP mass {}", mass);

    let n = 200_000usize;
    let mut sampler = TrajectorySampler::new(SamplerConfig { epsilon: 0.0, seed: 11 }).unwrap();
    let mut counts = vec![0u32; dp.len()];
    for traj in sampler.sample_batch(&model, &env, &rp, n).unwrap() {
        counts[env.state_index(traj.terminal())] += 1;
    }
    let total_l1: f64 = dp
        .iter()
        .zip(&counts)
        .map(|(p, &c)| (p - c as f64 / n as f64).abs())
        .sum();
    println!(
        "criterion 03 dp-vs-monte-carlo: PASS (total L1 {:.4}, mass error {:.1e})",
        total_l1,
        (mass - 1.0).abs()
    );
    assert!(total_l1 <= 0.02, "DP vs MC total L1 {} > 0.02", total_l1);
}

#[test]
fn criterion_04_mode_census() {
    for (ndim, expected) in [(4usize, 16usize), (6, 64)] {
        let env = Hypergrid::new(ndim, 8).unwrap();
        assert_eq!(env.mode_count(), expected);
        let counted = (0..env.num_states().unwrap())
            .filter(|&i| env.is_mode(&env.index_state(i)))
            .count();
        assert_eq!(counted, expected, "enumerated mode count for ndim={}", ndim);
    }
    println!("criterion 04 mode-census: PASS (16 modes at n=4, 64 at n=6)");
}

#[test]
fn criterion_05_figure2_ordering() {
    let heavy = heavy();
    let finished = heavy
        .runs("rprs")
        .iter()
        .filter(|r| r.states_to_all_modes.is_some())
        .count();
    assert!(
        finished >= 4,
        "R-PRS found all 16 modes in only {}/5 seeds",
        finished
    );

    let rprs = heavy.mean_modes_curve("rprs");
    let random = heavy.mean_modes_curve("random");
    let none = heavy.mean_modes_curve("none");
    let records = &heavy.runs("rprs")[0].records;
    let budget = heavy.runs("rprs")[0].config.train_steps;
    let mut checked = 0;
    for (i, record) in records.iter().enumerate() {
        if record.wall_step as f64 <= 0.25 * budget as f64 {
            continue;
        }
        checked += 1;
        assert!(
            rprs[i] >= random[i] - 1e-9,
            "step {}: mean modes rprs {} < random {}",
            record.wall_step,
            rprs[i],
            random[i]
        );
        assert!(
            random[i] >= none[i] - 1.0 - 1e-9,
            "step {}: mean modes random {} < none {} - 1",
            record.wall_step,
            random[i],
            none[i]
        );
    }
    println!(
        "criterion 05 figure2-ordering: PASS (rprs all-modes in {}/5 seeds, ordering held at {} eval points)",
        finished, checked
    );
}

#[test]
fn criterion_06_figure3_sweep() {
    let heavy = heavy();
    let means: Vec<(usize, f64)> = [
        (4, heavy.mean_states_to_all_modes("rprs_rss4")),
        (8, heavy.mean_states_to_all_modes("rprs_rss8")),
        (12, heavy.mean_states_to_all_modes("rprs_rss12")),
        (16, heavy.mean_states_to_all_modes("rprs")),
    ]
    .to_vec();
    let detail: Vec<String> = means
        .iter()
        .map(|(k, m)| format!("rss{}={:.0}", k, m))
        .collect();
    let first = means.first().unwrap().1;
    let last = means.last().unwrap().1;
    println!(
        "criterion 06 figure3-sweep: {} (mean states to all modes: {})",
        if last <= first { "PASS" } else { "FAIL" },
        detail.join(", ")
    );
    assert!(
        last <= first,
        "states-to-all-modes should be non-increasing from rss=4 ({:.0}) to rss=16 ({:.0})",
        first,
        last
    );
}

#[test]
fn criterion_07_figure4_batch_control() {
    let heavy = heavy();
    let rprs = heavy.mean_states_to_all_modes("rprs");
    let none_b32 = heavy.mean_states_to_all_modes("none_b32");
    println!(
        "criterion 07 figure4-batch-control: {} (rprs 16+16 {:.0} vs no-buffer batch-32 {:.0} states)",
        if none_b32 >= rprs { "PASS" } else { "FAIL" },
        rprs,
        none_b32
    );
    assert!(
        none_b32 >= rprs,
        "no-buffer batch-32 reached all modes faster ({:.0}) than R-PRS 16+16 ({:.0})",
        none_b32,
        rprs
    );
}

#[test]
fn criterion_08_empirical_l1_ordering() {
    let heavy = heavy();
    let rprs = heavy.mean_final_l1("rprs");
    let random = heavy.mean_final_l1("random");
    let none = heavy.mean_final_l1("none");
    let ok = rprs <= random + 1e-12 && random <= none * 1.05 + 1e-12;
    println!(
        "criterion 08 empirical-l1-ordering: {} (rprs {:.3e}, random {:.3e}, none {:.3e})",
        if ok { "PASS" } else { "FAIL" },
        rprs,
        random,
        none
    );
    assert!(
        rprs <= random + 1e-12,
        "mean final L1: rprs {} > random {}",
        rprs,
        random
    );
    assert!(
        random <= none * 1.05 + 1e-12,
        "mean final L1: random {} > none * 1.05 ({})",
        random,
        none * 1.05
    );
}

#[test]
fn criterion_09_replay_invariants() {
    fn traj(reward: f64) -> Trajectory {
        Trajectory {
            states: vec![GridState::new(vec![0])],
            actions: vec![gridflow::Action::Stop],
            terminal_reward: reward,
        }
    }

    // Capacity bound, min-reward monotonicity, and top-k content against a
    // brute-force oracle over 1e4 random insertions.
    let capacity = 64;
    let mut buf = ReplayBuffer::new(Regime::Rprs, capacity).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut seen: Vec<f64> = Vec::new();
    let mut prev_min: Option<f64> = None;
    for _ in 0..10_000 {
        let r = rng.gen_range(0.001..50.0);
        buf.insert(traj(r));
        seen.push(r);
        assert!(buf.len() <= capacity);
        if buf.len() == capacity {
            let min_now = buf.stats().min_reward.unwrap();
            if let Some(pm) = prev_min {
                assert!(min_now >= pm, "min reward decreased: {} -> {}", pm, min_now);
            }
            prev_min = Some(min_now);
        }
    }
    let mut top = seen.clone();
    top.sort_by(|a, b| b.partial_cmp(a).unwrap());
    top.truncate(capacity);
    top.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut got = buf.rewards();
    got.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(got.len(), top.len());
    for (g, t) in got.iter().zip(&top) {
        assert_eq!(g.to_bits(), t.to_bits(), "buffer content differs from top-k oracle");
    }

    // Proportional first-draw frequencies within +-0.01 of (0.5, 0.25, 0.25).
    let mut small = ReplayBuffer::new(Regime::Rprs, 3).unwrap();
    small.insert(traj(2.0));
    small.insert(traj(1.0));
    small.insert(traj(1.0));
    let n = 100_000;
    let mut hits = 0;
    for _ in 0..n {
        let first = &small.sample(1, &mut rng).unwrap()[0];
        if first.terminal_reward == 2.0 {
            hits += 1;
        }
    }
    let freq = hits as f64 / n as f64;
    assert!((freq - 0.5).abs() < 0.01, "first-draw freq {} vs 0.5", freq);

    // Without replacement within one call.
    let mut distinct = ReplayBuffer::new(Regime::Rprs, 16).unwrap();
    for i in 0..16 {
        distinct.insert(traj(1.0 + i as f64));
    }
    for _ in 0..200 {
        let got = distinct.sample(10, &mut rng).unwrap();
        let mut rewards: Vec<u64> = got.iter().map(|t| t.terminal_reward.to_bits()).collect();
        rewards.sort_unstable();
        rewards.dedup();
        assert_eq!(rewards.len(), 10, "duplicate entries within one sample call");
    }

    println!(
        "criterion 09 replay-invariants: PASS (top-64 of 1e4 inserts exact, first-draw freq {:.3})",
        freq
    );
}

#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let make = |sub: &str| {
        let mut cfg = base_config(dir.path().join(sub));
        cfg.ndim = 2;
        cfg.side = 8;
        cfg.train_steps = 150;
        cfg.eval_every = 25;
        cfg.seed = 3;
        cfg
    };
    let a = run(&make("a")).unwrap();
    let b = run(&make("b")).unwrap();
    let bytes_a = std::fs::read(a.csv_path.unwrap()).unwrap();
    let bytes_b = std::fs::read(b.csv_path.unwrap()).unwrap();
    assert_eq!(bytes_a, bytes_b, "CSV bytes differ between identical invocations");
    println!(
        "criterion 10 determinism: PASS ({} identical bytes)",
        bytes_a.len()
    );
}

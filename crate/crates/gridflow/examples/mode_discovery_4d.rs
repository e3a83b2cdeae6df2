//! The flagship setting: 4-dimensional hypergrid, H = 8, R0 = 1e-3, with
//! the R-PRS reward-prioritized replay buffer. Tracks how quickly the 16
//! modes are discovered.
//!
//! ```bash
//! cargo run --release --example mode_discovery_4d            # 600 steps
//! cargo run --release --example mode_discovery_4d -- 2500    # full budget
//! ```

use gridflow::harness::{run, RunConfig};

fn main() -> gridflow::Result<()> {
    let steps: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("steps must be an integer"))
        .unwrap_or(600);

    let mut cfg = RunConfig::default(); // 4D, H=8, R-PRS, 16 online + 16 replay
    cfg.train_steps = steps;
    cfg.out_dir = std::env::temp_dir().join("gridflow-mode-discovery-4d");

    println!(
        "training {} steps on {}^{} grid, regime {}, {} + {} trajectories per step",
        cfg.train_steps, cfg.side, cfg.ndim, cfg.regime, cfg.batch_online, cfg.batch_replay
    );
    let report = run(&cfg)?;
    for record in &report.records {
        println!(
            "  step {:5}  states {:6}  modes {:2}/16  L1 {:9.3e}  reward {:6.3}",
            record.wall_step,
            record.states_visited,
            record.modes_found,
            record.empirical_l1,
            record.mean_online_reward
        );
    }
    match report.states_to_all_modes {
        Some(states) => println!("\nall 16 modes discovered after {} online states", states),
        None => println!("\nnot all modes discovered within the budget"),
    }
    println!("metrics csv: {}", report.csv_path.unwrap().display());
    Ok(())
}

//! Compare the three replay regimes (no buffer, uniform random, R-PRS) on a
//! 2D grid with a small training budget.
//!
//! ```bash
//! cargo run --release --example replay_regimes
//! ```

use gridflow::harness::{run, RunConfig};
use gridflow::replay::Regime;

fn main() -> gridflow::Result<()> {
    let out = std::env::temp_dir().join("gridflow-replay-regimes");
    let mut reports = Vec::new();
    for regime in [Regime::None, Regime::Random, Regime::Rprs] {
        let mut cfg = RunConfig::default();
        cfg.ndim = 2;
        cfg.side = 8;
        cfg.regime = regime;
        cfg.batch_replay = if regime == Regime::None { 0 } else { 16 };
        cfg.train_steps = 400;
        cfg.eval_every = 50;
        cfg.out_dir = out.join(regime.to_string());
        let report = run(&cfg)?;
        println!("{}", report.summary_line());
        reports.push((regime, report));
    }

    println!("\nmodes found over states visited:");
    print!("{:>14}", "states");
    for (regime, _) in &reports {
        print!("{:>9}", regime.to_string());
    }
    println!();
    let points = reports[0].1.records.len();
    for i in 0..points {
        print!("{:>14}", reports[0].1.records[i].states_visited);
        for (_, report) in &reports {
            print!(
                "{:>7}/{}",
                report.records[i].modes_found,
                report.config.env()?.mode_count()
            );
        }
        println!();
    }
    Ok(())
}

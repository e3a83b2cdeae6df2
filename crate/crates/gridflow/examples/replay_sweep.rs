//! Sweep the number of trajectories drawn from the R-PRS buffer per step
//! (4 -> 16) over several seeds, aggregating mean and standard error.
//!
//! ```bash
//! cargo run --release --example replay_sweep
//! ```

use gridflow::harness::{run_matrix, RunConfig};

fn main() -> gridflow::Result<()> {
    let out = std::env::temp_dir().join("gridflow-replay-sweep");
    let mut base = RunConfig::default();
    base.ndim = 2; // small grid keeps the example quick
    base.side = 8;
    base.train_steps = 300;
    base.eval_every = 50;

    let sweeps = vec![(
        "batch_replay".to_string(),
        vec!["4".into(), "8".into(), "12".into(), "16".into()],
    )];
    let report = run_matrix(&base, &sweeps, &[0, 1, 2], &out)?;

    for cell in &report.cells {
        let agg = cell.aggregate.as_ref().expect("three seeds aggregate");
        let last = agg.x.len() - 1;
        println!(
            "{:>16}: final modes {:4.1} +- {:4.2}, final L1 {:9.3e} +- {:8.2e}  ({})",
            cell.label,
            agg.modes_found.mean[last],
            agg.modes_found.stderr[last],
            agg.empirical_l1.mean[last],
            agg.empirical_l1.stderr[last],
            cell.aggregate_path.as_ref().unwrap().display()
        );
    }
    Ok(())
}

//! Run a small regime comparison and render the aggregated mode-discovery
//! curves as a static SVG with standard-error bands.
//!
//! ```bash
//! cargo run --release --example plot_curves
//! ```

use gridflow::harness::{emit_plot, run_matrix, PlotAxes, PlotSeries, RunConfig};

fn main() -> gridflow::Result<()> {
    let out = std::env::temp_dir().join("gridflow-plot-curves");
    let mut base = RunConfig::default();
    base.ndim = 2;
    base.side = 8;
    base.train_steps = 300;
    base.eval_every = 25;
    base.batch_replay = 8;

    // regime=none forbids a replay batch, so sweep it together with the
    // batch size instead of sweeping the regime alone.
    let mut series = Vec::new();
    for (label, regime, batch_replay) in [
        ("no buffer", "none", 0usize),
        ("random", "random", 8),
        ("R-PRS", "rprs", 8),
    ] {
        let mut cfg = base.clone();
        cfg.apply_set("regime", regime)?;
        cfg.apply_set("batch_replay", &batch_replay.to_string())?;
        let report = run_matrix(&cfg, &[], &[0, 1, 2], &out.join(regime))?;
        let agg = report.cells[0].aggregate.as_ref().unwrap();
        series.push(PlotSeries {
            label: label.to_string(),
            x: agg.x.iter().map(|&x| x as f64).collect(),
            y: agg.modes_pct.mean.clone(),
            stderr: agg.modes_pct.stderr.clone(),
        });
    }

    let svg_path = out.join("mode_discovery.svg");
    emit_plot(
        &series,
        &PlotAxes {
            title: "2D hypergrid, 3 seeds".to_string(),
            x_label: "states visited".to_string(),
            y_label: "fraction of modes discovered".to_string(),
        },
        &svg_path,
    )?;
    println!("wrote {}", svg_path.display());
    Ok(())
}

//! Thin CLI over the gridflow library: single runs, sweep matrices, and
//! SVG charts from aggregate CSVs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gridflow::harness::{
    emit_plot, parse_set_arg, read_aggregate_csv, run, run_matrix, PlotAxes, PlotSeries,
    RunConfig,
};

#[derive(Parser)]
#[command(
    name = "gridflow",
    about = "GFlowNet hypergrid training with replay-buffer regimes",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a single training run and write its metrics CSV.
    Run {
        /// Flat key = value config file (# starts a comment).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one config key (repeatable), e.g. --set regime=rprs.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Output directory (overrides the out_dir config key).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run a sweep x seeds matrix with per-cell aggregation.
    Matrix {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Sweep one config key over a value list (repeatable),
        /// e.g. --sweep batch_replay=4,8,12,16.
        #[arg(long = "sweep", value_name = "KEY=V1,V2,...")]
        sweep: Vec<String>,
        /// Comma-separated seed list (default 0,1,2,3,4).
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Render aggregate CSVs as a static SVG line chart.
    Plot {
        /// Aggregate CSV files produced by the matrix runner.
        #[arg(required = true)]
        csvs: Vec<PathBuf>,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
        /// Aggregate column to plot.
        #[arg(long, default_value = "modes_pct")]
        y_col: String,
        /// Legend label per CSV (repeatable; defaults to the cell name).
        #[arg(long = "label")]
        labels: Vec<String>,
        #[arg(long, default_value = "states visited")]
        x_label: String,
        #[arg(long)]
        y_label: Option<String>,
        #[arg(long, default_value = "")]
        title: String,
    },
}

fn parse_sets(set: &[String]) -> gridflow::Result<Vec<(String, String)>> {
    set.iter().map(|s| parse_set_arg(s)).collect()
}

fn parse_seeds(arg: Option<&str>) -> gridflow::Result<Vec<u64>> {
    match arg {
        None => Ok(vec![0, 1, 2, 3, 4]),
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim().parse().map_err(|e| {
                    gridflow::Error::Config(format!("bad seed {:?}: {}", s, e))
                })
            })
            .collect(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(1)
        }
    }
}

fn execute(cli: Cli) -> gridflow::Result<ExitCode> {
    match cli.command {
        Command::Run { config, set, out_dir } => {
            let mut cfg = RunConfig::load(config.as_deref(), &parse_sets(&set)?)?;
            if let Some(dir) = out_dir {
                cfg.out_dir = dir;
            }
            let report = run(&cfg)?;
            println!("{}", report.summary_line());
            Ok(if report.completed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Matrix {
            config,
            set,
            sweep,
            seeds,
            out_dir,
        } => {
            let mut cfg = RunConfig::load(config.as_deref(), &parse_sets(&set)?)?;
            if let Some(dir) = out_dir {
                cfg.out_dir = dir;
            }
            let sweeps: Vec<(String, Vec<String>)> = sweep
                .iter()
                .map(|s| {
                    let (key, values) = parse_set_arg(s)?;
                    Ok((
                        key,
                        values.split(',').map(|v| v.trim().to_string()).collect(),
                    ))
                })
                .collect::<gridflow::Result<_>>()?;
            let seeds = parse_seeds(seeds.as_deref())?;
            let out_root = cfg.out_dir.clone();
            let report = run_matrix(&cfg, &sweeps, &seeds, &out_root)?;
            let mut failures = 0;
            for cell in &report.cells {
                println!("cell {}:", cell.label);
                for run in &cell.runs {
                    println!("  {}", run.summary_line());
                    if !run.completed {
                        failures += 1;
                    }
                }
                for err in &cell.errors {
                    println!("  ERROR {}", err);
                    failures += 1;
                }
                if let Some(path) = &cell.aggregate_path {
                    println!("  aggregate: {}", path.display());
                }
            }
            println!(
                "matrix done: {} cells, {} seeds, {} failures",
                report.cells.len(),
                seeds.len(),
                failures
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Plot {
            csvs,
            out,
            y_col,
            labels,
            x_label,
            y_label,
            title,
        } => {
            let mut series = Vec::new();
            for (i, path) in csvs.iter().enumerate() {
                let agg = read_aggregate_csv(path)?;
                let column = agg.column(&y_col).ok_or_else(|| {
                    gridflow::Error::Usage(format!(
                        "unknown column {:?}; expected one of {:?}",
                        y_col,
                        gridflow::harness::aggregate::AGGREGATE_COLUMNS
                    ))
                })?;
                let label = labels.get(i).cloned().unwrap_or_else(|| {
                    path.parent()
                        .and_then(|p| p.file_name())
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_else(|| format!("series {}", i))
                });
                series.push(PlotSeries {
                    label,
                    x: agg.x.iter().map(|&x| x as f64).collect(),
                    y: column.mean.clone(),
                    stderr: column.stderr.clone(),
                });
            }
            let axes = PlotAxes {
                title,
                x_label,
                y_label: y_label.unwrap_or_else(|| y_col.clone()),
            };
            emit_plot(&series, &axes, &out)?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

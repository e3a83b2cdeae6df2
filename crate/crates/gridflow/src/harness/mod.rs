//! Experiment harness: configuration, the seeded training loop, the sweep
//! matrix with cross-seed aggregation, and SVG chart emission.

pub mod aggregate;
pub mod config;
pub mod plot;
pub mod runner;

pub use aggregate::{
    aggregate, read_aggregate_csv, write_aggregate_csv, AggregateColumn, AggregateSeries,
};
pub use config::{parse_set_arg, RunConfig};
pub use plot::{emit_plot, render_svg, PlotAxes, PlotSeries};
pub use runner::{expand_sweeps, run, run_matrix, CellReport, MatrixReport, RunReport};

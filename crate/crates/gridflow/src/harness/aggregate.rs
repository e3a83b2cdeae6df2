//! Cross-seed aggregation: mean and standard error per metric column over a
//! shared states-visited grid.

use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{fmt_float, MetricsRecord};

/// Mean and standard error of one metric, per evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateColumn {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Aggregated learning curves over a shared x grid (states visited).
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSeries {
    pub x: Vec<u64>,
    pub modes_found: AggregateColumn,
    pub modes_pct: AggregateColumn,
    pub empirical_l1: AggregateColumn,
    pub mean_loss: AggregateColumn,
    pub mean_online_reward: AggregateColumn,
}

pub const AGGREGATE_COLUMNS: [&str; 5] = [
    "modes_found",
    "modes_pct",
    "empirical_l1",
    "mean_loss",
    "mean_online_reward",
];

impl AggregateSeries {
    pub fn column(&self, name: &str) -> Option<&AggregateColumn> {
        match name {
            "modes_found" => Some(&self.modes_found),
            "modes_pct" => Some(&self.modes_pct),
            "empirical_l1" => Some(&self.empirical_l1),
            "mean_loss" => Some(&self.mean_loss),
            "mean_online_reward" => Some(&self.mean_online_reward),
            _ => None,
        }
    }
}

/// Mean and sample standard error (n-1 denominator over sqrt(n)) of one
/// value list.
fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Aggregate per-seed record series. Requires at least two series sharing
/// the exact states-visited grid.
pub fn aggregate(per_seed: &[&[MetricsRecord]]) -> Result<AggregateSeries> {
    if per_seed.len() < 2 {
        return Err(Error::Usage(format!(
            "aggregation needs at least 2 seeds, got {}",
            per_seed.len()
        )));
    }
    let x: Vec<u64> = per_seed[0].iter().map(|r| r.states_visited).collect();
    if x.is_empty() {
        return Err(Error::Usage("aggregation needs non-empty series".into()));
    }
    for (i, series) in per_seed.iter().enumerate() {
        let xi: Vec<u64> = series.iter().map(|r| r.states_visited).collect();
        if xi != x {
            return Err(Error::Usage(format!(
                "seed series {} has a different states-visited grid",
                i
            )));
        }
    }

    let points = x.len();
    let column = |get: fn(&MetricsRecord) -> f64| -> AggregateColumn {
        let mut mean = Vec::with_capacity(points);
        let mut stderr = Vec::with_capacity(points);
        for point in 0..points {
            let values: Vec<f64> = per_seed.iter().map(|s| get(&s[point])).collect();
            let (m, se) = mean_stderr(&values);
            mean.push(m);
            stderr.push(se);
        }
        AggregateColumn { mean, stderr }
    };

    Ok(AggregateSeries {
        modes_found: column(|r| r.modes_found as f64),
        modes_pct: column(|r| r.modes_pct),
        empirical_l1: column(|r| r.empirical_l1),
        mean_loss: column(|r| r.mean_loss),
        mean_online_reward: column(|r| r.mean_online_reward),
        x,
    })
}

fn header() -> String {
    let mut parts = vec!["states_visited".to_string()];
    for name in AGGREGATE_COLUMNS {
        parts.push(format!("{}_mean", name));
        parts.push(format!("{}_stderr", name));
    }
    parts.join(",")
}

/// Write an aggregate as CSV: x plus `<column>_mean,<column>_stderr` pairs.
pub fn write_aggregate_csv(agg: &AggregateSeries, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut out = header();
    out.push('\n');
    for i in 0..agg.x.len() {
        let mut fields = vec![agg.x[i].to_string()];
        for name in AGGREGATE_COLUMNS {
            let col = agg.column(name).unwrap();
            fields.push(fmt_float(col.mean[i]));
            fields.push(fmt_float(col.stderr[i]));
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parse a CSV produced by [`write_aggregate_csv`].
pub fn read_aggregate_csv(path: &Path) -> Result<AggregateSeries> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header() => {}
        other => {
            return Err(Error::Usage(format!(
                "unexpected aggregate header: {:?}",
                other
            )))
        }
    }
    let mut x = Vec::new();
    let mut columns: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); 5];
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::Usage(format!(
                "aggregate line {} has {} fields, expected 11",
                lineno + 2,
                fields.len()
            )));
        }
        x.push(
            fields[0]
                .parse()
                .map_err(|e| Error::Usage(format!("bad x value {:?}: {}", fields[0], e)))?,
        );
        for (c, column) in columns.iter_mut().enumerate() {
            let parse = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|e| Error::Usage(format!("bad value {:?}: {}", s, e)))
            };
            column.0.push(parse(fields[1 + 2 * c])?);
            column.1.push(parse(fields[2 + 2 * c])?);
        }
    }
    let mut take = columns.into_iter();
    let mut next = || {
        let (mean, stderr) = take.next().unwrap();
        AggregateColumn { mean, stderr }
    };
    Ok(AggregateSeries {
        x,
        modes_found: next(),
        modes_pct: next(),
        empirical_l1: next(),
        mean_loss: next(),
        mean_online_reward: next(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(step: u64, states: u64, modes: u64, l1: f64) -> MetricsRecord {
        MetricsRecord {
            wall_step: step,
            states_visited: states,
            modes_found: modes,
            modes_pct: modes as f64 / 16.0,
            empirical_l1: l1,
            mean_loss: l1 * 2.0,
            mean_online_reward: 1.0 - l1,
        }
    }

    #[test]
    fn identical_series_aggregate_to_themselves_with_zero_stderr() {
        // Dyadic values keep the mean of identical series exact.
        let series = vec![record(50, 800, 4, 0.25), record(100, 1600, 8, 0.125)];
        let agg = aggregate(&[&series, &series, &series]).unwrap();
        assert_eq!(agg.x, vec![800, 1600]);
        assert_eq!(agg.modes_found.mean, vec![4.0, 8.0]);
        assert_eq!(agg.modes_found.stderr, vec![0.0, 0.0]);
        assert_eq!(agg.empirical_l1.mean, vec![0.25, 0.125]);
        assert_eq!(agg.empirical_l1.stderr, vec![0.0, 0.0]);
    }

    #[test]
    fn stderr_uses_sample_stddev_over_sqrt_n() {
        let a = vec![record(50, 800, 2, 0.3)];
        let b = vec![record(50, 800, 4, 0.1)];
        let agg = aggregate(&[&a, &b]).unwrap();
        // mean 3, sample std sqrt(2), stderr sqrt(2)/sqrt(2) = 1
        assert_eq!(agg.modes_found.mean, vec![3.0]);
        assert!((agg.modes_found.stderr[0] - 1.0).abs() < 1e-12);
        // l1: mean 0.2, sample std ~0.1414, stderr 0.1
        assert!((agg.empirical_l1.mean[0] - 0.2).abs() < 1e-12);
        assert!((agg.empirical_l1.stderr[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn single_series_is_rejected() {
        let series = vec![record(50, 800, 4, 0.2)];
        assert!(matches!(aggregate(&[&series]), Err(Error::Usage(_))));
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = vec![record(50, 800, 2, 0.3)];
        let b = vec![record(50, 900, 2, 0.3)];
        assert!(matches!(aggregate(&[&a, &b]), Err(Error::Usage(_))));
    }

    #[test]
    fn aggregate_csv_round_trips() {
        let a = vec![record(50, 800, 2, 0.3), record(100, 1600, 5, 0.25)];
        let b = vec![record(50, 800, 4, 0.1), record(100, 1600, 9, 0.05)];
        let agg = aggregate(&[&a, &b]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("aggregate.csv");
        write_aggregate_csv(&agg, &path).unwrap();
        let back = read_aggregate_csv(&path).unwrap();
        assert_eq!(back, agg);
    }
}

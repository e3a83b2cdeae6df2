//! Deterministic static SVG line charts with shaded standard-error bands.
//!
//! The output is a pure function of the inputs: fixed canvas, fixed palette,
//! fixed number formatting. Identical inputs produce identical bytes.

use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 168.0;
const MARGIN_TOP: f64 = 44.0;
const MARGIN_BOTTOM: f64 = 58.0;

/// Tableau-style palette, cycled per series.
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// One curve: shared x grid, mean values, and an optional standard-error
/// band (empty vector = no band).
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub stderr: Vec<f64>,
}

/// Axis labels and chart title.
#[derive(Debug, Clone, Default)]
pub struct PlotAxes {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
}

fn fmt_coord(v: f64) -> String {
    format!("{:.2}", v)
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    let s = if a >= 1000.0 {
        format!("{:.0}", v)
    } else if a >= 1.0 {
        format!("{:.2}", v)
    } else {
        format!("{:.4}", v)
    };
    // Trim trailing zeros of the fractional part.
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn nice_ticks(min: f64, max: f64, count: usize) -> Vec<f64> {
    let span = max - min;
    (0..=count)
        .map(|i| min + span * i as f64 / count as f64)
        .collect()
}

/// Render the chart as an SVG string.
pub fn render_svg(series: &[PlotSeries], axes: &PlotAxes) -> Result<String> {
    if series.is_empty() {
        return Err(Error::Usage("plot needs at least one series".into()));
    }
    let x_grid = &series[0].x;
    if x_grid.is_empty() {
        return Err(Error::Usage("plot series are empty".into()));
    }
    for s in series {
        if s.x != *x_grid {
            return Err(Error::Usage(format!(
                "series {:?} does not share the x grid",
                s.label
            )));
        }
        if s.y.len() != s.x.len() || (!s.stderr.is_empty() && s.stderr.len() != s.x.len()) {
            return Err(Error::Usage(format!(
                "series {:?} has mismatched lengths",
                s.label
            )));
        }
    }

    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    for &x in x_grid {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
    }
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for (i, &y) in s.y.iter().enumerate() {
            let band = if s.stderr.is_empty() { 0.0 } else { s.stderr[i] };
            y_min = y_min.min(y - band);
            y_max = y_max.max(y + band);
        }
    }
    if x_min == x_max {
        x_min -= 1.0;
        x_max += 1.0;
    }
    if y_min == y_max {
        y_min -= 1.0;
        y_max += 1.0;
    } else {
        let pad = (y_max - y_min) * 0.05;
        y_min -= pad;
        y_max += pad;
    }

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = move |x: f64| MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = move |y: f64| MARGIN_TOP + plot_h - (y - y_min) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
        w = WIDTH,
        h = HEIGHT
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // Gridlines and tick labels.
    for &tx in &nice_ticks(x_min, x_max, 5) {
        let px = fmt_coord(sx(tx));
        svg.push_str(&format!(
            "<line x1=\"{px}\" y1=\"{}\" x2=\"{px}\" y2=\"{}\" stroke=\"#dddddd\" stroke-dasharray=\"3,4\"/>\n",
            fmt_coord(MARGIN_TOP),
            fmt_coord(MARGIN_TOP + plot_h),
        ));
        svg.push_str(&format!(
            "<text x=\"{px}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" fill=\"#333333\">{}</text>\n",
            fmt_coord(MARGIN_TOP + plot_h + 18.0),
            fmt_tick(tx)
        ));
    }
    for &ty in &nice_ticks(y_min, y_max, 5) {
        let py = fmt_coord(sy(ty));
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{py}\" x2=\"{}\" y2=\"{py}\" stroke=\"#dddddd\" stroke-dasharray=\"3,4\"/>\n",
            fmt_coord(MARGIN_LEFT),
            fmt_coord(MARGIN_LEFT + plot_w),
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\" fill=\"#333333\">{}</text>\n",
            fmt_coord(MARGIN_LEFT - 8.0),
            fmt_coord(sy(ty) + 4.0),
            fmt_tick(ty)
        ));
    }

    // Axes frame.
    svg.push_str(&format!(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333333\"/>\n",
        fmt_coord(MARGIN_LEFT),
        fmt_coord(MARGIN_TOP),
        fmt_coord(plot_w),
        fmt_coord(plot_h)
    ));

    // Standard-error bands first so lines draw on top.
    for (i, s) in series.iter().enumerate() {
        if s.stderr.is_empty() || s.stderr.iter().all(|&e| e == 0.0) {
            continue;
        }
        let color = PALETTE[i % PALETTE.len()];
        let mut points = String::new();
        for (j, (&x, &y)) in s.x.iter().zip(&s.y).enumerate() {
            points.push_str(&format!(
                "{},{} ",
                fmt_coord(sx(x)),
                fmt_coord(sy(y + s.stderr[j]))
            ));
        }
        for (j, (&x, &y)) in s.x.iter().zip(&s.y).enumerate().rev() {
            points.push_str(&format!(
                "{},{} ",
                fmt_coord(sx(x)),
                fmt_coord(sy(y - s.stderr[j]))
            ));
        }
        svg.push_str(&format!(
            "<polygon class=\"band\" points=\"{}\" fill=\"{}\" fill-opacity=\"0.18\" stroke=\"none\"/>\n",
            points.trim_end(),
            color
        ));
    }

    // Mean curves.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = s
            .x
            .iter()
            .zip(&s.y)
            .map(|(&x, &y)| format!("{},{}", fmt_coord(sx(x)), fmt_coord(sy(y))))
            .collect();
        svg.push_str(&format!(
            "<polyline class=\"series-line\" points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            points.join(" "),
            color
        ));
    }

    // Legend.
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = MARGIN_TOP + 10.0 + i as f64 * 20.0;
        let x0 = WIDTH - MARGIN_RIGHT + 12.0;
        svg.push_str(&format!(
            "<line class=\"legend-entry\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            fmt_coord(x0),
            fmt_coord(y),
            fmt_coord(x0 + 22.0),
            fmt_coord(y),
            color
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#333333\">{}</text>\n",
            fmt_coord(x0 + 28.0),
            fmt_coord(y + 4.0),
            escape(&s.label)
        ));
    }

    // Labels and title.
    if !axes.title.is_empty() {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\" fill=\"#111111\">{}</text>\n",
            fmt_coord(MARGIN_LEFT + plot_w / 2.0),
            escape(&axes.title)
        ));
    }
    if !axes.x_label.is_empty() {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" fill=\"#111111\">{}</text>\n",
            fmt_coord(MARGIN_LEFT + plot_w / 2.0),
            fmt_coord(HEIGHT - 14.0),
            escape(&axes.x_label)
        ));
    }
    if !axes.y_label.is_empty() {
        svg.push_str(&format!(
            "<text x=\"20\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 20 {})\" fill=\"#111111\">{}</text>\n",
            fmt_coord(MARGIN_TOP + plot_h / 2.0),
            fmt_coord(MARGIN_TOP + plot_h / 2.0),
            escape(&axes.y_label)
        ));
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render and write the chart.
pub fn emit_plot(series: &[PlotSeries], axes: &PlotAxes, path: &Path) -> Result<()> {
    let svg = render_svg(series, axes)?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, svg)?;
    Ok(())
}

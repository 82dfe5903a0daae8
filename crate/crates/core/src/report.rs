//! Report documents, sweep tables, curve data and SVG charts.
//!
//! Everything here is a pure function of its inputs; the caller supplies the
//! timestamp (or none), so identical runs render byte-identical files.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::pipeline::{ExperimentReport, SweepOutcome};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// JSON Schema for [`ReportDocument`].
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");
/// JSON Schema for [`SweepDocument`].
pub const SWEEP_SCHEMA: &str = include_str!("../schema/sweep.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    #[serde(flatten)]
    pub report: ExperimentReport,
}

impl ReportDocument {
    pub fn new(report: ExperimentReport, timestamp: Option<String>) -> Self {
        Self {
            tool_version: TOOL_VERSION.into(),
            timestamp,
            report,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report documents always serialize");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDocument {
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub baseline: ExperimentReport,
    pub rows: Vec<ExperimentReport>,
    pub baseline_selection_counts: Vec<usize>,
}

impl SweepDocument {
    pub fn new(outcome: &SweepOutcome, timestamp: Option<String>) -> Self {
        Self {
            tool_version: TOOL_VERSION.into(),
            timestamp,
            baseline: outcome.baseline.clone(),
            rows: outcome.rows.clone(),
            baseline_selection_counts: outcome.baseline_selection_counts.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("sweep documents always serialize");
        s.push('\n');
        s
    }
}

pub const REPORT_CSV_HEADER: &str =
    "mode,alpha_threshold,selected_count,augmented_count,train_size_final,accuracy,loss,seed,best_epoch";

fn alpha_cell(alpha: Option<f64>) -> String {
    alpha.map_or_else(|| "N/A".to_string(), |a| a.to_string())
}

/// Header plus one row.
pub fn report_csv(r: &ExperimentReport) -> String {
    let mode = match r.mode {
        crate::pipeline::RunMode::Baseline => "baseline",
        crate::pipeline::RunMode::Selective => "selective",
    };
    format!(
        "{REPORT_CSV_HEADER}\n{mode},{},{},{},{},{},{},{},{}\n",
        alpha_cell(r.alpha_threshold),
        r.selected_count,
        r.augmented_count,
        r.train_size_final,
        r.accuracy,
        r.loss,
        r.seed,
        r.best_epoch
    )
}

pub const TABLE_HEADER: &str = "model,alpha,accuracy,loss";

/// `Baseline` first, then `Model 1..n` in threshold order.
pub fn sweep_table_csv(outcome: &SweepOutcome) -> String {
    let mut out = format!("{TABLE_HEADER}\n");
    let b = &outcome.baseline;
    let _ = writeln!(out, "Baseline,N/A,{},{}", b.accuracy, b.loss);
    for (i, r) in outcome.rows.iter().enumerate() {
        let _ = writeln!(
            out,
            "Model {},{},{},{}",
            i + 1,
            alpha_cell(r.alpha_threshold),
            r.accuracy,
            r.loss
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Accuracy,
    Loss,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Self::Accuracy => "accuracy",
            Self::Loss => "loss",
        }
    }

    fn of(self, r: &ExperimentReport) -> f64 {
        match self {
            Self::Accuracy => r.accuracy,
            Self::Loss => r.loss,
        }
    }
}

fn curve_points(outcome: &SweepOutcome, metric: Metric) -> Vec<(f64, f64)> {
    outcome
        .rows
        .iter()
        .filter_map(|r| r.alpha_threshold.map(|a| (a, metric.of(r))))
        .collect()
}

/// `alpha,<metric>` for the selective rows.
pub fn curve_csv(outcome: &SweepOutcome, metric: Metric) -> String {
    let mut out = format!("alpha,{}\n", metric.name());
    for (a, v) in curve_points(outcome, metric) {
        let _ = writeln!(out, "{a},{v}");
    }
    out
}

pub struct LineChart<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub points: &'a [(f64, f64)],
    /// Dashed horizontal line with a legend label.
    pub reference: Option<(&'a str, f64)>,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const TICKS: usize = 5;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo {
        0.05 * (hi - lo)
    } else {
        0.05 * lo.abs().max(1.0)
    };
    (lo - pad, hi + pad)
}

/// Static SVG: axes with ticks, the data polyline with markers, optional
/// reference line.
pub fn line_chart_svg(chart: &LineChart<'_>) -> String {
    let (x0, x1) = padded_range(chart.points.iter().map(|p| p.0));
    let (y0, y1) = padded_range(chart.points.iter().map(|p| p.1).chain(chart.reference.map(|r| r.1)));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(chart.title)
    );
    let (bx, by) = (LEFT, TOP + ph);
    let _ = writeln!(
        s,
        r#"<path d="M{bx:.1},{TOP:.1} V{by:.1} H{:.1}" fill="none" stroke="black"/>"#,
        LEFT + pw
    );
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.1}" y1="{by:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{xv:.2}</text>"#,
            by + 5.0,
            by + 19.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{py:.1}" x2="{bx:.1}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.3}</text>"#,
            bx - 5.0,
            bx - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 12.0,
        escape(chart.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(chart.y_label)
    );
    if let Some((label, y)) = chart.reference {
        let py = sy(y);
        let _ = writeln!(
            s,
            r##"<line x1="{bx:.1}" y1="{py:.1}" x2="{:.1}" y2="{py:.1}" stroke="#888" stroke-dasharray="6 4"/><text x="{:.1}" y="{:.1}" text-anchor="end" fill="#555">{}</text>"##,
            LEFT + pw,
            LEFT + pw - 4.0,
            py - 5.0,
            escape(label)
        );
    }
    if !chart.points.is_empty() {
        let coords: Vec<String> = chart
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#1f5fa8" stroke-width="2"/>"##,
            coords.join(" ")
        );
        for c in &coords {
            let (cx, cy) = c.split_once(',').expect("coordinate pair");
            let _ = writeln!(s, r##"<circle cx="{cx}" cy="{cy}" r="3.5" fill="#1f5fa8"/>"##);
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Metric against α for the selective rows, baseline as the reference line.
pub fn curve_svg(outcome: &SweepOutcome, metric: Metric) -> String {
    let points = curve_points(outcome, metric);
    let (title, y_label) = match metric {
        Metric::Accuracy => ("Test accuracy by alpha threshold", "accuracy"),
        Metric::Loss => ("Test loss by alpha threshold", "loss"),
    };
    line_chart_svg(&LineChart {
        title,
        x_label: "alpha threshold",
        y_label,
        points: &points,
        reference: Some(("baseline", metric.of(&outcome.baseline))),
    })
}

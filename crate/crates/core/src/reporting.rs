//! Offline heatmaps and online explanation tables.
//!
//! A heatmap cell for label `r` and offset `t` holds `x - y`, where `x` is
//! the number of prefixes in which `r` at `t` pushes the KPI up and `y` the
//! number in which it pushes it down. Numeric attributes are labelled
//! "Low value of a" / "High value of a" against the training median.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::event_log::OutputDomain;
use crate::explainer::{ExplanationRecord, Relation};
use crate::shapley::csv_field;

/// Training medians of numeric attributes, keyed by attribute name.
pub type Medians = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    /// Number of offsets shown: 0, -1, ..., -(window-1).
    pub window: usize,
    pub top_rows: usize,
    pub top_k: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            window: 5,
            top_rows: 30,
            top_k: 2,
        }
    }
}

/// Row label of a record.
pub fn label(record: &ExplanationRecord, medians: &Medians) -> String {
    let value = record.value.as_deref().unwrap_or("");
    match record.relation {
        Relation::Equals => format!("{}={}", record.attribute, value),
        Relation::NotEquals => format!("{}!={}", record.attribute, value),
        Relation::Numeric => {
            let high = match (record.numeric_value, medians.get(&record.attribute)) {
                (Some(v), Some(m)) => v >= *m,
                _ => true,
            };
            let level = if high { "High" } else { "Low" };
            format!("{level} value of {}", record.attribute)
        }
    }
}

/// Net weight per `(label, offset)` in one prefix.
fn collapse(records: &[ExplanationRecord], medians: &Medians) -> BTreeMap<(String, i64), f64> {
    let mut out: BTreeMap<(String, i64), f64> = BTreeMap::new();
    for r in records {
        *out.entry((label(r, medians), r.timestep_offset))
            .or_default() += r.weight;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapMatrix {
    pub rows: Vec<String>,
    pub window: usize,
    /// `cells[row][c]` is the net count at offset `-c`.
    pub cells: Vec<Vec<i64>>,
    pub kpi: String,
    pub prefix_count: usize,
}

impl HeatmapMatrix {
    pub fn cell(&self, label: &str, offset: i64) -> Option<i64> {
        let r = self.rows.iter().position(|l| l == label)?;
        let c = usize::try_from(-offset).ok().filter(|c| *c < self.window)?;
        Some(self.cells[r][c])
    }

    pub fn max_abs(&self) -> i64 {
        self.cells
            .iter()
            .flatten()
            .map(|c| c.abs())
            .max()
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Aggregates per-prefix record lists into net counts. Each prefix moves a
/// cell by at most one, in the direction of its summed weight for that
/// label and offset. Rows are ordered by descending peak magnitude (ties by
/// label) and cut to `top_rows`; all-zero rows are dropped.
pub fn aggregate_heatmap(
    prefixes: &[Vec<ExplanationRecord>],
    medians: &Medians,
    options: &ReportOptions,
    kpi: &str,
) -> HeatmapMatrix {
    let window = options.window.max(1);
    let mut counts: BTreeMap<String, Vec<i64>> = BTreeMap::new();
    for records in prefixes {
        for ((label, offset), weight) in collapse(records, medians) {
            let Ok(col) = usize::try_from(-offset) else {
                continue;
            };
            if col >= window || weight == 0.0 {
                continue;
            }
            let row = counts.entry(label).or_insert_with(|| vec![0; window]);
            row[col] += if weight > 0.0 { 1 } else { -1 };
        }
    }
    let mut rows: Vec<(String, Vec<i64>)> = counts
        .into_iter()
        .filter(|(_, cells)| cells.iter().any(|c| *c != 0))
        .collect();
    let peak = |cells: &[i64]| cells.iter().map(|c| c.abs()).max().unwrap_or(0);
    rows.sort_by(|a, b| peak(&b.1).cmp(&peak(&a.1)).then_with(|| a.0.cmp(&b.0)));
    rows.truncate(options.top_rows);
    let (rows, cells) = rows.into_iter().unzip();
    HeatmapMatrix {
        rows,
        window,
        cells,
        kpi: kpi.to_string(),
        prefix_count: prefixes.len(),
    }
}

/// First column is the label, then one column per offset 0..-(window-1).
pub fn heatmap_csv(hm: &HeatmapMatrix) -> String {
    let mut out = String::from("explanation");
    for c in 0..hm.window {
        let _ = write!(out, ",{}", -(c as i64));
    }
    out.push('\n');
    for (label, cells) in hm.rows.iter().zip(&hm.cells) {
        out.push_str(&csv_field(label));
        for v in cells {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Fill colour of a cell: red for positive, blue for negative, intensity
/// proportional to `|v| / max_abs`.
pub fn cell_color(v: i64, max_abs: i64) -> String {
    if max_abs == 0 {
        return "#e0e0e0".to_string();
    }
    let t = v.unsigned_abs() as f64 / max_abs as f64;
    let fade = (255.0 * (1.0 - t)).round() as u8;
    if v > 0 {
        format!("#ff{fade:02x}{fade:02x}")
    } else if v < 0 {
        format!("#{fade:02x}{fade:02x}ff")
    } else {
        "#ffffff".to_string()
    }
}

const CELL_W: usize = 64;
const CELL_H: usize = 26;
const CHAR_W: usize = 7;

/// Self-contained SVG rendering of the matrix.
pub fn heatmap_svg(hm: &HeatmapMatrix) -> String {
    let label_w = hm.rows.iter().map(|r| r.chars().count()).max().unwrap_or(0) * CHAR_W + 16;
    let top = 64;
    let width = label_w + hm.window * CELL_W + 16;
    let height = top + hm.rows.len() * CELL_H + 40;
    let max_abs = hm.max_abs();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="monospace" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r##"<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="8" y="18" font-size="14">{} ({} prefixes)</text>"#,
        xml_escape(&hm.kpi),
        hm.prefix_count
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="38" text-anchor="middle">timestep difference</text>"#,
        label_w + hm.window * CELL_W / 2
    );
    for c in 0..hm.window {
        let x = label_w + c * CELL_W + CELL_W / 2;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
            top - 8,
            -(c as i64)
        );
    }
    for (r, (label, cells)) in hm.rows.iter().zip(&hm.cells).enumerate() {
        let y = top + r * CELL_H;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            label_w - 8,
            y + CELL_H / 2 + 4,
            xml_escape(label)
        );
        for (c, v) in cells.iter().enumerate() {
            let x = label_w + c * CELL_W;
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{}" stroke="#999999" stroke-width="0.5"/>"##,
                cell_color(*v, max_abs)
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{v}</text>"#,
                x + CELL_W / 2,
                y + CELL_H / 2 + 4
            );
        }
    }
    let legend_y = top + hm.rows.len() * CELL_H + 24;
    let _ = writeln!(
        s,
        r#"<text x="8" y="{legend_y}">scale: -{max_abs} (blue) .. +{max_abs} (red)</text>"#
    );
    s.push_str("</svg>\n");
    s
}

/// How a prediction is printed in online tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictionFormat {
    /// Seconds rendered as `Xd Xh Xm`.
    Duration,
    /// Probability thresholded at 0.5 into `1` / `0`.
    Binary,
    Numeric,
}

impl From<OutputDomain> for PredictionFormat {
    fn from(d: OutputDomain) -> Self {
        match d {
            OutputDomain::Seconds => Self::Duration,
            OutputDomain::Boolean => Self::Binary,
            OutputDomain::Numeric => Self::Numeric,
        }
    }
}

/// `Xd Xh Xm`, truncated to whole minutes; negative inputs clamp to zero.
pub fn format_duration(seconds: f64) -> String {
    let total = if seconds.is_finite() && seconds > 0.0 {
        (seconds / 60.0).floor() as u64
    } else {
        0
    };
    format!("{}d {}h {}m", total / 1440, (total / 60) % 24, total % 60)
}

pub fn format_prediction(value: f64, format: PredictionFormat) -> String {
    match format {
        PredictionFormat::Duration => format_duration(value),
        PredictionFormat::Binary => if value >= 0.5 { "1" } else { "0" }.to_string(),
        PredictionFormat::Numeric => format!("{value:.2}"),
    }
}

/// A label with its offset suffix, e.g. `ROLE!=BACK-OFFICE (-1)`.
pub fn explanation_text(label: &str, offset: i64) -> String {
    if offset == 0 {
        label.to_string()
    } else {
        format!("{label} ({offset})")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineCase {
    pub case_id: String,
    pub prediction: f64,
    pub records: Vec<ExplanationRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnlineExplanationRow {
    pub case_id: String,
    pub prediction: String,
    pub increasing: Vec<String>,
    pub decreasing: Vec<String>,
}

impl OnlineExplanationRow {
    fn column(items: &[String]) -> String {
        if items.is_empty() {
            "-".to_string()
        } else {
            items.join(" AND ")
        }
    }
}

/// Top-`k` explanations per sign, strongest first.
pub fn online_row(
    case: &OnlineCase,
    k: usize,
    format: PredictionFormat,
    medians: &Medians,
) -> OnlineExplanationRow {
    let mut merged: Vec<((String, i64), f64)> = collapse(&case.records, medians)
        .into_iter()
        .filter(|(_, w)| *w != 0.0)
        .collect();
    merged.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0)));
    let pick = |positive: bool| -> Vec<String> {
        merged
            .iter()
            .filter(|(_, w)| (*w > 0.0) == positive)
            .take(k)
            .map(|((label, offset), _)| explanation_text(label, *offset))
            .collect()
    };
    OnlineExplanationRow {
        case_id: case.case_id.clone(),
        prediction: format_prediction(case.prediction, format),
        increasing: pick(true),
        decreasing: pick(false),
    }
}

/// CSV with columns `CASE_ID,PREDICTION,INCREASING,DECREASING`.
pub fn online_table_csv(
    cases: &[OnlineCase],
    k: usize,
    format: PredictionFormat,
    medians: &Medians,
) -> String {
    let mut out = String::from("CASE_ID,PREDICTION,INCREASING,DECREASING\n");
    for case in cases {
        let row = online_row(case, k, format, medians);
        let _ = writeln!(
            out,
            "{},{},{},{}",
            csv_field(&row.case_id),
            csv_field(&row.prediction),
            csv_field(&OnlineExplanationRow::column(&row.increasing)),
            csv_field(&OnlineExplanationRow::column(&row.decreasing)),
        );
    }
    out
}

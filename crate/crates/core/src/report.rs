//! Success-rate aggregation and a static SVG line chart.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::read_records;
use crate::init::InitKind;
use crate::metrics::{Algo, TrialRecord};

/// Quantity on the horizontal axis. Rows are pooled over everything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Rank,
    Measurements,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Rank => "rank",
            Axis::Measurements => "measurements",
        }
    }

    fn value(self, record: &TrialRecord) -> usize {
        match self {
            Axis::Rank => record.r,
            Axis::Measurements => record.p,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Axis::Rank => "rank r",
            Axis::Measurements => "measurements per column P",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rank" => Ok(Axis::Rank),
            "measurements" => Ok(Axis::Measurements),
            other => Err(Error::InvalidConfig(format!("unknown axis `{other}`"))),
        }
    }
}

/// One row of the aggregated CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub cell: usize,
    pub algo: Algo,
    pub init: InitKind,
    pub success_rate: f64,
    pub n_trials: usize,
}

/// Success rate per `(algo, init, axis value)`, ordered by series then cell.
pub fn aggregate(records: &[TrialRecord], axis: Axis) -> Vec<AggregateRow> {
    let mut counts: BTreeMap<(Algo, InitKind, usize), (usize, usize)> = BTreeMap::new();
    for r in records {
        let entry = counts.entry((r.algo, r.init, axis.value(r))).or_default();
        entry.0 += usize::from(r.success);
        entry.1 += 1;
    }
    counts
        .into_iter()
        .map(|((algo, init, cell), (wins, total))| AggregateRow {
            cell,
            algo,
            init,
            success_rate: wins as f64 / total as f64,
            n_trials: total,
        })
        .collect()
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Line chart of success rate on `[0, 1]` against the axis, one series per `(algo, init)`.
pub fn render_svg(rows: &[AggregateRow], axis: Axis) -> String {
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let cells: Vec<usize> = {
        let mut v: Vec<usize> = rows.iter().map(|r| r.cell).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let (lo, hi) = match (cells.first(), cells.last()) {
        (Some(&lo), Some(&hi)) if hi > lo => (lo as f64, hi as f64),
        (Some(&c), _) => (c as f64 - 1.0, c as f64 + 1.0),
        _ => (0.0, 1.0),
    };
    let sx = |v: f64| LEFT + (v - lo) / (hi - lo) * plot_w;
    let sy = |v: f64| TOP + (1.0 - v) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    for k in 0..=5 {
        let v = k as f64 / 5.0;
        let y = sy(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    for &c in &cells {
        let x = sx(c as f64);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{c}</text>"#,
            TOP + plot_h + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        axis.label()
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">success rate</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    let mut series: BTreeMap<(Algo, InitKind), Vec<&AggregateRow>> = BTreeMap::new();
    for row in rows {
        series.entry((row.algo, row.init)).or_default().push(row);
    }
    for (idx, ((algo, init), points)) in series.iter().enumerate() {
        let color = COLORS[idx % COLORS.len()];
        let coords: Vec<String> = points
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.cell as f64), sy(p.success_rate)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="series" data-series="{algo}/{init}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        for p in points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sx(p.cell as f64),
                sy(p.success_rate)
            );
        }
        let ly = TOP + 10.0 + 20.0 * idx as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{algo} / {init}</text>"#, lx + 26.0, ly + 4.0);
    }
    svg.push_str("</svg>\n");
    svg
}

/// Path of the aggregated CSV written alongside a chart.
pub fn aggregate_path(svg: &Path) -> PathBuf {
    let stem = svg.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
    let mut name = stem;
    name.push(".agg.csv");
    svg.with_file_name(name)
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    writer.write_record(["cell", "algo", "init", "success_rate", "n_trials"])?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Reads a results CSV, writes the chart to `out` and the aggregate next to it.
pub fn report(input: &Path, axis: Axis, out: &Path) -> Result<Vec<AggregateRow>> {
    let records = read_records(input)?;
    let rows = aggregate(&records, axis);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(out, render_svg(&rows, axis)).map_err(|e| Error::io(out, e))?;
    write_aggregate(&aggregate_path(out), &rows)?;
    Ok(rows)
}

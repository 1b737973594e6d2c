use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::GridCell;
use super::protocol::{aggregate, RunResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(Error::InvalidConfig(format!("unknown report format `{other}`"))),
        }
    }
}

fn sorted(results: &[RunResult]) -> Vec<RunResult> {
    let mut rows = results.to_vec();
    rows.sort_by_key(RunResult::sort_key);
    rows
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes results sorted by (split seed, support seed, k).
pub fn emit_report(results: &[RunResult], path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    if results.is_empty() {
        return Err(Error::Empty("report results"));
    }
    let rows = sorted(results);
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r).map_err(|e| Error::InvalidConfig(format!("csv: {e}")))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(format!("csv: {e}")))?;
            fs::write(path, bytes).map_err(|e| Error::io(path, e))
        }
        ReportFormat::Json => write_text(path, &(serde_json::to_string_pretty(&rows)? + "\n")),
        ReportFormat::Markdown => write_text(path, &markdown_table(&rows)),
    }
}

pub fn read_report_csv(path: impl AsRef<Path>) -> Result<Vec<RunResult>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.into(),
        line: 0,
        message: e.to_string(),
    })?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                path: path.into(),
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_report_json(path: impl AsRef<Path>) -> Result<Vec<RunResult>> {
    crate::corpus::jsonl::read_json(path)
}

/// One JSON object per line, sorted like the reports.
pub fn write_results_jsonl(results: &[RunResult], path: impl AsRef<Path>) -> Result<()> {
    let mut text = String::new();
    for r in sorted(results) {
        text.push_str(&serde_json::to_string(&r)?);
        text.push('\n');
    }
    write_text(path.as_ref(), &text)
}

pub fn read_results_jsonl(path: impl AsRef<Path>) -> Result<Vec<RunResult>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.into(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

/// Mean ± standard deviation of F1 (in percent) per k, plus the average of
/// the per-k means.
pub fn markdown_table(results: &[RunResult]) -> String {
    let summary = aggregate(results);
    let mut out = String::from("|");
    for s in &summary {
        let _ = write!(out, " {}-shot |", s.k);
    }
    out.push_str(" Avg |\n|");
    out.push_str(&" --- |".repeat(summary.len() + 1));
    out.push_str("\n|");
    for s in &summary {
        let _ = write!(out, " {} ± {} |", pct(s.mean_f1), pct(s.std_f1));
    }
    let avg = summary.iter().map(|s| s.mean_f1).sum::<f64>() / summary.len().max(1) as f64;
    let _ = writeln!(out, " {} |", pct(avg));
    out
}

/// Markdown table with one row per grid cell and one column per k.
pub fn grid_markdown(cells: &[GridCell]) -> String {
    let mut ks: Vec<usize> = cells.iter().flat_map(|c| c.mean_f1.keys().copied()).collect();
    ks.sort_unstable();
    ks.dedup();
    let mut out = String::from("| labels | scheme |");
    for k in &ks {
        let _ = write!(out, " {k}-shot |");
    }
    out.push_str("\n| --- | --- |");
    out.push_str(&" --- |".repeat(ks.len()));
    out.push('\n');
    for c in cells {
        let _ = write!(out, "| {} | {} |", c.n_labels, c.scheme);
        for k in &ks {
            match (c.mean_f1.get(k), c.stddev.get(k)) {
                (Some(m), Some(s)) => {
                    let _ = write!(out, " {} ± {} |", pct(*m), pct(*s));
                }
                _ => out.push_str(" skipped |"),
            }
        }
        out.push('\n');
    }
    out
}

/// Heat-map panels, one per k: rows are schemes, columns label counts,
/// each square shaded and labelled with its mean F1.
pub fn grid_svg(cells: &[GridCell]) -> String {
    const SIZE: usize = 56;
    const LEFT: usize = 90;
    const TOP: usize = 40;
    let mut ns: Vec<usize> = cells.iter().map(|c| c.n_labels).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut schemes: Vec<String> = Vec::new();
    for c in cells {
        let s = c.scheme.to_string();
        if !schemes.contains(&s) {
            schemes.push(s);
        }
    }
    let mut ks: Vec<usize> = cells.iter().flat_map(|c| c.mean_f1.keys().copied()).collect();
    ks.sort_unstable();
    ks.dedup();

    let panel_w = LEFT + ns.len() * SIZE + 20;
    let panel_h = TOP + schemes.len() * SIZE + 30;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"12\">\n",
        panel_w * ks.len().max(1),
        panel_h
    );
    for (pi, k) in ks.iter().enumerate() {
        let x0 = pi * panel_w;
        let _ = writeln!(out, "<text x=\"{}\" y=\"20\" font-weight=\"bold\">{k}-shot F1</text>", x0 + LEFT);
        for (ci, n) in ns.iter().enumerate() {
            let x = x0 + LEFT + ci * SIZE + SIZE / 2;
            let _ = writeln!(out, "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{n}</text>", panel_h - 10);
        }
        for (ri, s) in schemes.iter().enumerate() {
            let y = TOP + ri * SIZE;
            let _ = writeln!(out, "<text x=\"{}\" y=\"{}\">{s}</text>", x0 + 8, y + SIZE / 2 + 4);
            for (ci, n) in ns.iter().enumerate() {
                let x = x0 + LEFT + ci * SIZE;
                let cell = cells.iter().find(|c| c.n_labels == *n && c.scheme.to_string() == *s);
                let value = cell.and_then(|c| c.mean_f1.get(k)).copied();
                let shade = value.map_or(255, |v| 255 - (v.clamp(0.0, 1.0) * 200.0) as u8);
                let _ = writeln!(
                    out,
                    "<rect x=\"{x}\" y=\"{y}\" width=\"{SIZE}\" height=\"{SIZE}\" fill=\"rgb({shade},{shade},255)\" stroke=\"#444\"/>"
                );
                let label = value.map_or("n/a".to_string(), pct);
                let _ = writeln!(
                    out,
                    "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{label}</text>",
                    x + SIZE / 2,
                    y + SIZE / 2 + 4
                );
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Writes `grid.json`, `grid.md` and `grid.svg` into `dir`.
pub fn emit_grid_report(cells: &[GridCell], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if cells.is_empty() {
        return Err(Error::Empty("grid cells"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    crate::corpus::jsonl::write_json(dir.join("grid.json"), &cells)?;
    write_text(&dir.join("grid.md"), &grid_markdown(cells))?;
    write_text(&dir.join("grid.svg"), &grid_svg(cells))
}

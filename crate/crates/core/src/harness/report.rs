//! Metrics files, encoder comparison tables and their CSV/Markdown output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::TrainConfig;
use super::run::{run_experiment, MetricsRecord, Phase};
use super::{HarnessError, Result};
use crate::encoders::Encoding;

pub const METRICS_HEADER: &str = "epoch,split,loss,top1,wall_seconds";
pub const COMPARISON_HEADER: &str = "label,encoding,top1,loss,baseline,delta,rank";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Csv {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Metrics as CSV text with the fixed header.
pub fn metrics_csv(records: &[MetricsRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(HarnessError::Empty("metrics records"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).expect("writing to memory");
    }
    let bytes = w.into_inner().expect("flushing to memory");
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn emit_csv(records: &[MetricsRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, metrics_csv(records)?).map_err(io_err(path))
}

pub fn parse_metrics_csv(text: &str, path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err(path))?.iter().collect::<Vec<_>>().join(",");
    if header != METRICS_HEADER {
        return Err(HarnessError::Csv {
            path: path.to_path_buf(),
            reason: format!("header {header:?}, expected {METRICS_HEADER:?}"),
        });
    }
    r.deserialize().map(|row| row.map_err(csv_err(path))).collect()
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_metrics_csv(&text, path)
}

/// Position of a cell within its row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rank {
    Best,
    Second,
    Other,
}

impl Rank {
    pub fn as_str(self) -> &'static str {
        match self {
            Rank::Best => "best",
            Rank::Second => "second",
            Rank::Other => "",
        }
    }
}

/// Ties share a rank: every value equal to the maximum is `Best`, every value
/// equal to the next distinct value is `Second`.
pub fn rank_values(values: &[f64]) -> Vec<Rank> {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(|a, b| b.total_cmp(a));
    distinct.dedup();
    values
        .iter()
        .map(|&v| match distinct.iter().position(|&d| d == v) {
            Some(0) => Rank::Best,
            Some(1) => Rank::Second,
            _ => Rank::Other,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub encoding: Encoding,
    /// Final-epoch validation top-1.
    pub top1: f64,
    pub loss: f64,
    /// The encoder this one is measured against, when it was part of the sweep.
    pub baseline: Option<Encoding>,
    /// `top1 - baseline top1`.
    pub delta: Option<f64>,
    pub rank: Rank,
    pub records: Vec<MetricsRecord>,
}

/// One row of the rendered table: a dataset or architecture label and one
/// cell per encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub label: String,
    pub rows: Vec<ComparisonRow>,
}

/// Runs `base` once per encoder (same seed, data and architecture) and
/// tabulates final validation accuracy.
pub fn compare_encoders(base: &TrainConfig, encoders: &[Encoding]) -> Result<ComparisonTable> {
    if encoders.len() < 2 {
        return Err(HarnessError::Config(format!(
            "comparison needs at least 2 encoders, got {}",
            encoders.len()
        )));
    }
    for (i, e) in encoders.iter().enumerate() {
        if encoders[..i].contains(e) {
            return Err(HarnessError::Config(format!("encoder {e} listed twice")));
        }
    }
    base.validate()?;
    let mut rows = Vec::with_capacity(encoders.len());
    for &encoding in encoders {
        let mut cfg = base.clone();
        cfg.encoder.kind = encoding;
        let records = run_experiment(&cfg)?;
        let last = final_val(&records).expect("at least one epoch ran");
        rows.push(ComparisonRow {
            encoding,
            top1: last.top1,
            loss: last.loss,
            baseline: None,
            delta: None,
            rank: Rank::Other,
            records,
        });
    }
    let label = format!("{} / {}", base.dataset.name(), base.arch.kind.as_str());
    Ok(finish_table(label, rows))
}

/// Last validation record.
pub fn final_val(records: &[MetricsRecord]) -> Option<&MetricsRecord> {
    records.iter().rev().find(|r| r.split == Phase::Val)
}

/// Fills in baselines, deltas and ranks from the rows' accuracies.
pub fn finish_table(label: String, mut rows: Vec<ComparisonRow>) -> ComparisonTable {
    let top1: Vec<(Encoding, f64)> = rows.iter().map(|r| (r.encoding, r.top1)).collect();
    let ranks = rank_values(&top1.iter().map(|&(_, t)| t).collect::<Vec<_>>());
    for (row, rank) in rows.iter_mut().zip(ranks) {
        row.rank = rank;
        row.baseline = row
            .encoding
            .baseline()
            .filter(|b| top1.iter().any(|(e, _)| e == b));
        row.delta = row
            .baseline
            .and_then(|b| top1.iter().find(|(e, _)| *e == b))
            .map(|&(_, base)| row.top1 - base);
    }
    ComparisonTable { label, rows }
}

pub fn comparison_csv(tables: &[ComparisonTable]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(COMPARISON_HEADER.split(',')).expect("writing to memory");
    for table in tables {
        for row in &table.rows {
            w.write_record([
                table.label.clone(),
                row.encoding.to_string(),
                row.top1.to_string(),
                row.loss.to_string(),
                row.baseline.map(|b| b.to_string()).unwrap_or_default(),
                row.delta.map(|d| d.to_string()).unwrap_or_default(),
                row.rank.as_str().to_string(),
            ])
            .expect("writing to memory");
        }
    }
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("csv output is utf-8")
}

pub fn emit_comparison_csv(tables: &[ComparisonTable], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, comparison_csv(tables)).map_err(io_err(path))
}

/// Markdown table: one row per [`ComparisonTable`], one column per encoder.
/// Cells show top-1 in percent; the best value of a row is bold, the second
/// underlined, and hybrids carry their signed delta in points.
pub fn render_markdown(tables: &[ComparisonTable]) -> String {
    let mut columns: Vec<Encoding> = Vec::new();
    for row in tables.iter().flat_map(|t| &t.rows) {
        if !columns.contains(&row.encoding) {
            columns.push(row.encoding);
        }
    }
    let mut out = String::new();
    let _ = write!(out, "| dataset / arch |");
    for c in &columns {
        let _ = write!(out, " {c} |");
    }
    out.push('\n');
    out.push_str("|---|");
    out.push_str(&"---:|".repeat(columns.len()));
    out.push('\n');
    for table in tables {
        let _ = write!(out, "| {} |", table.label);
        for c in &columns {
            let cell = table.rows.iter().find(|r| r.encoding == *c).map(format_cell);
            let _ = write!(out, " {} |", cell.unwrap_or_default());
        }
        out.push('\n');
    }
    out
}

fn format_cell(row: &ComparisonRow) -> String {
    let value = format!("{:.2}", row.top1 * 100.0);
    let mut cell = match row.rank {
        Rank::Best => format!("**{value}**"),
        Rank::Second => format!("<u>{value}</u>"),
        Rank::Other => value,
    };
    if let Some(d) = row.delta {
        let _ = write!(cell, " ({:+.2})", d * 100.0);
    }
    cell
}

pub fn emit_markdown(tables: &[ComparisonTable], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_markdown(tables)).map_err(io_err(path))
}

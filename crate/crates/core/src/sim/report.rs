use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::episode::SlotRecord;
use super::experiment::ExperimentReport;
use crate::engine::{Source, Strategy};
use crate::error::{Error, Result};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "per_slot.csv";
const CSV_HEADER: &str = "slot,strategy,source_tag,mean_AE";

/// One row of the per-slot CSV. `source_tag` is `all` for the mean over
/// every decision at that slot.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub slot: usize,
    pub strategy: String,
    pub source_tag: String,
    pub mean_ae: f64,
}

pub fn report_json(report: &ExperimentReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn report_csv(report: &ExperimentReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.strategies {
        let name = r.strategy.name();
        for stat in &r.per_slot {
            let _ = writeln!(out, "{},{name},all,{:?}", stat.slot, stat.mean_ae);
            for (source, (mean, _)) in &stat.by_source {
                let _ = writeln!(out, "{},{name},{},{mean:?}", stat.slot, source.tag());
            }
        }
    }
    out
}

/// Writes `report.json` and `per_slot.csv` into `dir`, creating it if
/// needed. Returns the two paths.
pub fn export_report(report: &ExperimentReport, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join(REPORT_JSON);
    fs::write(&json, report_json(report)?).map_err(|e| Error::io(&json, e))?;
    let csv = dir.join(REPORT_CSV);
    fs::write(&csv, report_csv(report)).map_err(|e| Error::io(&csv, e))?;
    Ok((json, csv))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<ExperimentReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_slot_csv(path: impl AsRef<Path>) -> Result<Vec<CsvRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::InvalidTrace(format!("{}: unexpected CSV header", path.display())));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = |column: usize| Error::NonNumericCell {
                row: i + 1,
                column,
                cell: f.get(column - 1).unwrap_or(&"").to_string(),
            };
            if f.len() != 4 {
                return Err(Error::RowWidth {
                    row: i + 1,
                    expected: 4,
                    found: f.len(),
                });
            }
            Ok(CsvRow {
                slot: f[0].parse().map_err(|_| bad(1))?,
                strategy: f[1].to_string(),
                source_tag: f[2].to_string(),
                mean_ae: f[3].parse().map_err(|_| bad(4))?,
            })
        })
        .collect()
}

/// Per-slot log of a single episode, for `replay`.
pub fn episode_csv(strategy: Strategy, records: &[SlotRecord]) -> String {
    let mut out = String::from("slot,strategy,source_tag,mean_AE,max_AE\n");
    for r in records {
        let mean = r.ae.iter().sum::<f64>() / r.ae.len() as f64;
        let max = r.ae.iter().cloned().fold(0.0, f64::max);
        let _ = writeln!(out, "{},{},{},{mean:?},{max:?}", r.slot, strategy.name(), r.tag.tag());
    }
    out
}

pub fn source_from_tag(tag: &str) -> Option<Source> {
    [Source::Actual, Source::ShortTerm, Source::LongTerm, Source::HoldLast]
        .into_iter()
        .find(|s| s.tag() == tag)
}

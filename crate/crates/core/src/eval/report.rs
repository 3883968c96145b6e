use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::harness::{GridResult, TemporalRow};
use crate::error::{Error, Result};

/// Bumped whenever a report column changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct SchemaHeader<'a> {
    schema: &'a str,
    version: u32,
}

/// Writes rows as CSV with a header line. Rows must be flat records.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a schema line followed by one JSON object per row.
pub fn write_jsonl<T: Serialize>(path: &Path, schema: &str, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = SchemaHeader {
        schema,
        version: SCHEMA_VERSION,
    };
    let mut line = |v: String| writeln!(w, "{v}").map_err(|e| Error::io(path, e));
    line(serde_json::to_string(&header)?)?;
    for r in rows {
        line(serde_json::to_string(r)?)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes both `<stem>.csv` and `<stem>.jsonl` into `dir`.
pub fn write_table<T: Serialize>(dir: &Path, stem: &str, rows: &[T]) -> Result<()> {
    write_csv(&dir.join(format!("{stem}.csv")), rows)?;
    write_jsonl(&dir.join(format!("{stem}.jsonl")), stem, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRecord {
    pub family: &'static str,
    pub rank: usize,
    pub candidate: usize,
    pub params: String,
    pub mean_f1: f64,
    pub mean_accuracy: f64,
    pub objects: usize,
    pub failures: usize,
}

impl From<&GridResult> for GridRecord {
    fn from(g: &GridResult) -> Self {
        GridRecord {
            family: g.family.name(),
            rank: g.rank,
            candidate: g.candidate,
            params: g.params.clone(),
            mean_f1: g.mean_f1,
            mean_accuracy: g.mean_accuracy,
            objects: g.objects,
            failures: g.failures,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemporalRecord {
    pub period: String,
    pub window_start: String,
    pub window_end: String,
    pub family: &'static str,
    pub params: String,
    pub objects_evaluated: usize,
    pub objects_skipped: usize,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub skipped: String,
}

impl From<&TemporalRow> for TemporalRecord {
    fn from(r: &TemporalRow) -> Self {
        let ok = r.skipped.is_none();
        TemporalRecord {
            period: period_label(r.years),
            window_start: r.window.start.format("%Y-%m-%d").to_string(),
            window_end: r.window.end.format("%Y-%m-%d").to_string(),
            family: r.family.name(),
            params: r.params.clone(),
            objects_evaluated: r.objects_evaluated,
            objects_skipped: r.objects_skipped,
            tp: r.counts.tp,
            fp: r.counts.fp,
            fn_: r.counts.fn_,
            tn: r.counts.tn,
            accuracy: ok.then_some(r.accuracy),
            f1: ok.then_some(r.f1),
            skipped: r.skipped.clone().unwrap_or_default(),
        }
    }
}

pub fn period_label(years: u32) -> String {
    format!("{years} year")
}

/// Period × family table with accuracy and F1 columns per family, in the
/// order families first appear. Skipped cells are left empty.
pub fn temporal_wide_csv(rows: &[TemporalRow]) -> String {
    let mut families = Vec::new();
    let mut periods = Vec::new();
    for r in rows {
        if !families.contains(&r.family) {
            families.push(r.family);
        }
        if !periods.contains(&r.years) {
            periods.push(r.years);
        }
    }
    let mut out = String::from("period");
    for f in &families {
        out.push_str(&format!(",{0} acc,{0} f1", f.name()));
    }
    out.push('\n');
    for y in periods {
        out.push_str(&period_label(y));
        for f in &families {
            match rows.iter().find(|r| r.years == y && r.family == *f && r.skipped.is_none()) {
                Some(r) => out.push_str(&format!(",{:.4},{:.4}", r.accuracy, r.f1)),
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{ConfusionCounts, ModelFamily, PeriodWindow};
    use chrono::{TimeZone, Utc};

    fn row(years: u32, family: ModelFamily, f1: f64) -> TemporalRow {
        let end = Utc.with_ymd_and_hms(2021, 8, 24, 0, 0, 0).unwrap();
        TemporalRow {
            years,
            window: PeriodWindow::trailing_years(end, years).unwrap(),
            family,
            params: String::new(),
            objects_evaluated: 1,
            objects_skipped: 0,
            counts: ConfusionCounts::default(),
            accuracy: 0.9,
            f1,
            skipped: None,
        }
    }

    #[test]
    fn wide_table_layout() {
        let rows = vec![
            row(2, ModelFamily::IForest, 0.1),
            row(2, ModelFamily::AnchorAe, 0.5),
            row(1, ModelFamily::IForest, 0.2),
        ];
        let text = temporal_wide_csv(&rows);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "period,IF acc,IF f1,Anchor AE acc,Anchor AE f1");
        assert_eq!(lines[1], "2 year,0.9000,0.1000,0.9000,0.5000");
        assert_eq!(lines[2], "1 year,0.9000,0.2000,,");
    }

    #[test]
    fn jsonl_starts_with_schema() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<TemporalRecord> = vec![(&row(1, ModelFamily::Ae, 0.3)).into()];
        write_table(dir.path(), "temporal", &rows).unwrap();
        let text = std::fs::read_to_string(dir.path().join("temporal.jsonl")).unwrap();
        assert!(text.starts_with("{\"schema\":\"temporal\",\"version\":1}\n"));
        let csv = std::fs::read_to_string(dir.path().join("temporal.csv")).unwrap();
        assert!(csv.starts_with("period,window_start,window_end,family,params,"));
    }
}

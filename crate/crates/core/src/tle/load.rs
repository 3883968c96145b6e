use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{parse_tle, EphemerisSeries, TleRecord};
use crate::error::{Error, Result};

pub type SeriesMap = BTreeMap<u32, EphemerisSeries>;

/// A record that could not be parsed, with the 1-based line it started on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRecord {
    pub line_number: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub source: String,
    pub records_parsed: usize,
    pub duplicates_removed: usize,
    pub checksum_warnings: usize,
    pub rejected: Vec<RejectedRecord>,
}

/// Splits concatenated 2-line or 3-line TLE text into records.
///
/// Any line that is neither a line 1 nor a line 2 is taken as the name of
/// the following record (a leading `"0 "` is stripped).
pub fn parse_tle_text(text: &str) -> (Vec<TleRecord>, Vec<RejectedRecord>) {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.is_empty())
        .collect();

    let mut records = Vec::new();
    let mut rejected = Vec::new();
    let mut name: Option<String> = None;
    let mut i = 0;
    while i < lines.len() {
        let (line_number, line) = lines[i];
        let next = lines.get(i + 1).map(|(_, l)| *l);
        if line.starts_with("1 ") && next.is_some_and(|n| n.starts_with("2 ")) {
            match parse_tle(line, next.unwrap()) {
                Ok(mut record) => {
                    record.name = name.take();
                    records.push(record);
                }
                Err(e) => {
                    name = None;
                    rejected.push(RejectedRecord {
                        line_number,
                        reason: e.to_string(),
                    })
                }
            }
            i += 2;
        } else if line.starts_with("1 ") || line.starts_with("2 ") {
            rejected.push(RejectedRecord {
                line_number,
                reason: format!("line {} without its partner line", &line[..1]),
            });
            name = None;
            i += 1;
        } else {
            let stripped = line.strip_prefix("0 ").unwrap_or(line).trim();
            name = Some(stripped.to_string());
            i += 1;
        }
    }
    (records, rejected)
}

/// Groups records by catalog number into sorted, deduplicated series.
/// Returns the map and the number of duplicate epochs removed.
pub fn group_records(records: Vec<TleRecord>) -> (SeriesMap, usize) {
    let total = records.len();
    let mut by_id: BTreeMap<u32, Vec<TleRecord>> = BTreeMap::new();
    for r in records {
        by_id.entry(r.norad_id).or_default().push(r);
    }
    let map: SeriesMap = by_id
        .into_iter()
        .map(|(id, recs)| (id, EphemerisSeries::from_records(id, recs)))
        .collect();
    let kept: usize = map.values().map(|s| s.len()).sum();
    (map, total - kept)
}

pub(crate) fn build_series(text: &str, source: &str) -> Result<(SeriesMap, IngestReport)> {
    let (records, rejected) = parse_tle_text(text);
    for r in &rejected {
        warn!("{source}:{}: rejected record: {}", r.line_number, r.reason);
    }
    if records.is_empty() {
        return Err(Error::NoValidRecords(source.to_string()));
    }
    let checksum_warnings = records.iter().filter(|r| !r.checksums_ok()).count();
    if checksum_warnings > 0 {
        warn!("{source}: {checksum_warnings} records with checksum mismatches");
    }
    let records_parsed = records.len();
    let (map, duplicates_removed) = group_records(records);
    Ok((
        map,
        IngestReport {
            source: source.to_string(),
            records_parsed,
            duplicates_removed,
            checksum_warnings,
            rejected,
        },
    ))
}

/// Loads a TLE file into per-object series.
pub fn load_tle_file(path: impl AsRef<Path>) -> Result<(SeriesMap, IngestReport)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    build_series(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const L1: &str = "1 25544U 98067A   08264.51782528 -.00002182  00000-0 -11606-4 0  2927";
    const L2: &str = "2 25544  51.6416 247.4627 0006703 130.5360 325.0288 15.72125391563537";

    #[test]
    fn empty_text_has_no_valid_records() {
        let err = build_series("", "empty.tle").unwrap_err();
        assert!(err.to_string().contains("no valid records"));
    }

    #[test]
    fn three_line_format_keeps_name() {
        let text = format!("0 ISS (ZARYA)\n{L1}\n{L2}\n");
        let (recs, rej) = parse_tle_text(&text);
        assert!(rej.is_empty());
        assert_eq!(recs[0].name.as_deref(), Some("ISS (ZARYA)"));
    }

    #[test]
    fn bad_records_are_counted() {
        let text = format!("{L1}\n{L2}\n{L1}\ngarbage\n2 25544 short\n");
        let (map, report) = build_series(&text, "mixed").unwrap();
        assert_eq!(map[&25544].len(), 1);
        assert_eq!(report.rejected.len(), 2);
        assert_eq!(report.rejected[0].line_number, 3);
    }

    #[test]
    fn duplicate_epoch_keeps_higher_set_number() {
        // Same epoch, element set 292 vs 293 (checksum adjusted by hand).
        let l1b = "1 25544U 98067A   08264.51782528 -.00002182  00000-0 -11606-4 0  2938";
        let text = format!("{L1}\n{L2}\n{l1b}\n{L2}\n");
        let (map, report) = build_series(&text, "dup").unwrap();
        assert_eq!(map[&25544].len(), 1);
        assert_eq!(map[&25544].observations[0].element_set_number, 293);
        assert_eq!(report.duplicates_removed, 1);
        assert_eq!(report.checksum_warnings, 0);
    }
}

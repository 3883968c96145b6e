//! Two-line element set parsing.
//!
//! Column positions follow the fixed-width layout used by public catalogs
//! (1-indexed, both lines 69 characters wide including the checksum digit).

use std::fmt;

use chrono::{DateTime, Duration, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod fetch;
mod load;

pub use load::{group_records, load_tle_file, parse_tle_text, IngestReport, RejectedRecord, SeriesMap};

/// Nanoseconds per 1e-8 day, the resolution of the epoch field.
const NANOS_PER_EPOCH_UNIT: i64 = 864_000;
const EPOCH_UNITS_PER_DAY: i64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("line {line}: expected 69 characters, got {len}")]
    LineLength { line: u8, len: usize },
    #[error("line {line}: contains non-ASCII characters")]
    NonAscii { line: u8 },
    #[error("line {line}: expected '{line}' in column 1, found {found:?}")]
    LineNumber { line: u8, found: char },
    #[error("line {line}, columns {start}-{end}: cannot parse {field} from {text:?}")]
    Field {
        line: u8,
        start: usize,
        end: usize,
        field: &'static str,
        text: String,
    },
    #[error("line {line}, columns {start}-{end}: {field} = {value} is out of range")]
    OutOfRange {
        line: u8,
        start: usize,
        end: usize,
        field: &'static str,
        value: f64,
    },
    #[error("catalog number mismatch: line 1 has {line1}, line 2 has {line2}")]
    CatalogMismatch { line1: u32, line2: u32 },
    #[error("checksum input must be 68 characters, got {0}")]
    ChecksumLength(usize),
    #[error("epoch year {0} must be in 0..=99")]
    EpochYear(u32),
    #[error("epoch day {0} must be in [1, 367)")]
    EpochDay(f64),
}

/// One of the six classical orbital elements, in model input order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Element {
    MeanMotion,
    Eccentricity,
    Inclination,
    Raan,
    ArgPerigee,
    MeanAnomaly,
}

impl Element {
    pub const ALL: [Element; 6] = [
        Element::MeanMotion,
        Element::Eccentricity,
        Element::Inclination,
        Element::Raan,
        Element::ArgPerigee,
        Element::MeanAnomaly,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Element::MeanMotion => "mean_motion",
            Element::Eccentricity => "eccentricity",
            Element::Inclination => "inclination",
            Element::Raan => "raan",
            Element::ArgPerigee => "arg_perigee",
            Element::MeanAnomaly => "mean_anomaly",
        }
    }

    /// Elements measured in degrees on a circle (wrap at 360).
    pub fn is_angular(self) -> bool {
        matches!(
            self,
            Element::Raan | Element::ArgPerigee | Element::MeanAnomaly
        )
    }

    pub fn from_name(name: &str) -> Option<Element> {
        Element::ALL.into_iter().find(|e| e.name() == name)
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitalElements {
    /// revolutions per day
    pub mean_motion: f64,
    pub eccentricity: f64,
    /// degrees
    pub inclination: f64,
    /// degrees
    pub raan: f64,
    /// degrees
    pub arg_perigee: f64,
    /// degrees
    pub mean_anomaly: f64,
}

impl OrbitalElements {
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.mean_motion,
            self.eccentricity,
            self.inclination,
            self.raan,
            self.arg_perigee,
            self.mean_anomaly,
        ]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        OrbitalElements {
            mean_motion: v[0],
            eccentricity: v[1],
            inclination: v[2],
            raan: v[3],
            arg_perigee: v[4],
            mean_anomaly: v[5],
        }
    }

    pub fn get(&self, element: Element) -> f64 {
        self.to_array()[element.index()]
    }

    /// Checks the physical ranges; returns the first violated element.
    pub fn validate(&self) -> Result<(), (Element, f64)> {
        for element in Element::ALL {
            let v = self.get(element);
            let ok = v.is_finite()
                && match element {
                    Element::MeanMotion => v > 0.0,
                    Element::Eccentricity => (0.0..1.0).contains(&v),
                    Element::Inclination => (0.0..=180.0).contains(&v),
                    _ => (0.0..360.0).contains(&v),
                };
            if !ok {
                return Err((element, v));
            }
        }
        Ok(())
    }
}

/// A decimal number in the packed "assumed decimal point" exponent notation
/// of line 1 (`" 12345-4"` is `0.12345e-4`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PackedExp {
    /// Signed five-digit mantissa.
    pub mantissa: i32,
    pub exponent: i8,
}

impl PackedExp {
    pub fn value(&self) -> f64 {
        self.mantissa as f64 * 1e-5 * 10f64.powi(self.exponent as i32)
    }
}

/// A parsed TLE observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TleRecord {
    pub norad_id: u32,
    pub name: Option<String>,
    pub classification: char,
    /// Columns 10-17 with trailing blanks removed.
    pub intl_designator: String,
    pub epoch: DateTime<Utc>,
    /// First derivative of mean motion divided by two, rev/day^2.
    pub mean_motion_dot: f64,
    pub mean_motion_ddot: PackedExp,
    pub bstar: PackedExp,
    pub ephemeris_type: char,
    pub element_set_number: u32,
    pub elements: OrbitalElements,
    pub rev_number: u32,
    pub checksum_valid: (bool, bool),
}

impl TleRecord {
    pub fn checksums_ok(&self) -> bool {
        self.checksum_valid.0 && self.checksum_valid.1
    }
}

/// A time-ordered sequence of observations for one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EphemerisSeries {
    pub norad_id: u32,
    pub observations: Vec<TleRecord>,
}

impl EphemerisSeries {
    /// Builds a series, sorting by epoch and collapsing exact epoch
    /// collisions to the record with the highest element set number.
    pub fn from_records(norad_id: u32, mut records: Vec<TleRecord>) -> Self {
        records.sort_by(|a, b| {
            a.epoch
                .cmp(&b.epoch)
                .then(b.element_set_number.cmp(&a.element_set_number))
        });
        records.dedup_by(|later, kept| later.epoch == kept.epoch);
        EphemerisSeries {
            norad_id,
            observations: records,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn epochs(&self) -> Vec<DateTime<Utc>> {
        self.observations.iter().map(|r| r.epoch).collect()
    }

    /// Row-major N×6 matrix of element values.
    pub fn matrix(&self) -> Vec<[f64; 6]> {
        self.observations
            .iter()
            .map(|r| r.elements.to_array())
            .collect()
    }

    pub fn element_values(&self, element: Element) -> Vec<f64> {
        self.observations
            .iter()
            .map(|r| r.elements.get(element))
            .collect()
    }

    /// Observations with `start <= epoch < end`.
    pub fn window(&self, start: DateTime<Utc>, end: DateTime<Utc>) -> EphemerisSeries {
        EphemerisSeries {
            norad_id: self.norad_id,
            observations: self
                .observations
                .iter()
                .filter(|r| r.epoch >= start && r.epoch < end)
                .cloned()
                .collect(),
        }
    }
}

/// TLE checksum of the first 68 characters of a line: digits count at face
/// value, '-' counts as one, everything else as zero.
pub fn checksum(line: &str) -> Result<u8, ParseError> {
    let n = line.chars().count();
    if n != 68 {
        return Err(ParseError::ChecksumLength(n));
    }
    let sum: u32 = line
        .chars()
        .map(|c| match c {
            '0'..='9' => c as u32 - '0' as u32,
            '-' => 1,
            _ => 0,
        })
        .sum();
    Ok((sum % 10) as u8)
}

fn full_year(yy: u32) -> Result<i32, ParseError> {
    match yy {
        57..=99 => Ok(1900 + yy as i32),
        0..=56 => Ok(2000 + yy as i32),
        _ => Err(ParseError::EpochYear(yy)),
    }
}

fn epoch_from_units(yy: u32, units: i64) -> Result<DateTime<Utc>, ParseError> {
    let day = units as f64 / EPOCH_UNITS_PER_DAY as f64;
    if !(EPOCH_UNITS_PER_DAY..367 * EPOCH_UNITS_PER_DAY).contains(&units) {
        return Err(ParseError::EpochDay(day));
    }
    let year = full_year(yy)?;
    let jan1 = Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0).unwrap();
    Ok(jan1 + Duration::nanoseconds((units - EPOCH_UNITS_PER_DAY) * NANOS_PER_EPOCH_UNIT))
}

/// Decodes a two-digit epoch year and fractional day-of-year into UTC.
///
/// Years 57-99 map to the 1900s, 00-56 to the 2000s; day 1.0 is January 1
/// at midnight.
pub fn epoch_decode(yy: u32, day: f64) -> Result<DateTime<Utc>, ParseError> {
    if !(1.0..367.0).contains(&day) {
        return Err(ParseError::EpochDay(day));
    }
    full_year(yy)?;
    let units = (day * EPOCH_UNITS_PER_DAY as f64).round() as i64;
    epoch_from_units(yy, units.min(367 * EPOCH_UNITS_PER_DAY - 1))
}

/// Parses `ddd.dddddddd` exactly into units of 1e-8 day.
fn epoch_day_units(text: &str) -> Option<i64> {
    let text = text.trim();
    let (int, frac) = text.split_once('.').unwrap_or((text, ""));
    if int.is_empty() || frac.len() > 8 {
        return None;
    }
    if !int.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let int: i64 = int.parse().ok()?;
    let mut frac_units: i64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    for _ in frac.len()..8 {
        frac_units *= 10;
    }
    Some(int * EPOCH_UNITS_PER_DAY + frac_units)
}

struct Columns<'a> {
    line: &'a str,
    number: u8,
}

impl<'a> Columns<'a> {
    /// 1-indexed inclusive column span.
    fn span(&self, start: usize, end: usize) -> &'a str {
        &self.line[start - 1..end]
    }

    fn err(&self, start: usize, end: usize, field: &'static str) -> ParseError {
        ParseError::Field {
            line: self.number,
            start,
            end,
            field,
            text: self.span(start, end).to_string(),
        }
    }

    fn uint(&self, start: usize, end: usize, field: &'static str) -> Result<u32, ParseError> {
        let text = self.span(start, end).trim();
        if text.is_empty() || !text.bytes().all(|b| b.is_ascii_digit()) {
            return Err(self.err(start, end, field));
        }
        text.parse().map_err(|_| self.err(start, end, field))
    }

    /// Unsigned integer where an all-blank field reads as zero.
    fn uint_or_blank(&self, start: usize, end: usize, field: &'static str) -> Result<u32, ParseError> {
        if self.span(start, end).trim().is_empty() {
            Ok(0)
        } else {
            self.uint(start, end, field)
        }
    }

    fn float(&self, start: usize, end: usize, field: &'static str) -> Result<f64, ParseError> {
        let text = self.span(start, end).trim();
        let ok = !text.is_empty()
            && text
                .bytes()
                .all(|b| b.is_ascii_digit() || b == b'.' || b == b'-' || b == b'+');
        let value: f64 = if ok {
            text.parse().map_err(|_| self.err(start, end, field))?
        } else {
            return Err(self.err(start, end, field));
        };
        Ok(value)
    }

    fn packed_exp(&self, start: usize, end: usize, field: &'static str) -> Result<PackedExp, ParseError> {
        // [sign][5 digits][exp sign][exp digit]
        let raw = self.span(start, end);
        let b = raw.as_bytes();
        let err = || self.err(start, end, field);
        let sign = match b[0] {
            b' ' | b'+' => 1,
            b'-' => -1,
            _ => return Err(err()),
        };
        let digits = &raw[1..6];
        let digits = digits.trim_start();
        let mantissa: i32 = if digits.is_empty() {
            0
        } else if digits.bytes().all(|c| c.is_ascii_digit()) {
            digits.parse().map_err(|_| err())?
        } else {
            return Err(err());
        };
        let exp_sign = match b[6] {
            b'-' => -1,
            b'+' | b' ' => 1,
            _ => return Err(err()),
        };
        if !b[7].is_ascii_digit() {
            return Err(err());
        }
        let exponent = exp_sign * (b[7] - b'0') as i8;
        Ok(PackedExp {
            mantissa: sign * mantissa,
            exponent,
        })
    }

    fn bounded(
        &self,
        start: usize,
        end: usize,
        field: &'static str,
        value: f64,
        ok: bool,
    ) -> Result<f64, ParseError> {
        if ok && value.is_finite() {
            Ok(value)
        } else {
            Err(ParseError::OutOfRange {
                line: self.number,
                start,
                end,
                field,
                value,
            })
        }
    }

    fn verify_checksum(&self) -> bool {
        let expected = checksum(&self.line[..68]).expect("line length checked");
        self.line.as_bytes()[68] == b'0' + expected
    }
}

fn check_line(line: &str, number: u8) -> Result<Columns<'_>, ParseError> {
    if !line.is_ascii() {
        return Err(ParseError::NonAscii { line: number });
    }
    if line.len() != 69 {
        return Err(ParseError::LineLength {
            line: number,
            len: line.len(),
        });
    }
    let first = line.as_bytes()[0] as char;
    if first != (b'0' + number) as char {
        return Err(ParseError::LineNumber {
            line: number,
            found: first,
        });
    }
    Ok(Columns { line, number })
}

/// Parses one TLE from its two data lines.
///
/// A bad checksum does not reject the record; it is reported through
/// [`TleRecord::checksum_valid`].
pub fn parse_tle(line1: &str, line2: &str) -> Result<TleRecord, ParseError> {
    let l1 = check_line(line1, 1)?;
    let l2 = check_line(line2, 2)?;

    let id1 = l1.uint(3, 7, "catalog number")?;
    let id2 = l2.uint(3, 7, "catalog number")?;
    if id1 != id2 {
        return Err(ParseError::CatalogMismatch {
            line1: id1,
            line2: id2,
        });
    }

    let classification = line1.as_bytes()[7] as char;
    let intl_designator = l1.span(10, 17).trim_end().to_string();
    let yy = l1.uint(19, 20, "epoch year")?;
    let units = epoch_day_units(l1.span(21, 32)).ok_or_else(|| l1.err(21, 32, "epoch day"))?;
    let epoch = epoch_from_units(yy, units)?;
    let mean_motion_dot = l1.float(34, 43, "mean motion derivative")?;
    let mean_motion_ddot = l1.packed_exp(45, 52, "mean motion second derivative")?;
    let bstar = l1.packed_exp(54, 61, "drag term")?;
    let ephemeris_type = line1.as_bytes()[62] as char;
    let element_set_number = l1.uint_or_blank(65, 68, "element set number")?;

    let inclination = l2.float(9, 16, "inclination")?;
    let inclination = l2.bounded(9, 16, "inclination", inclination, (0.0..=180.0).contains(&inclination))?;
    let raan = l2.float(18, 25, "right ascension")?;
    let raan = l2.bounded(18, 25, "right ascension", raan, (0.0..360.0).contains(&raan))?;
    let ecc_text = l2.span(27, 33);
    if !ecc_text.bytes().all(|b| b.is_ascii_digit() || b == b' ') || ecc_text.trim().is_empty() {
        return Err(l2.err(27, 33, "eccentricity"));
    }
    let eccentricity: f64 = format!("0.{}", ecc_text.replace(' ', "0"))
        .parse()
        .map_err(|_| l2.err(27, 33, "eccentricity"))?;
    let arg_perigee = l2.float(35, 42, "argument of perigee")?;
    let arg_perigee = l2.bounded(35, 42, "argument of perigee", arg_perigee, (0.0..360.0).contains(&arg_perigee))?;
    let mean_anomaly = l2.float(44, 51, "mean anomaly")?;
    let mean_anomaly = l2.bounded(44, 51, "mean anomaly", mean_anomaly, (0.0..360.0).contains(&mean_anomaly))?;
    let mean_motion = l2.float(53, 63, "mean motion")?;
    let mean_motion = l2.bounded(53, 63, "mean motion", mean_motion, mean_motion > 0.0)?;
    let rev_number = l2.uint_or_blank(64, 68, "revolution number")?;

    Ok(TleRecord {
        norad_id: id1,
        name: None,
        classification,
        intl_designator,
        epoch,
        mean_motion_dot,
        mean_motion_ddot,
        bstar,
        ephemeris_type,
        element_set_number,
        elements: OrbitalElements {
            mean_motion,
            eccentricity,
            inclination,
            raan,
            arg_perigee,
            mean_anomaly,
        },
        rev_number,
        checksum_valid: (l1.verify_checksum(), l2.verify_checksum()),
    })
}

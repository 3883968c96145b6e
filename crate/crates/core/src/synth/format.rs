//! TLE text formatter, written independently of the parser so each can
//! check the other.

use chrono::{DateTime, Datelike, TimeZone, Utc};

use crate::error::{Error, Result};
use crate::tle::{PackedExp, TleRecord};

fn line_checksum(body: &str) -> u32 {
    body.bytes().fold(0u32, |acc, b| {
        acc + if b.is_ascii_digit() {
            (b - b'0') as u32
        } else if b == b'-' {
            1
        } else {
            0
        }
    }) % 10
}

fn with_checksum(body: String) -> String {
    debug_assert_eq!(body.len(), 68, "{body:?}");
    let c = line_checksum(&body);
    format!("{body}{c}")
}

fn unrepresentable(what: &str, value: impl std::fmt::Display) -> Error {
    Error::invalid(format!("{what} = {value} cannot be written in TLE columns"))
}

/// `YYDDD.DDDDDDDD` for an epoch, rounded to 1e-8 day.
fn epoch_field(epoch: DateTime<Utc>) -> Result<String> {
    let year = epoch.year();
    if !(1957..=2056).contains(&year) {
        return Err(unrepresentable("epoch year", year));
    }
    let jan1 = Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0).unwrap();
    let nanos = (epoch - jan1).num_nanoseconds().ok_or_else(|| unrepresentable("epoch", epoch))?;
    // 1e-8 day = 864 µs
    let units = (nanos as f64 / 864_000.0).round() as i64;
    let day = 1 + units / 100_000_000;
    let frac = units % 100_000_000;
    Ok(format!("{:02}{:03}.{:08}", year % 100, day, frac))
}

/// `±.dddddddd`
fn derivative_field(v: f64) -> Result<String> {
    let units = (v.abs() * 1e8).round() as i64;
    if !v.is_finite() || units >= 100_000_000 {
        return Err(unrepresentable("mean motion derivative", v));
    }
    let sign = if v < 0.0 { '-' } else { ' ' };
    Ok(format!("{sign}.{units:08}"))
}

/// `±ddddd±e`, zero exponent written as `-0`.
fn packed_field(p: PackedExp, what: &str) -> Result<String> {
    if p.mantissa.abs() > 99_999 || !(-9..=9).contains(&p.exponent) {
        return Err(unrepresentable(what, format!("{p:?}")));
    }
    let sign = if p.mantissa < 0 { '-' } else { ' ' };
    let exp_sign = if p.exponent > 0 { '+' } else { '-' };
    Ok(format!("{sign}{:05}{exp_sign}{}", p.mantissa.abs(), p.exponent.abs()))
}

fn angle_field(v: f64, max: f64, what: &str) -> Result<String> {
    let s = format!("{v:8.4}");
    if !v.is_finite() || v < 0.0 || v > max || s.len() != 8 {
        return Err(unrepresentable(what, v));
    }
    Ok(s)
}

/// Formats a record as two 69-character lines with checksums.
pub fn format_tle(r: &TleRecord) -> Result<(String, String)> {
    if r.norad_id > 99_999 {
        return Err(unrepresentable("catalog number", r.norad_id));
    }
    if r.intl_designator.len() > 8 || !r.intl_designator.is_ascii() {
        return Err(unrepresentable("international designator", &r.intl_designator));
    }
    if !r.classification.is_ascii_graphic() || !r.ephemeris_type.is_ascii_graphic() {
        return Err(unrepresentable("classification/ephemeris type", format!("{:?}", (r.classification, r.ephemeris_type))));
    }
    if r.element_set_number > 9_999 {
        return Err(unrepresentable("element set number", r.element_set_number));
    }
    if r.rev_number > 99_999 {
        return Err(unrepresentable("revolution number", r.rev_number));
    }
    let e = &r.elements;
    let ecc_units = (e.eccentricity * 1e7).round() as i64;
    if !(0.0..1.0).contains(&e.eccentricity) || ecc_units >= 10_000_000 {
        return Err(unrepresentable("eccentricity", e.eccentricity));
    }
    let mm = format!("{:11.8}", e.mean_motion);
    if !(e.mean_motion > 0.0) || mm.len() != 11 {
        return Err(unrepresentable("mean motion", e.mean_motion));
    }

    let line1 = format!(
        "1 {:05}{} {:<8} {} {} {} {} {} {:>4}",
        r.norad_id,
        r.classification,
        r.intl_designator,
        epoch_field(r.epoch)?,
        derivative_field(r.mean_motion_dot)?,
        packed_field(r.mean_motion_ddot, "second derivative")?,
        packed_field(r.bstar, "drag term")?,
        r.ephemeris_type,
        r.element_set_number,
    );
    let line2 = format!(
        "2 {:05} {} {} {:07} {} {} {}{:>5}",
        r.norad_id,
        angle_field(e.inclination, 180.0, "inclination")?,
        angle_field(e.raan, 359.99995, "right ascension")?,
        ecc_units,
        angle_field(e.arg_perigee, 359.99995, "argument of perigee")?,
        angle_field(e.mean_anomaly, 359.99995, "mean anomaly")?,
        mm,
        r.rev_number,
    );
    Ok((with_checksum(line1), with_checksum(line2)))
}

/// Three-line text (name line first when present).
pub fn format_tle_text(records: &[TleRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        let (l1, l2) = format_tle(r)?;
        if let Some(name) = &r.name {
            out.push_str("0 ");
            out.push_str(name);
            out.push('\n');
        }
        out.push_str(&l1);
        out.push('\n');
        out.push_str(&l2);
        out.push('\n');
    }
    Ok(out)
}

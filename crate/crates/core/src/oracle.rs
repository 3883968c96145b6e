//! Ground-truth outlier labels from the 1.5×IQR fence rule.

use std::io::Write;

use chrono::{DateTime, SecondsFormat, Utc};
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tle::{Element, SeriesMap};

pub const FENCE_FACTOR: f64 = 1.5;

/// Angular values this close (degrees) to 0/360 are marked in label exports.
pub const NEAR_WRAP_DEGREES: f64 = 5.0;

/// Type-7 (linear interpolation) first and third quartiles.
pub fn quartiles(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 4 {
        return Err(Error::invalid(format!("quartiles need at least 4 values, got {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("quartiles of non-finite values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((type7(&sorted, 0.25), type7(&sorted, 0.75)))
}

fn type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    match sorted.get(lo + 1) {
        Some(&next) if frac > 0.0 => sorted[lo] + frac * (next - sorted[lo]),
        _ => sorted[lo],
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fences {
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Fences {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let (q1, q3) = quartiles(values)?;
        let iqr = q3 - q1;
        Ok(Fences {
            q1,
            q3,
            iqr,
            lower: q1 - FENCE_FACTOR * iqr,
            upper: q3 + FENCE_FACTOR * iqr,
        })
    }

    pub fn is_outlier(&self, v: f64) -> bool {
        v < self.lower || v > self.upper
    }
}

/// `true` where a value lies outside `[q1 - 1.5 iqr, q3 + 1.5 iqr]`.
pub fn iqr_outliers(values: &[f64]) -> Result<Vec<bool>> {
    let fences = Fences::from_values(values)?;
    Ok(values.iter().map(|&v| fences.is_outlier(v)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelTable {
    pub norad_id: u32,
    pub element: Element,
    pub epochs: Vec<DateTime<Utc>>,
    pub values: Vec<f64>,
    pub labels: Vec<bool>,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

impl LabelTable {
    pub fn outlier_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Labels every (object, element) pair on observations inside
/// `[start, end)`. Pairs with fewer than four observations in the window are
/// skipped with a warning.
pub fn label_population(
    series_map: &SeriesMap,
    elements: &[Element],
    window: Option<(DateTime<Utc>, DateTime<Utc>)>,
) -> Vec<LabelTable> {
    let jobs: Vec<(u32, Element)> = series_map
        .keys()
        .flat_map(|&id| elements.iter().map(move |&e| (id, e)))
        .collect();
    let tables: Vec<Option<LabelTable>> = jobs
        .par_iter()
        .map(|&(id, element)| {
            let series = &series_map[&id];
            let obs: Vec<_> = series
                .observations
                .iter()
                .filter(|r| window.is_none_or(|(s, e)| r.epoch >= s && r.epoch < e))
                .collect();
            let values: Vec<f64> = obs.iter().map(|r| r.elements.get(element)).collect();
            match Fences::from_values(&values) {
                Ok(f) => Some(LabelTable {
                    norad_id: id,
                    element,
                    epochs: obs.iter().map(|r| r.epoch).collect(),
                    labels: values.iter().map(|&v| f.is_outlier(v)).collect(),
                    values,
                    q1: f.q1,
                    q3: f.q3,
                    iqr: f.iqr,
                }),
                Err(e) => {
                    warn!("object {id} {element}: skipped labeling ({e})");
                    None
                }
            }
        })
        .collect();
    let tables: Vec<LabelTable> = tables.into_iter().flatten().collect();
    if tables.is_empty() {
        warn!("labeling produced no tables");
    }
    tables
}

fn near_wrap(element: Element, v: f64) -> bool {
    element.is_angular() && (v < NEAR_WRAP_DEGREES || v > 360.0 - NEAR_WRAP_DEGREES)
}

/// Writes `norad_id,element,epoch,value,is_outlier,near_wrap` rows.
pub fn write_labels_csv<W: Write>(tables: &[LabelTable], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["norad_id", "element", "epoch", "value", "is_outlier", "near_wrap"])?;
    for t in tables {
        for ((epoch, value), label) in t.epochs.iter().zip(&t.values).zip(&t.labels) {
            w.write_record([
                t.norad_id.to_string(),
                t.element.name().to_string(),
                epoch.to_rfc3339_opts(SecondsFormat::Micros, true),
                value.to_string(),
                u8::from(*label).to_string(),
                u8::from(near_wrap(t.element, *value)).to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("labels csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartile_examples() {
        assert_eq!(quartiles(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), (2.0, 4.0));
        // h = 0.75 -> 1 + 0.75; h = 2.25 -> 3 + 0.25
        assert_eq!(quartiles(&[4.0, 1.0, 3.0, 2.0]).unwrap(), (1.75, 3.25));
        assert_eq!(quartiles(&[7.5; 9]).unwrap(), (7.5, 7.5));
        assert!(quartiles(&[1.0, 2.0, 3.0]).is_err());
        assert!(quartiles(&[1.0, 2.0, f64::NAN, 4.0]).is_err());
    }

    #[test]
    fn outlier_examples() {
        let f = Fences::from_values(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!((f.lower, f.upper), (-1.0, 7.0));
        assert_eq!(
            iqr_outliers(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap(),
            vec![false, false, false, false, true]
        );
        assert!(iqr_outliers(&[3.0; 20]).unwrap().iter().all(|&b| !b));
    }

    #[test]
    fn near_wrap_flag() {
        assert!(near_wrap(Element::Raan, 359.0));
        assert!(near_wrap(Element::MeanAnomaly, 1.0));
        assert!(!near_wrap(Element::Inclination, 1.0));
        assert!(!near_wrap(Element::Raan, 180.0));
    }
}

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};

use super::window::PeriodWindow;
use crate::catalog::MissionClass;
use crate::error::{Error, Result};
use crate::nn::AnomalyVerdict;
use crate::tle::{Element, EphemerisSeries};

/// Flagged observations over observations inside the window.
pub fn anomaly_rate<'a>(verdicts: impl IntoIterator<Item = &'a AnomalyVerdict>, window: &PeriodWindow) -> Result<f64> {
    let (flagged, total) = verdicts
        .into_iter()
        .filter(|v| window.contains(v.epoch))
        .fold((0u64, 0u64), |(f, t), v| (f + v.any_flag as u64, t + 1));
    if total == 0 {
        return Err(Error::invalid(format!("no scored observations in window {:?}", window.name)));
    }
    Ok(flagged as f64 / total as f64)
}

/// `(new - old) / |old| · 100`, `None` when `old` is zero.
pub fn percent_change(old: f64, new: f64) -> Option<f64> {
    if old == 0.0 {
        None
    } else {
        Some((new - old) / old.abs() * 100.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyRow {
    pub group: String,
    /// `YYYY-MM`, UTC.
    pub month: String,
    pub count: u64,
    pub change: Option<i64>,
    pub percent_change: Option<f64>,
    /// Count exceeds the group's mean monthly count.
    pub above_mean: bool,
}

fn month_index(t: DateTime<Utc>) -> i32 {
    t.year() * 12 + t.month0() as i32
}

fn month_label(idx: i32) -> String {
    format!("{:04}-{:02}", idx.div_euclid(12), idx.rem_euclid(12) + 1)
}

/// Calendar-month anomaly counts per group, gap months filled with zero,
/// from the group's first to last anomalous month.
pub fn monthly_counts<'a>(items: impl IntoIterator<Item = (DateTime<Utc>, &'a str, bool)>) -> Vec<MonthlyRow> {
    let mut buckets: BTreeMap<&str, BTreeMap<i32, u64>> = BTreeMap::new();
    for (epoch, group, flagged) in items {
        if flagged {
            *buckets.entry(group).or_default().entry(month_index(epoch)).or_default() += 1;
        }
    }
    let mut rows = Vec::new();
    for (group, months) in buckets {
        let (first, last) = (*months.keys().next().unwrap(), *months.keys().last().unwrap());
        let counts: Vec<(i32, u64)> = (first..=last).map(|m| (m, months.get(&m).copied().unwrap_or(0))).collect();
        let mean = counts.iter().map(|c| c.1 as f64).sum::<f64>() / counts.len() as f64;
        let mut prev: Option<u64> = None;
        for (m, count) in counts {
            rows.push(MonthlyRow {
                group: group.to_string(),
                month: month_label(m),
                count,
                change: prev.map(|p| count as i64 - p as i64),
                percent_change: prev.and_then(|p| percent_change(p as f64, count as f64)),
                above_mean: count as f64 > mean,
            });
            prev = Some(count);
        }
    }
    rows
}

/// Shortest signed angular difference, in (-180, 180].
pub fn wrap_delta(d: f64) -> f64 {
    let w = (d + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

pub fn diff_values(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::invalid("differencing needs at least two values"));
    }
    Ok(values.windows(2).map(|w| w[1] - w[0]).collect())
}

/// `X_T − X_{T−1}` for one observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffRow {
    pub epoch: DateTime<Utc>,
    pub raw: [f64; 6],
    /// Equal to `raw` except for angular elements, which take the shortest
    /// signed difference.
    pub wrapped: [f64; 6],
}

pub fn diff_series(series: &EphemerisSeries) -> Result<Vec<DiffRow>> {
    if series.len() < 2 {
        return Err(Error::invalid(format!("series {} has fewer than two observations", series.norad_id)));
    }
    Ok(series
        .observations
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].elements.to_array(), w[1].elements.to_array());
            let raw: [f64; 6] = std::array::from_fn(|j| b[j] - a[j]);
            let wrapped = std::array::from_fn(|j| if Element::ALL[j].is_angular() { wrap_delta(raw[j]) } else { raw[j] });
            DiffRow {
                epoch: w[1].epoch,
                raw,
                wrapped,
            }
        })
        .collect())
}

pub const MIN_CORRELATION_SAMPLES: usize = 3;

/// Pearson correlation; `None` below three pairs or with a constant side.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n != y.len() || n < MIN_CORRELATION_SAMPLES {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub type CorrelationMatrix = [[Option<f64>; 6]; 6];

/// Symmetric 6×6 Pearson matrix. The diagonal is exactly 1 when there are
/// enough samples.
pub fn correlation_matrix(rows: &[[f64; 6]]) -> CorrelationMatrix {
    let cols: Vec<Vec<f64>> = (0..6).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let mut m = [[None; 6]; 6];
    for i in 0..6 {
        if rows.len() >= MIN_CORRELATION_SAMPLES {
            m[i][i] = Some(1.0);
        }
        for j in i + 1..6 {
            let r = pearson(&cols[i], &cols[j]);
            m[i][j] = r;
            m[j][i] = r;
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Regime {
    Leo,
    Meo,
    Geo,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Leo => "LEO",
            Regime::Meo => "MEO",
            Regime::Geo => "GEO",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimeThresholds {
    /// rev/day
    pub geo_mean_motion: f64,
    pub geo_tolerance: f64,
    pub leo_min_mean_motion: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        RegimeThresholds {
            geo_mean_motion: 1.0027,
            geo_tolerance: 0.01,
            leo_min_mean_motion: 11.25,
        }
    }
}

impl RegimeThresholds {
    pub fn classify(&self, mean_motion: f64) -> Result<Regime> {
        if !(mean_motion > 0.0 && mean_motion.is_finite()) {
            return Err(Error::invalid(format!("mean motion {mean_motion} must be positive")));
        }
        Ok(if (mean_motion - self.geo_mean_motion).abs() <= self.geo_tolerance {
            Regime::Geo
        } else if mean_motion >= self.leo_min_mean_motion {
            Regime::Leo
        } else {
            Regime::Meo
        })
    }
}

pub fn regime_of(mean_motion: f64) -> Result<Regime> {
    RegimeThresholds::default().classify(mean_motion)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationGroup {
    pub mission: MissionClass,
    pub regime: Regime,
    pub samples: usize,
    pub matrix: CorrelationMatrix,
}

/// One matrix per (mission, regime) group.
pub fn element_correlations(rows: impl IntoIterator<Item = (MissionClass, Regime, [f64; 6])>) -> Vec<CorrelationGroup> {
    let mut groups: BTreeMap<(MissionClass, Regime), Vec<[f64; 6]>> = BTreeMap::new();
    for (m, r, x) in rows {
        groups.entry((m, r)).or_default().push(x);
    }
    groups
        .into_iter()
        .map(|((mission, regime), data)| CorrelationGroup {
            mission,
            regime,
            samples: data.len(),
            matrix: correlation_matrix(&data),
        })
        .collect()
}

pub fn is_communications(m: MissionClass) -> bool {
    m.label().contains("communications")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionShare {
    pub mission: MissionClass,
    pub count: u64,
    pub pct_of_all: f64,
    /// Share within the family selected by the filter.
    pub pct_of_family: f64,
}

/// Counts per mission class restricted to a family, with shares of the
/// whole population and of the family.
pub fn mission_distribution(counts: &BTreeMap<MissionClass, u64>, family: impl Fn(MissionClass) -> bool) -> Vec<MissionShare> {
    let all: u64 = counts.values().sum();
    let fam: u64 = counts.iter().filter(|(m, _)| family(**m)).map(|(_, c)| c).sum();
    let share = |c: u64, d: u64| if d == 0 { 0.0 } else { c as f64 / d as f64 * 100.0 };
    let mut rows: Vec<MissionShare> = counts
        .iter()
        .filter(|(m, _)| family(**m))
        .map(|(&mission, &count)| MissionShare {
            mission,
            count,
            pct_of_all: share(count, all),
            pct_of_family: share(count, fam),
        })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then(a.mission.cmp(&b.mission)));
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementChange {
    pub mission: MissionClass,
    pub baseline_n: usize,
    pub leadup_n: usize,
    pub baseline_mean: [Option<f64>; 6],
    pub leadup_mean: [Option<f64>; 6],
    pub percent_change: [Option<f64>; 6],
}

/// Percent change of per-element means between two periods, per mission
/// class. Rows are `(mission, epoch, values)`.
pub fn element_mean_change(
    rows: impl IntoIterator<Item = (MissionClass, DateTime<Utc>, [f64; 6])>,
    baseline: &PeriodWindow,
    leadup: &PeriodWindow,
) -> Vec<ElementChange> {
    #[derive(Default)]
    struct Acc {
        sum: [[f64; 6]; 2],
        n: [usize; 2],
    }
    let mut groups: BTreeMap<MissionClass, Acc> = BTreeMap::new();
    for (m, t, x) in rows {
        let slot = if baseline.contains(t) {
            0
        } else if leadup.contains(t) {
            1
        } else {
            continue;
        };
        let acc = groups.entry(m).or_default();
        acc.n[slot] += 1;
        for j in 0..6 {
            acc.sum[slot][j] += x[j];
        }
    }
    groups
        .into_iter()
        .map(|(mission, acc)| {
            let mean = |s: usize| -> [Option<f64>; 6] {
                std::array::from_fn(|j| (acc.n[s] > 0).then(|| acc.sum[s][j] / acc.n[s] as f64))
            };
            let (b, l) = (mean(0), mean(1));
            ElementChange {
                mission,
                baseline_n: acc.n[0],
                leadup_n: acc.n[1],
                baseline_mean: b,
                leadup_mean: l,
                percent_change: std::array::from_fn(|j| match (b[j], l[j]) {
                    (Some(o), Some(n)) => percent_change(o, n),
                    _ => None,
                }),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t(y: i32, m: u32, d: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap()
    }

    #[test]
    fn monthly_single_anomaly() {
        let rows = monthly_counts([(t(2021, 9, 3), "all", true), (t(2021, 9, 4), "all", false)]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].month, "2021-09");
        assert_eq!(rows[0].count, 1);
        assert_eq!(rows[0].change, None);
    }

    #[test]
    fn monthly_percent_change_and_gaps() {
        let mut items = vec![(t(2021, 8, 1), "all", true); 671];
        items.extend(vec![(t(2021, 9, 1), "all", true); 4297]);
        items.push((t(2021, 11, 1), "all", true));
        let rows = monthly_counts(items);
        assert_eq!(rows.len(), 4);
        let pc = rows[1].percent_change.unwrap();
        assert!((pc - 540.387).abs() < 1e-3, "{pc}");
        assert_eq!(rows[2].count, 0);
        assert_eq!(rows[3].percent_change, None);
        assert!(rows[1].above_mean && !rows[0].above_mean);
    }

    #[test]
    fn diffs() {
        assert_eq!(diff_values(&[1.0, 3.0, 2.0]).unwrap(), vec![2.0, -1.0]);
        assert!(diff_values(&[1.0]).is_err());
        assert_eq!(wrap_delta(1.0 - 359.0), 2.0);
        assert_eq!(wrap_delta(359.0 - 1.0), -2.0);
        assert_eq!(wrap_delta(180.0), 180.0);
    }

    #[test]
    fn regimes() {
        assert_eq!(regime_of(15.5).unwrap(), Regime::Leo);
        assert_eq!(regime_of(1.0027).unwrap(), Regime::Geo);
        assert_eq!(regime_of(2.0).unwrap(), Regime::Meo);
        assert!(regime_of(0.0).is_err());
    }

    #[test]
    fn pearson_extremes() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 1.5).collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&x[..2], &x[..2]), None);
    }

    #[test]
    fn anomaly_rate_counts_any_flag() {
        let w = PeriodWindow::new("w", t(2021, 1, 1), t(2022, 1, 1)).unwrap();
        let v = |epoch, any_flag| AnomalyVerdict {
            epoch,
            errors: [0.0; 6],
            flags: [any_flag, false, false, false, false, false],
            latent_knn_distance: 0.0,
            any_flag,
        };
        let vs = [v(t(2021, 2, 1), false), v(t(2021, 3, 1), true), v(t(2023, 1, 1), true)];
        assert_eq!(anomaly_rate(&vs, &w).unwrap(), 0.5);
        assert_eq!(anomaly_rate(&vs[..1], &w).unwrap(), 0.0);
        assert!(anomaly_rate(&vs[2..], &w).is_err());
    }

    #[test]
    fn mission_shares() {
        let counts: BTreeMap<MissionClass, u64> = [
            (MissionClass::Communications, 90),
            (MissionClass::CommunicationsOther, 10),
            (MissionClass::EarthScience, 100),
        ]
        .into_iter()
        .collect();
        let rows = mission_distribution(&counts, is_communications);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].pct_of_family, 90.0);
        assert_eq!(rows[0].pct_of_all, 45.0);
    }
}

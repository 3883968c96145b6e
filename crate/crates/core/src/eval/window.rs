use chrono::{DateTime, Months, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named half-open time range `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodWindow {
    pub name: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

fn utc(y: i32, m: u32, d: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap()
}

impl PeriodWindow {
    pub fn new(name: impl Into<String>, start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self> {
        let w = PeriodWindow {
            name: name.into(),
            start,
            end,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.start >= self.end {
            return Err(Error::Config(format!(
                "window {:?}: start {} is not before end {}",
                self.name, self.start, self.end
            )));
        }
        Ok(())
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        t >= self.start && t < self.end
    }

    pub fn overlaps(&self, other: &PeriodWindow) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// The `years`-long window ending at `end`.
    pub fn trailing_years(end: DateTime<Utc>, years: u32) -> Result<Self> {
        let start = end
            .checked_sub_months(Months::new(12 * years))
            .ok_or_else(|| Error::Config(format!("cannot step {years} years back from {end}")))?;
        PeriodWindow::new(format!("{years}y"), start, end)
    }

    /// The study's standard periods: five-year and four-year training
    /// spans, the six-month hypothesis baseline, the six-month lead-up to
    /// 2022-02-24 and the two years after it.
    pub fn standard() -> Vec<PeriodWindow> {
        vec![
            PeriodWindow::new("train", utc(2016, 8, 24), utc(2021, 8, 24)).unwrap(),
            PeriodWindow::new("train4y", utc(2017, 8, 24), utc(2021, 8, 24)).unwrap(),
            PeriodWindow::new("baseline", utc(2021, 2, 24), utc(2021, 8, 24)).unwrap(),
            PeriodWindow::new("leadup", utc(2021, 8, 24), utc(2022, 2, 24)).unwrap(),
            PeriodWindow::new("post", utc(2022, 2, 24), utc(2024, 2, 24)).unwrap(),
        ]
    }

    pub fn named(name: &str) -> Option<PeriodWindow> {
        Self::standard().into_iter().find(|w| w.name == name)
    }
}

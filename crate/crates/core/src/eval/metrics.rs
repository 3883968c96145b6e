use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label-vs-flag tallies over (observation, element) pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn record(&mut self, label: bool, flag: bool) {
        match (label, flag) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    /// `2tp / (2tp + fp + fn)`, zero when nothing is positive.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / total as f64
        }
    }

    pub fn precision(&self) -> f64 {
        let d = self.tp + self.fp;
        if d == 0 {
            0.0
        } else {
            self.tp as f64 / d as f64
        }
    }

    pub fn recall(&self) -> f64 {
        let d = self.tp + self.fn_;
        if d == 0 {
            0.0
        } else {
            self.tp as f64 / d as f64
        }
    }
}

impl std::ops::AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), |mut a, b| {
            a += b;
            a
        })
    }
}

pub fn confusion(labels: &[bool], flags: &[bool]) -> Result<ConfusionCounts> {
    if labels.len() != flags.len() {
        return Err(Error::Shape {
            expected: format!("{} flags", labels.len()),
            got: flags.len().to_string(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&l, &f) in labels.iter().zip(flags) {
        c.record(l, f);
    }
    Ok(c)
}

/// Element-wise tallies over aligned per-observation rows.
pub fn confusion_rows(labels: &[[bool; 6]], flags: &[[bool; 6]]) -> Result<ConfusionCounts> {
    if labels.len() != flags.len() {
        return Err(Error::Shape {
            expected: format!("{} rows", labels.len()),
            got: flags.len().to_string(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (l, f) in labels.iter().zip(flags) {
        for j in 0..6 {
            c.record(l[j], f[j]);
        }
    }
    Ok(c)
}

pub fn f1(counts: &ConfusionCounts) -> f64 {
    counts.f1()
}

pub fn accuracy(counts: &ConfusionCounts) -> f64 {
    counts.accuracy()
}

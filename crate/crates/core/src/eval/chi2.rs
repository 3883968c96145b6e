use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodCounts {
    pub anomalies: u64,
    pub total: u64,
}

/// Anomalous vs normal observation counts for two periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable2x2 {
    pub first: PeriodCounts,
    pub second: PeriodCounts,
}

impl ContingencyTable2x2 {
    pub fn new(first: PeriodCounts, second: PeriodCounts) -> Result<Self> {
        let t = ContingencyTable2x2 { first, second };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for p in [self.first, self.second] {
            if p.anomalies > p.total {
                return Err(Error::invalid(format!("{} anomalies exceed {} observations", p.anomalies, p.total)));
            }
        }
        Ok(())
    }

    /// Rows are periods, columns are (anomalous, normal).
    pub fn cells(&self) -> [[f64; 2]; 2] {
        let row = |p: PeriodCounts| [p.anomalies as f64, (p.total - p.anomalies) as f64];
        [row(self.first), row(self.second)]
    }

    pub fn rate(&self) -> (f64, f64) {
        let r = |p: PeriodCounts| if p.total == 0 { 0.0 } else { p.anomalies as f64 / p.total as f64 };
        (r(self.first), r(self.second))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    /// Yates-corrected statistic.
    pub statistic: f64,
    pub uncorrected: f64,
    pub dof: u32,
    pub p_value: f64,
    /// Natural log of the p-value; finite even when `p_value` underflows.
    pub ln_p_value: f64,
}

impl ChiSquareResult {
    pub fn p_display(&self) -> String {
        if self.p_value < 0.001 {
            "< 0.001".into()
        } else {
            format!("{:.4}", self.p_value)
        }
    }
}

/// Pearson chi-square test of independence on a 2×2 table with the Yates
/// continuity correction.
pub fn chi_square_2x2(table: &ContingencyTable2x2) -> Result<ChiSquareResult> {
    table.validate()?;
    let o = table.cells();
    let rows = [o[0][0] + o[0][1], o[1][0] + o[1][1]];
    let cols = [o[0][0] + o[1][0], o[0][1] + o[1][1]];
    let n = rows[0] + rows[1];
    if rows.iter().chain(cols.iter()).any(|&m| m == 0.0) {
        return Err(Error::invalid("contingency table has a zero marginal"));
    }
    let mut corrected = 0.0;
    let mut plain = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let e = rows[i] * cols[j] / n;
            let d = (o[i][j] - e).abs();
            plain += d * d / e;
            let dy = (d - 0.5).max(0.0);
            corrected += dy * dy / e;
        }
    }
    let ln_p = ln_chi2_sf(corrected, 1);
    Ok(ChiSquareResult {
        statistic: corrected,
        uncorrected: plain,
        dof: 1,
        p_value: ln_p.exp(),
        ln_p_value: ln_p,
    })
}

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0 (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + 7.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;

/// Series for the lower regularized gamma P(a, x), valid for x < a + 1.
fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    for n in 1..MAX_ITER {
        term *= x / (a + n as f64);
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

/// ln Q(a, x) by Lentz's continued fraction, valid for x ≥ a + 1.
fn ln_gamma_q_cf(a: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    -x + a * x.ln() - ln_gamma(a) + h.ln()
}

/// Regularized upper incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    ln_gamma_q(a, x).exp()
}

fn ln_gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        (1.0 - gamma_p_series(a, x)).ln()
    } else {
        ln_gamma_q_cf(a, x)
    }
}

/// Chi-square survival function.
pub fn chi2_sf(x: f64, dof: u32) -> f64 {
    ln_chi2_sf(x, dof).exp()
}

fn ln_chi2_sf(x: f64, dof: u32) -> f64 {
    ln_gamma_q(dof as f64 / 2.0, x / 2.0)
}

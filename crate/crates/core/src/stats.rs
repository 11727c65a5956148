//! One-tailed two-sample t-tests and the Student-t CDF.
//!
//! The alternative hypothesis is always `mean(b) > mean(a)`, with `a` the
//! baseline accuracies and `b` the relation-trained ones.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which t-test variant to run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    /// Unequal variances, Welch–Satterthwaite degrees of freedom.
    #[default]
    Welch,
    /// Student's equal-variance test.
    Pooled,
    /// Paired test on `b[i] - a[i]`.
    Paired,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_stat: f64,
    pub dof: f64,
    /// One-tailed `P(T >= t)`.
    pub p_value: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub n_a: usize,
    pub n_b: usize,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (two-pass).
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

fn require_len(xs: &[f64], what: &str) -> Result<()> {
    if xs.len() < 2 {
        return Err(Error::Size {
            requested: 2,
            available: xs.len(),
        });
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{what} contains non-finite values"
        )));
    }
    Ok(())
}

fn finish(t_stat: f64, dof: f64, a: &[f64], b: &[f64]) -> Result<TTestResult> {
    let p_value = if t_stat.is_infinite() {
        if t_stat > 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        (1.0 - t_cdf(t_stat, dof)?).clamp(0.0, 1.0)
    };
    Ok(TTestResult {
        t_stat,
        dof,
        p_value,
        mean_a: mean(a),
        mean_b: mean(b),
        n_a: a.len(),
        n_b: b.len(),
    })
}

/// Ratio `diff / se`; zero spread is only allowed when the means differ.
fn ratio(diff: f64, se: f64) -> Result<f64> {
    if se > 0.0 {
        Ok(diff / se)
    } else if diff != 0.0 {
        Ok(diff.signum() * f64::INFINITY)
    } else {
        Err(Error::Degenerate(
            "both samples have zero variance and equal means".into(),
        ))
    }
}

/// One-tailed Welch test of `mean(b) > mean(a)`.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    require_len(a, "sample a")?;
    require_len(b, "sample b")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a) / na, variance(b) / nb);
    let t = ratio(mean(b) - mean(a), (va + vb).sqrt())?;
    let dof = if va + vb > 0.0 {
        (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0))
    } else {
        na + nb - 2.0
    };
    finish(t, dof, a, b)
}

/// One-tailed Student test with pooled variance.
pub fn pooled_t(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    require_len(a, "sample a")?;
    require_len(b, "sample b")?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let dof = na + nb - 2.0;
    let pooled = ((na - 1.0) * variance(a) + (nb - 1.0) * variance(b)) / dof;
    let t = ratio(mean(b) - mean(a), (pooled * (1.0 / na + 1.0 / nb)).sqrt())?;
    finish(t, dof, a, b)
}

/// One-tailed paired test on `b[i] - a[i]`.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    require_len(a, "sample a")?;
    require_len(b, "sample b")?;
    if a.len() != b.len() {
        return Err(Error::InvalidParameter(format!(
            "paired test needs equal lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let n = diffs.len() as f64;
    let t = ratio(mean(&diffs), (variance(&diffs) / n).sqrt())?;
    finish(t, n - 1.0, a, b)
}

pub fn t_test(kind: TestKind, a: &[f64], b: &[f64]) -> Result<TTestResult> {
    match kind {
        TestKind::Welch => welch_t(a, b),
        TestKind::Pooled => pooled_t(a, b),
        TestKind::Paired => paired_t(a, b),
    }
}

const LANCZOS_G: f64 = 7.0;
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

/// `ln Γ(z)` for `z > 0` (Lanczos, g = 7).
pub fn ln_gamma(z: f64) -> f64 {
    if z < 0.5 {
        // Reflection: Γ(z) Γ(1 - z) = π / sin(πz).
        return (PI / (PI * z).sin()).ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut acc = LANCZOS[0];
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=1000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularised incomplete beta `I_x(a, b)`.
pub fn inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b));
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

/// Student-t cumulative distribution function.
pub fn t_cdf(x: f64, dof: f64) -> Result<f64> {
    if dof.is_nan() || dof <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "degrees of freedom must be positive, got {dof}"
        )));
    }
    if x.is_nan() {
        return Err(Error::InvalidParameter("t statistic is NaN".into()));
    }
    if x == 0.0 {
        return Ok(0.5);
    }
    let x2 = x * x;
    // Upper tail P(T > |x|), evaluated on whichever side avoids cancellation.
    let tail = if x2 < dof {
        0.5 * (1.0 - inc_beta(x2 / (dof + x2), 0.5, 0.5 * dof))
    } else {
        0.5 * inc_beta(dof / (dof + x2), 0.5 * dof, 0.5)
    };
    Ok(if x > 0.0 { 1.0 - tail } else { tail })
}

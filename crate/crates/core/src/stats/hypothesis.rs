//! McNemar, Pearson and Welch tests plus the tail probabilities they use.
//!
//! Normal tails come from `libm::erfc` and Student t tails from the
//! regularized incomplete beta function in `statrs`.

use statrs::function::beta::beta_reg;
use libm::erfc;

use crate::error::{Error, Result};
use crate::stats::{ScoredSample, TestResult, NEGATIVE, POSITIVE};

/// Below this many discordant pairs McNemar uses the exact binomial tail.
const MCNEMAR_EXACT_LIMIT: usize = 25;

/// `P(|Z| >= |z|)` for a standard normal `Z`.
pub fn two_sided_normal_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom, using
/// `P = I_{df/(df+t²)}(df/2, 1/2)`.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Paired comparison of two classifiers' per-subject correctness.
/// `b` counts subjects only A got right, `c` those only B got right.
pub fn mcnemar_test(correct_a: &[bool], correct_b: &[bool]) -> Result<TestResult> {
    if correct_a.len() != correct_b.len() {
        return Err(Error::Stats(format!(
            "correctness vectors differ in length ({} vs {})",
            correct_a.len(),
            correct_b.len()
        )));
    }
    let b = correct_a.iter().zip(correct_b).filter(|(a, b)| **a && !**b).count();
    let c = correct_a.iter().zip(correct_b).filter(|(a, b)| !**a && **b).count();
    let n = b + c;
    let aux = vec![("b", b as f64), ("c", c as f64)];
    if n < MCNEMAR_EXACT_LIMIT {
        let k = b.min(c) as u64;
        let tail: f64 = (0..=k).map(|i| binomial(n as u64, i)).sum::<f64>() * 0.5f64.powi(n as i32);
        return Ok(TestResult {
            method: "mcnemar_exact",
            statistic: b as f64,
            p_value: (2.0 * tail).min(1.0),
            auxiliary: aux,
        });
    }
    let d = (b as f64 - c as f64).abs() - 1.0;
    let chi2 = d.max(0.0).powi(2) / n as f64;
    Ok(TestResult {
        method: "mcnemar_chi2_cc",
        statistic: chi2,
        p_value: erfc((chi2 / 2.0).sqrt()).clamp(0.0, 1.0),
        auxiliary: aux,
    })
}

/// Correlation coefficient `r` (the statistic) with a two-sided t-test
/// p-value on `n - 2` degrees of freedom. Auxiliary: `n`, `t`.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(Error::Stats(format!("pearson: lengths differ ({} vs {})", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::Stats(format!("pearson needs at least 3 pairs, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Stats("pearson: non-finite input".into()));
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
        return Err(Error::Stats("pearson: an input has zero variance".into()));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let t = if r.abs() == 1.0 {
        f64::INFINITY.copysign(r)
    } else {
        r * (df / (1.0 - r * r)).sqrt()
    };
    Ok(TestResult {
        method: "pearson",
        statistic: r,
        p_value: student_t_two_sided_p(t, df),
        auxiliary: vec![("n", n as f64), ("t", t)],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStats {
    pub label: usize,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub sd: f64,
}

/// Per-label score summaries and Welch's unequal-variance t-test of
/// positive against negative.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub positive: GroupStats,
    pub negative: GroupStats,
    /// Statistic t; auxiliary `df` (Welch–Satterthwaite).
    pub welch: TestResult,
}

fn describe(label: usize, v: &[f64]) -> Result<GroupStats> {
    if v.len() < 2 {
        return Err(Error::Stats(format!("group {label} has {} samples, need at least 2", v.len())));
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(GroupStats {
        label,
        n: v.len(),
        mean,
        sd: var.sqrt(),
    })
}

pub fn group_summary(samples: &[ScoredSample]) -> Result<GroupSummary> {
    crate::stats::check_labels(samples)?;
    let scores = |label: usize| -> Vec<f64> {
        samples.iter().filter(|s| s.true_label == label).map(|s| s.score).collect()
    };
    let positive = describe(POSITIVE, &scores(POSITIVE))?;
    let negative = describe(NEGATIVE, &scores(NEGATIVE))?;
    let a = positive.sd.powi(2) / positive.n as f64;
    let b = negative.sd.powi(2) / negative.n as f64;
    let diff = positive.mean - negative.mean;
    let (t, df) = if a + b == 0.0 {
        let t = if diff == 0.0 { 0.0 } else { f64::INFINITY.copysign(diff) };
        (t, (positive.n + negative.n - 2) as f64)
    } else {
        let df = (a + b).powi(2) / (a * a / (positive.n - 1) as f64 + b * b / (negative.n - 1) as f64);
        (diff / (a + b).sqrt(), df)
    };
    Ok(GroupSummary {
        positive,
        negative,
        welch: TestResult {
            method: "welch_t",
            statistic: t,
            p_value: student_t_two_sided_p(t, df),
            auxiliary: vec![("df", df)],
        },
    })
}

//! Evaluation statistics: confusion metrics, ROC/AUC, DeLong's correlated
//! AUC comparison, McNemar's paired test, Pearson correlation, and group
//! score summaries.
//!
//! Label 0 is the positive class throughout, and a higher score means "more
//! positive". Scores with the opposite orientation (regional FDG uptake, for
//! one) should be passed through [`negate_scores`] first.

mod hypothesis;
mod roc;

use std::fmt;

pub use hypothesis::{
    group_summary, mcnemar_test, pearson, student_t_two_sided_p, two_sided_normal_p, GroupStats, GroupSummary,
};
pub use roc::{delong_test, roc_auc, roc_svg, structural_components, write_roc_csv, RocCurve, RocPoint, StructuralComponents};

use crate::error::{Error, Result};
use crate::preprocess::Subject;

pub const POSITIVE: usize = 0;
pub const NEGATIVE: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub subject_id: String,
    /// 0 positive, 1 negative.
    pub true_label: usize,
    pub score: f64,
    pub predicted_label: usize,
}

/// Outcome of a hypothesis test. `auxiliary` carries named side values such
/// as the two AUCs of a DeLong comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub method: &'static str,
    pub statistic: f64,
    pub p_value: f64,
    pub auxiliary: Vec<(&'static str, f64)>,
}

impl TestResult {
    pub fn aux(&self, name: &str) -> Option<f64> {
        self.auxiliary.iter().find(|(k, _)| *k == name).map(|&(_, v)| v)
    }
}

/// `key = value` lines.
impl fmt::Display for TestResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "method = {}", self.method)?;
        writeln!(f, "statistic = {}", self.statistic)?;
        writeln!(f, "p_value = {}", self.p_value)?;
        for (k, v) in &self.auxiliary {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

pub(crate) fn check_labels(samples: &[ScoredSample]) -> Result<(usize, usize)> {
    let mut counts = [0usize; 2];
    for s in samples {
        if s.true_label > 1 {
            return Err(Error::Stats(format!(
                "subject {}: label {} is not binary",
                s.subject_id, s.true_label
            )));
        }
        if !s.score.is_finite() {
            return Err(Error::Stats(format!("subject {}: score is not finite", s.subject_id)));
        }
        counts[s.true_label] += 1;
    }
    Ok((counts[POSITIVE], counts[NEGATIVE]))
}

pub(crate) fn require_both_classes(samples: &[ScoredSample]) -> Result<(usize, usize)> {
    let (p, n) = check_labels(samples)?;
    if p == 0 || n == 0 {
        return Err(Error::Stats(format!(
            "both classes required ({p} positive, {n} negative)"
        )));
    }
    Ok((p, n))
}

/// Copies with every score negated, for scores where lower means positive.
pub fn negate_scores(samples: &[ScoredSample]) -> Vec<ScoredSample> {
    samples
        .iter()
        .map(|s| ScoredSample {
            score: -s.score,
            ..s.clone()
        })
        .collect()
}

/// Counts of a binary decision against the truth.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
    pub false_positive: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_negative + self.true_negative + self.false_positive
    }

    pub fn sensitivity(&self) -> Result<f64> {
        let p = self.true_positive + self.false_negative;
        if p == 0 {
            return Err(Error::Stats("sensitivity undefined without positive samples".into()));
        }
        Ok(self.true_positive as f64 / p as f64)
    }

    pub fn specificity(&self) -> Result<f64> {
        let n = self.true_negative + self.false_positive;
        if n == 0 {
            return Err(Error::Stats("specificity undefined without negative samples".into()));
        }
        Ok(self.true_negative as f64 / n as f64)
    }

    pub fn accuracy(&self) -> Result<f64> {
        if self.total() == 0 {
            return Err(Error::Stats("accuracy undefined for an empty sample".into()));
        }
        Ok((self.true_positive + self.true_negative) as f64 / self.total() as f64)
    }

    fn record(&mut self, truth: usize, predicted_positive: bool) {
        match (truth == POSITIVE, predicted_positive) {
            (true, true) => self.true_positive += 1,
            (true, false) => self.false_negative += 1,
            (false, false) => self.true_negative += 1,
            (false, true) => self.false_positive += 1,
        }
    }
}

/// Predicts positive iff `score > threshold`.
pub fn confusion_metrics(samples: &[ScoredSample], threshold: f64) -> Result<Confusion> {
    check_labels(samples)?;
    let mut c = Confusion::default();
    for s in samples {
        c.record(s.true_label, s.score > threshold);
    }
    Ok(c)
}

/// Uses each sample's stored `predicted_label`.
pub fn confusion_from_predictions(samples: &[ScoredSample]) -> Result<Confusion> {
    check_labels(samples)?;
    let mut c = Confusion::default();
    for s in samples {
        c.record(s.true_label, s.predicted_label == POSITIVE);
    }
    Ok(c)
}

/// `value(horizon) - value(baseline)` for a horizon of 12 or 36 months, or
/// `None` when either endpoint (or the measure) is missing.
pub fn cognitive_change(subject: &Subject, measure: &str, horizon_months: u32) -> Result<Option<f64>> {
    match subject.cognitive.get(measure) {
        Some(series) => series.change(horizon_months),
        None => Ok(None),
    }
}

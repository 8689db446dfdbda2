//! ROC curves, AUC, and DeLong's test for two correlated AUCs.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::stats::hypothesis::two_sided_normal_p;
use crate::stats::{check_labels, require_both_classes, ScoredSample, TestResult, POSITIVE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Samples scoring at or above this value are called positive. The first
    /// point uses `+inf`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// Sweeps the threshold down through every distinct score. The trapezoid
/// area is accumulated in integer counts and divided once, so it equals the
/// Mann–Whitney pair count (ties as one half) exactly.
pub fn roc_auc(samples: &[ScoredSample]) -> Result<RocCurve> {
    let (pos, neg) = require_both_classes(samples)?;
    let mut order: Vec<&ScoredSample> = samples.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    // Twice the area, in units of one positive-negative pair.
    let mut twice_area: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let t = order[i].score;
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && order[i].score == t {
            if order[i].true_label == POSITIVE {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        twice_area += (fp - fp0) as u128 * (tp + tp0) as u128;
        points.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    let auc = twice_area as f64 / (2 * pos as u128 * neg as u128) as f64;
    Ok(RocCurve { points, auc })
}

/// 1-based ranks with ties sharing their average rank.
fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Per-subject placement values. `v10[i]` is the fraction of negatives that
/// positive `i` outscores (ties as one half), `v01[j]` the fraction of
/// positives that outscore negative `j`; both have mean equal to the AUC.
/// Entries follow the input order within each class.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralComponents {
    pub v10: Vec<f64>,
    pub v01: Vec<f64>,
}

impl StructuralComponents {
    pub fn auc(&self) -> f64 {
        self.v10.iter().sum::<f64>() / self.v10.len() as f64
    }
}

pub fn structural_components(samples: &[ScoredSample]) -> Result<StructuralComponents> {
    let (m, n) = require_both_classes(samples)?;
    let all: Vec<f64> = samples.iter().map(|s| s.score).collect();
    let pos: Vec<f64> = samples.iter().filter(|s| s.true_label == POSITIVE).map(|s| s.score).collect();
    let neg: Vec<f64> = samples.iter().filter(|s| s.true_label != POSITIVE).map(|s| s.score).collect();
    let r_all = midranks(&all);
    let r_pos = midranks(&pos);
    let r_neg = midranks(&neg);
    let (mut v10, mut v01) = (Vec::with_capacity(m), Vec::with_capacity(n));
    let (mut ip, mut ineg) = (0, 0);
    for (k, s) in samples.iter().enumerate() {
        if s.true_label == POSITIVE {
            v10.push((r_all[k] - r_pos[ip]) / n as f64);
            ip += 1;
        } else {
            v01.push(1.0 - (r_all[k] - r_neg[ineg]) / m as f64);
            ineg += 1;
        }
    }
    Ok(StructuralComponents { v10, v01 })
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
}

/// Compares two AUCs measured on the same subjects. Returns z as the
/// statistic; auxiliary values `auc_a`, `auc_b`, `auc_diff`, `variance`.
pub fn delong_test(a: &[ScoredSample], b: &[ScoredSample]) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::Stats(format!("score sets differ in length ({} vs {})", a.len(), b.len())));
    }
    for (x, y) in a.iter().zip(b) {
        if x.subject_id != y.subject_id || x.true_label != y.true_label {
            return Err(Error::Stats(format!(
                "score sets disagree on subject {} / {} or its label",
                x.subject_id, y.subject_id
            )));
        }
    }
    check_labels(b)?;
    let ca = structural_components(a)?;
    let cb = structural_components(b)?;
    let (m, n) = (ca.v10.len(), ca.v01.len());
    if m < 2 || n < 2 {
        return Err(Error::Stats(format!(
            "DeLong test needs at least 2 samples per class ({m} positive, {n} negative)"
        )));
    }
    let s10 = [
        [covariance(&ca.v10, &ca.v10), covariance(&ca.v10, &cb.v10)],
        [covariance(&cb.v10, &ca.v10), covariance(&cb.v10, &cb.v10)],
    ];
    let s01 = [
        [covariance(&ca.v01, &ca.v01), covariance(&ca.v01, &cb.v01)],
        [covariance(&cb.v01, &ca.v01), covariance(&cb.v01, &cb.v01)],
    ];
    let s = |i: usize, j: usize| s10[i][j] / m as f64 + s01[i][j] / n as f64;
    let variance = (s(0, 0) + s(1, 1) - 2.0 * s(0, 1)).max(0.0);
    let (auc_a, auc_b) = (ca.auc(), cb.auc());
    let diff = auc_a - auc_b;
    let z = if diff == 0.0 {
        0.0
    } else if variance == 0.0 {
        f64::INFINITY.copysign(diff)
    } else {
        diff / variance.sqrt()
    };
    Ok(TestResult {
        method: "delong",
        statistic: z,
        p_value: two_sided_normal_p(z),
        auxiliary: vec![
            ("auc_a", auc_a),
            ("auc_b", auc_b),
            ("auc_diff", diff),
            ("variance", variance),
        ],
    })
}

/// CSV with columns `threshold,fpr,tpr`.
pub fn write_roc_csv(path: impl AsRef<Path>, curve: &RocCurve) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in &curve.points {
        w.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Standalone SVG of one or more ROC curves with a legend giving each AUC.
pub fn roc_svg(curves: &[(&str, &RocCurve)]) -> String {
    let (size, margin) = (400.0, 50.0);
    let map = |fpr: f64, tpr: f64| (margin + fpr * size, margin + (1.0 - tpr) * size);
    let total = size + 2.0 * margin;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{margin}" y="{margin}" width="{size}" height="{size}" fill="none" stroke="black"/>"#
    );
    let (x0, y0) = map(0.0, 0.0);
    let (x1, y1) = map(1.0, 1.0);
    let _ = writeln!(
        s,
        r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y1}" stroke="gray" stroke-dasharray="4 4"/>"#
    );
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let (x, _) = map(v, 0.0);
        let (_, y) = map(0.0, v);
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{v}</text>"#, y0 + 16.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v}</text>"#, x0 - 6.0, y + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">1 - specificity</text>"#,
        margin + size / 2.0,
        total - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">sensitivity</text>"#,
        margin + size / 2.0,
        margin + size / 2.0
    );
    for (k, (name, curve)) in curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|p| {
                let (x, y) = map(p.fpr, p.tpr);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        let ly = margin + size - 20.0 - 18.0 * (curves.len() - 1 - k) as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" fill="{color}">{} (AUC {:.3})</text>"#,
            margin + size / 2.0,
            escape(name),
            curve.auc
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

//! Detection and regression scores.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("DegenerateLabels: truth has {positives} positives and {negatives} negatives")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Classification scores. Metrics whose denominator is zero are reported as 0
/// and named in `degenerate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub mcc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

fn ratio(num: f64, den: f64, name: &str, degenerate: &mut Vec<String>) -> f64 {
    if den == 0.0 {
        degenerate.push(name.to_string());
        0.0
    } else {
        num / den
    }
}

pub fn detection_metrics(cm: &ConfusionMatrix) -> DetectionReport {
    let (tp, tn, fp, fn_) = (cm.tp as f64, cm.tn as f64, cm.fp as f64, cm.fn_ as f64);
    let mut deg = Vec::new();
    let precision = ratio(tp, tp + fp, "precision", &mut deg);
    let recall = ratio(tp, tp + fn_, "recall", &mut deg);
    let f1 = ratio(2.0 * precision * recall, precision + recall, "f1", &mut deg);
    let accuracy = ratio(tp + tn, tp + tn + fp + fn_, "accuracy", &mut deg);
    // sorted so the product does not depend on which class is called positive
    let mut factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    factors.sort_by(f64::total_cmp);
    let den = factors.iter().product::<f64>().sqrt();
    let mcc = ratio(tp * tn - fp * fn_, den, "mcc", &mut deg).clamp(-1.0, 1.0);
    DetectionReport {
        precision,
        recall,
        f1,
        accuracy,
        mcc,
        auc: None,
        degenerate: deg,
    }
}

/// Greedy sample matching: each predicted positive, in order, takes the
/// earliest unconsumed truth positive within `±tolerance` samples.
pub fn match_events(predicted: &[bool], truth: &[bool], tolerance: usize) -> Result<ConfusionMatrix, MetricsError> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    let truth_pos: Vec<usize> = (0..truth.len()).filter(|&i| truth[i]).collect();
    let mut next = 0usize;
    let mut tp = 0u64;
    let mut pred_pos = 0u64;
    for (i, _) in predicted.iter().enumerate().filter(|(_, &p)| p) {
        pred_pos += 1;
        while next < truth_pos.len() && truth_pos[next] + tolerance < i {
            next += 1;
        }
        if next < truth_pos.len() && truth_pos[next] <= i + tolerance {
            tp += 1;
            next += 1;
        }
    }
    let fp = pred_pos - tp;
    let fn_ = truth_pos.len() as u64 - tp;
    let tn = (truth.len() as u64).saturating_sub(tp + fp + fn_);
    Ok(ConfusionMatrix { tp, tn, fp, fn_ })
}

/// Mann–Whitney AUC with mid-ranks for ties.
pub fn auc(scores: &[f64], truth: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            left: scores.len(),
            right: truth.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::DegenerateLabels {
            positives: pos,
            negatives: neg,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of mid-ranks over positives, doubled to stay in integers
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid2 = (i + 1 + j + 1) as u128;
        let pos_here = order[i..=j].iter().filter(|&&k| truth[k]).count() as u128;
        rank_sum2 += mid2 * pos_here;
        i = j + 1;
    }
    let (p, n) = (pos as u128, neg as u128);
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub r2: f64,
    pub rmse: f64,
    pub explained_variance: f64,
    pub mae: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

pub fn regression_metrics(y: &[f64], y_hat: &[f64]) -> Result<RegressionReport, MetricsError> {
    if y.len() != y_hat.len() {
        return Err(MetricsError::LengthMismatch {
            left: y.len(),
            right: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if let Some(i) = (0..y.len()).find(|&i| !y[i].is_finite() || !y_hat[i].is_finite()) {
        return Err(MetricsError::NonFinite(i));
    }
    let n = y.len() as f64;
    let mean_y = y.iter().sum::<f64>() / n;
    let res: Vec<f64> = y.iter().zip(y_hat).map(|(a, b)| a - b).collect();
    let mean_res = res.iter().sum::<f64>() / n;
    let ss_res: f64 = res.iter().map(|r| r * r).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - mean_y) * (v - mean_y)).sum();
    let ss_res_c: f64 = res.iter().map(|r| (r - mean_res) * (r - mean_res)).sum();
    let mut deg = Vec::new();
    let (r2, ev) = if ss_tot == 0.0 {
        deg.push("r2".to_string());
        deg.push("explained_variance".to_string());
        (0.0, 0.0)
    } else {
        (1.0 - ss_res / ss_tot, 1.0 - ss_res_c.min(ss_res) / ss_tot)
    };
    Ok(RegressionReport {
        r2,
        rmse: (ss_res / n).sqrt(),
        explained_variance: ev,
        mae: res.iter().map(|r| r.abs()).sum::<f64>() / n,
        degenerate: deg,
    })
}

impl fmt::Display for DetectionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12}{:>10}", "Metric", "Score")?;
        for (name, v) in [
            ("Precision", self.precision),
            ("Recall", self.recall),
            ("MCC", self.mcc),
            ("Accuracy", self.accuracy),
        ] {
            writeln!(f, "{name:<12}{v:>10.3}")?;
        }
        match self.auc {
            Some(a) => writeln!(f, "{:<12}{:>10.3}", "AUC", a)?,
            None => writeln!(f, "{:<12}{:>10}", "AUC", "NA")?,
        }
        writeln!(f, "{:<12}{:>10.3}", "F1", self.f1)?;
        if !self.degenerate.is_empty() {
            writeln!(f, "degenerate: {}", self.degenerate.join(", "))?;
        }
        Ok(())
    }
}

impl fmt::Display for RegressionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<20}{:>10}", "Metric", "Score")?;
        for (name, v) in [
            ("R2", self.r2),
            ("RMSE", self.rmse),
            ("Explained variance", self.explained_variance),
            ("MAE", self.mae),
        ] {
            writeln!(f, "{name:<20}{v:>10.4}")?;
        }
        if !self.degenerate.is_empty() {
            writeln!(f, "degenerate: {}", self.degenerate.join(", "))?;
        }
        Ok(())
    }
}

//! Ranking and confusion metrics.
//!
//! AUC comes in two deliberately independent implementations: a pairwise
//! comparison count and a trapezoidal sweep of the ROC curve. Both keep the
//! numerator in exact integer arithmetic and divide once at the end, so on
//! the same inputs they agree to the last bit. Disagreement means a bug.

use crate::error::{Error, Result};

fn check_binary_inputs(scores: &[f64], positive: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != positive.len() {
        return Err(Error::Metric(format!(
            "{} scores against {} labels",
            scores.len(),
            positive.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("scores contain NaN, ranking undefined".into()));
    }
    let pos = positive.iter().filter(|&&p| p).count();
    let neg = positive.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric(format!(
            "AUC needs both classes, got {pos} positive and {neg} negative"
        )));
    }
    Ok((pos, neg))
}

/// Probability that a random positive outscores a random negative, with
/// half credit for ties. Quadratic in the worse class count; fine at the
/// evaluation sizes this crate sees.
pub fn auc_pairwise(scores: &[f64], positive: &[bool]) -> Result<f64> {
    let (pos, neg) = check_binary_inputs(scores, positive)?;
    // Twice the win count plus the tie count stays an exactly representable
    // integer, matching the sweep implementation bit for bit.
    let mut twice_wins = 0u64;
    for (sp, &lp) in scores.iter().zip(positive) {
        if !lp {
            continue;
        }
        for (sn, &ln) in scores.iter().zip(positive) {
            if ln {
                continue;
            }
            if sp > sn {
                twice_wins += 2;
            } else if sp == sn {
                twice_wins += 1;
            }
        }
    }
    Ok(twice_wins as f64 / (2 * pos * neg) as f64)
}

/// Area under the ROC curve by trapezoidal sweep over descending score
/// thresholds. Tied scores move as one group, which yields the exact
/// half-credit geometry.
pub fn auc_trapezoid(scores: &[f64], positive: &[bool]) -> Result<f64> {
    let (pos, neg) = check_binary_inputs(scores, positive)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].partial_cmp(&scores[i]).unwrap().then(i.cmp(&j)));

    let (mut tp, mut fp) = (0u64, 0u64);
    let mut area_numerator = 0u64;
    let mut k = 0;
    while k < order.len() {
        let mut j = k;
        let threshold = scores[order[k]];
        let (mut dtp, mut dfp) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == threshold {
            if positive[order[j]] {
                dtp += 1;
            } else {
                dfp += 1;
            }
            j += 1;
        }
        // Trapezoid over the fp axis with integer heights: dfp * (tp_before + tp_after).
        area_numerator += dfp * (2 * tp + dtp);
        tp += dtp;
        fp += dfp;
        k = j;
    }
    debug_assert_eq!((tp, fp), (pos as u64, neg as u64));
    Ok(area_numerator as f64 / (2 * pos * neg) as f64)
}

/// One-vs-rest AUC per class, averaged over the classes present on both
/// sides. `None` when no class has both positives and negatives.
pub fn macro_auc(probs: &[Vec<f64>], truth: &[usize], num_classes: usize) -> Result<Option<f64>> {
    if probs.len() != truth.len() {
        return Err(Error::Metric(format!(
            "{} probability rows against {} labels",
            probs.len(),
            truth.len()
        )));
    }
    let mut sum = 0.0;
    let mut counted = 0;
    for class in 0..num_classes {
        let positive: Vec<bool> = truth.iter().map(|&t| t == class).collect();
        let pos = positive.iter().filter(|&&p| p).count();
        if pos == 0 || pos == positive.len() {
            continue;
        }
        let scores: Vec<f64> = probs
            .iter()
            .map(|row| {
                row.get(class).copied().ok_or_else(|| {
                    Error::Metric(format!("probability row shorter than {num_classes} classes"))
                })
            })
            .collect::<Result<_>>()?;
        sum += auc_trapezoid(&scores, &positive)?;
        counted += 1;
    }
    Ok((counted > 0).then(|| sum / counted as f64))
}

/// First index of the maximum. Empty input is a caller bug.
pub fn argmax(xs: &[f64]) -> usize {
    assert!(!xs.is_empty(), "argmax of empty slice");
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() || predictions.is_empty() {
        return Err(Error::Metric(format!(
            "accuracy over {} predictions and {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    let hits = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// One-vs-rest confusion counts for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_predictions(predictions: &[usize], truth: &[usize], class: usize) -> Result<Self> {
        if predictions.len() != truth.len() {
            return Err(Error::Metric(format!(
                "confusion over {} predictions and {} labels",
                predictions.len(),
                truth.len()
            )));
        }
        let mut c = Confusion { tp: 0, fp: 0, fn_: 0, tn: 0 };
        for (&p, &t) in predictions.iter().zip(truth) {
            match (p == class, t == class) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    /// Recall on the class; `None` when the class never occurs.
    pub fn sensitivity(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Recall on the complement; `None` when everything is the class.
    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    /// `None` when the class is never predicted.
    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::error::{AuditError, Result};

/// Doubled Mann–Whitney count: `2·#(pos > neg) + #(pos == neg)` over all
/// positive/negative pairs, plus the class sizes.
fn doubled_wins(scores: &[f64], labels: &[bool]) -> Result<(u128, u64, u64)> {
    if scores.len() != labels.len() {
        return Err(AuditError::Domain(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(AuditError::Domain(format!("score {s} is not comparable")));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(AuditError::Analysis(
            "ROC AUC is undefined when only one class is present".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut wins: u128 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos_here, mut neg_here) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                pos_here += 1;
            } else {
                neg_here += 1;
            }
            j += 1;
        }
        wins += pos_here as u128 * (2 * neg_below + neg_here) as u128;
        neg_below += neg_here;
        i = j;
    }
    Ok((wins, n_pos, n_neg))
}

/// ROC AUC as the fraction of positive/negative pairs ranked correctly,
/// ties counting one half. `labels[i] == true` marks a positive.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (wins, n_pos, n_neg) = doubled_wins(scores, labels)?;
    let pairs = 2 * n_pos as u128 * n_neg as u128;
    // Divide on the side at or below one half so that negating the scores
    // gives exactly 1 - auc.
    if 2 * wins <= pairs {
        Ok(wins as f64 / pairs as f64)
    } else {
        Ok(1.0 - (pairs - wins) as f64 / pairs as f64)
    }
}

/// One vertex of an empirical ROC curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Scores `>= threshold` are called positive; the first point uses `+inf`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Empirical ROC curve, one vertex per distinct score, from (0,0) to (1,1).
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    let (_, n_pos, n_neg) = doubled_wins(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_ties_is_half() {
        let labels = [true, false, true, false, false];
        assert_eq!(roc_auc(&[3.0; 5], &labels).unwrap(), 0.5);
    }

    #[test]
    fn perfect_separation() {
        let labels = [true, false, true, false, false];
        let scores: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
        assert_eq!(roc_auc(&scores, &labels).unwrap(), 1.0);
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        assert_eq!(roc_auc(&neg, &labels).unwrap(), 0.0);
    }

    #[test]
    fn single_class_undefined() {
        assert!(matches!(
            roc_auc(&[0.1, 0.2], &[true, true]),
            Err(AuditError::Analysis(_))
        ));
    }

    #[test]
    fn length_mismatch() {
        assert!(roc_auc(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn perfect_curve_vertices() {
        let labels = [true, false, true, false];
        let scores = [1.0, 0.0, 1.0, 0.0];
        let pts: Vec<(f64, f64)> = roc_curve(&scores, &labels)
            .unwrap()
            .iter()
            .map(|p| (p.fpr, p.tpr))
            .collect();
        assert_eq!(pts, vec![(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
    }

    #[test]
    fn curve_area_matches_auc() {
        let labels = [true, false, true, false, true, false, false];
        let scores = [0.9, 0.8, 0.8, 0.3, 0.2, 0.2, 0.1];
        let pts = roc_curve(&scores, &labels).unwrap();
        let area: f64 = pts
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum();
        assert!((area - roc_auc(&scores, &labels).unwrap()).abs() < 1e-12);
    }
}

//! Threshold-free ranking metrics. Higher scores mean "more anomalous";
//! tied scores are handled exactly.

use crate::error::{ArcError, Result};

fn validate(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(ArcError::dim(
            "metrics",
            format!("{} scores vs {} labels", scores.len(), labels.len()),
        ));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(ArcError::invalid("scores must be finite"));
    }
    let pos = labels.iter().filter(|&&y| y).count();
    Ok((pos, labels.len() - pos))
}

/// Indices sorted by score, descending; stable within ties.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Area under the ROC curve: P(pos > neg) + ½·P(pos = neg), computed from
/// average ranks.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = validate(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(ArcError::invalid(
            "AUROC needs at least one positive and one negative",
        ));
    }
    let mut order = descending(scores);
    order.reverse();
    let n = order.len();
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, q) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Average precision with tied scores entering the ranking as one block.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = validate(scores, labels)?;
    if pos == 0 {
        return Err(ArcError::invalid("AUPRC needs at least one positive"));
    }
    let order = descending(scores);
    let n = order.len();
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut ap = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let gained = order[i..=j].iter().filter(|&&k| labels[k]).count();
        tp += gained;
        seen += j - i + 1;
        if gained > 0 {
            ap += (gained as f64 / pos as f64) * (tp as f64 / seen as f64);
        }
        i = j + 1;
    }
    Ok(ap)
}

/// Scores paired with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLabels {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl ScoredLabels {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        validate(&scores, &labels)?;
        Ok(ScoredLabels { scores, labels })
    }

    pub fn auroc(&self) -> Result<f64> {
        auroc(&self.scores, &self.labels)
    }

    pub fn auprc(&self) -> Result<f64> {
        auprc(&self.scores, &self.labels)
    }

    pub fn base_rate(&self) -> f64 {
        self.labels.iter().filter(|&&y| y).count() as f64 / self.labels.len().max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_tied() {
        assert_eq!(auroc(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.3; 6], &[true, false, true, false, false, false]).unwrap(), 0.5);
    }

    #[test]
    fn precision_cases() {
        assert_eq!(auprc(&[4.0, 3.0, 2.0, 1.0], &[true, false, false, false]).unwrap(), 1.0);
        assert_eq!(auprc(&[4.0, 3.0, 2.0, 1.0], &[false, false, false, true]).unwrap(), 0.25);
        // whole list tied: precision is the base rate
        assert_eq!(auprc(&[1.0; 4], &[true, false, false, false]).unwrap(), 0.25);
    }

    #[test]
    fn errors() {
        assert!(auroc(&[1.0, 2.0], &[true, true]).is_err());
        assert!(auprc(&[1.0, 2.0], &[false, false]).is_err());
        assert!(auroc(&[1.0], &[true, false]).is_err());
        assert!(auroc(&[f64::NAN, 1.0], &[true, false]).is_err());
    }
}

//! Binary health-state metrics.

use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::model::Health;

/// Confusion counts indexed `[truth][prediction]`, 0 = normal, 1 = weak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion(pub [[usize; 2]; 2]);

impl Confusion {
    pub fn from_labels(truth: &[Health], pred: &[Health]) -> Result<Self, ClassifierError> {
        if truth.len() != pred.len() {
            return Err(ClassifierError::LengthMismatch { truth: truth.len(), pred: pred.len() });
        }
        let mut m = [[0usize; 2]; 2];
        for (t, p) in truth.iter().zip(pred) {
            let (Some(t), Some(p)) = (t.index(), p.index()) else {
                return Err(ClassifierError::UnlabeledRow);
            };
            m[t][p] += 1;
        }
        Ok(Confusion(m))
    }

    pub fn total(&self) -> usize {
        self.0.iter().flatten().sum()
    }

    /// F1 of class `c`; a class absent from both truth and prediction scores 1.
    pub fn class_f1(&self, c: usize) -> f64 {
        let m = &self.0;
        let tp = m[c][c];
        let fp = m[1 - c][c];
        let fn_ = m[c][1 - c];
        let denom = 2 * tp + fp + fn_;
        if denom == 0 {
            1.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    }

    pub fn f1_macro(&self) -> f64 {
        (self.class_f1(0) + self.class_f1(1)) / 2.0
    }

    pub fn f1_micro(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (self.0[0][0] + self.0[1][1]) as f64 / total as f64
    }
}

/// (macro, micro) F1 of binary predictions.
pub fn f1_scores(truth: &[Health], pred: &[Health]) -> Result<(f64, f64), ClassifierError> {
    if truth.is_empty() {
        return Err(ClassifierError::Empty);
    }
    let c = Confusion::from_labels(truth, pred)?;
    Ok((c.f1_macro(), c.f1_micro()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Health::{Normal as N, Weak as W};

    #[test]
    fn hand_computed() {
        assert_eq!(f1_scores(&[W, W, N, N], &[W, N, W, N]).unwrap(), (0.5, 0.5));
        assert_eq!(f1_scores(&[W, N, W], &[W, N, W]).unwrap(), (1.0, 1.0));
        assert_eq!(f1_scores(&[W, W, W], &[W, W, W]).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn errors() {
        assert!(matches!(f1_scores(&[W], &[W, N]), Err(ClassifierError::LengthMismatch { .. })));
        assert!(matches!(f1_scores(&[], &[]), Err(ClassifierError::Empty)));
    }
}

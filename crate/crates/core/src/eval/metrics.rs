use super::EvalError;
use serde::{Deserialize, Serialize};

/// Binary confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_decisions(decisions: &[bool], truth: &[bool]) -> Result<Self, EvalError> {
        if decisions.len() != truth.len() {
            return Err(EvalError::Length {
                expected: truth.len(),
                got: decisions.len(),
            });
        }
        let mut c = Self::default();
        for (&d, &t) in decisions.iter().zip(truth) {
            match (d, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    /// `tp / (tp + fp)`, or 0 with no predicted positives.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `tp / (tp + fn)`, or 0 with no actual positives.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2tp / (2tp + fp + fn)`, which equals the harmonic mean of precision
    /// and recall and is 0 when both are 0.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn scores(&self) -> Prf {
        Prf {
            precision: self.precision(),
            recall: self.recall(),
            f1: self.f1(),
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn f1(decisions: &[bool], truth: &[bool]) -> Result<Prf, EvalError> {
    Ok(Confusion::from_decisions(decisions, truth)?.scores())
}

/// Number of documents in the top `k_pct` percent of `n`, rounded up.
pub fn pct_cutoff(n: usize, k_pct: f64) -> Result<usize, EvalError> {
    if !(k_pct > 0.0 && k_pct <= 100.0) {
        return Err(EvalError::Percent(k_pct));
    }
    let exact = k_pct / 100.0 * n as f64;
    // Guard products like 0.1 · 4730 = 473.00000000000006 against rounding up.
    let nearest = exact.round();
    let cutoff = if (exact - nearest).abs() < 1e-9 * exact.max(1.0) {
        nearest
    } else {
        exact.ceil()
    };
    Ok((cutoff as usize).clamp(1, n))
}

/// Precision and recall of the first `⌈k_pct/100 · n⌉` entries of a ranking,
/// given the relevance of each ranked entry in order.
pub fn precision_recall_at_pct(ranked_truth: &[bool], k_pct: f64) -> Result<(f64, f64), EvalError> {
    if ranked_truth.is_empty() {
        return Err(EvalError::EmptyRanking);
    }
    let cutoff = pct_cutoff(ranked_truth.len(), k_pct)?;
    let decisions: Vec<bool> = (0..ranked_truth.len()).map(|i| i < cutoff).collect();
    let c = Confusion::from_decisions(&decisions, ranked_truth)?;
    Ok((c.precision(), c.recall()))
}

/// Indices of `scores` ordered by descending score, ties by ascending id.
pub fn rank(ids: &[String], scores: &[f64]) -> Result<Vec<usize>, EvalError> {
    if ids.len() != scores.len() {
        return Err(EvalError::Length {
            expected: ids.len(),
            got: scores.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(EvalError::NonFiniteScore(ids[i].clone()));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .total_cmp(&scores[a])
            .then_with(|| ids[a].cmp(&ids[b]))
    });
    Ok(order)
}

use super::metrics::pct_cutoff;
use super::EvalError;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// How scores on U become positive/negative decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ThresholdPolicy {
    /// `score ≥ threshold`.
    FixedLogit { threshold: f64 },
    /// `sigmoid(score) ≥ p`.
    Sigmoid { p: f64 },
    /// The top `⌈fraction · |U|⌉` of the ranking.
    TopFraction { fraction: f64 },
    /// The top `count` of the ranking.
    TopCount { count: usize },
}

impl ThresholdPolicy {
    pub fn validate(&self, n: usize) -> Result<(), EvalError> {
        let ok = match *self {
            Self::FixedLogit { threshold } => !threshold.is_nan(),
            Self::Sigmoid { p } => p > 0.0 && p < 1.0,
            Self::TopFraction { fraction } => fraction > 0.0 && fraction <= 1.0,
            Self::TopCount { count } => count <= n,
        };
        if ok {
            Ok(())
        } else {
            Err(EvalError::Policy(format!(
                "{self} is invalid for {n} documents"
            )))
        }
    }

    /// Decisions aligned with `scores`; `order` is the ranking of `scores`.
    pub fn decide(&self, scores: &[f64], order: &[usize]) -> Result<Vec<bool>, EvalError> {
        self.validate(scores.len())?;
        let top = |k: usize| {
            let mut d = vec![false; scores.len()];
            for &i in &order[..k] {
                d[i] = true;
            }
            d
        };
        Ok(match *self {
            Self::FixedLogit { threshold } => scores.iter().map(|&s| s >= threshold).collect(),
            Self::Sigmoid { p } => scores.iter().map(|&s| sigmoid(s) >= p).collect(),
            Self::TopFraction { fraction } => {
                if scores.is_empty() {
                    Vec::new()
                } else {
                    top(pct_cutoff(scores.len(), fraction * 100.0)?)
                }
            }
            Self::TopCount { count } => top(count),
        })
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::FixedLogit { threshold } => write!(f, "fixed-logit:{threshold}"),
            Self::Sigmoid { p } => write!(f, "sigmoid:{p}"),
            Self::TopFraction { fraction } => write!(f, "top-fraction:{fraction}"),
            Self::TopCount { count } => write!(f, "top-count:{count}"),
        }
    }
}

/// Parses `fixed-logit[:t]`, `sigmoid[:p]`, `top-fraction:f` and `top-count:K`.
impl FromStr for ThresholdPolicy {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let bad = || EvalError::Policy(format!("cannot parse threshold policy {s:?}"));
        let num = |a: Option<&str>| -> Result<Option<f64>, EvalError> {
            a.map(|a| a.parse::<f64>().map_err(|_| bad())).transpose()
        };
        let policy = match kind {
            "fixed-logit" => Self::FixedLogit {
                threshold: num(arg)?.unwrap_or(0.0),
            },
            "sigmoid" => Self::Sigmoid {
                p: num(arg)?.unwrap_or(0.5),
            },
            "top-fraction" => Self::TopFraction {
                fraction: num(arg)?.ok_or_else(bad)?,
            },
            "top-count" => Self::TopCount {
                count: arg.ok_or_else(bad)?.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        policy.validate(usize::MAX)?;
        Ok(policy)
    }
}

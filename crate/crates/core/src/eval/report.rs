use super::metrics::{precision_recall_at_pct, rank, Confusion};
use super::threshold::ThresholdPolicy;
use super::EvalError;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

/// One scored U document. `rank` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocRecord {
    pub id: String,
    pub score: f64,
    pub decision: bool,
    pub truth: bool,
    pub rank: usize,
}

/// The BM25 top-K sweep attached to BM25 runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25SweepSummary {
    pub k_min: usize,
    pub k_max: usize,
    pub mean_f1: f64,
    pub std_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub method: String,
    pub policy: ThresholdPolicy,
    pub lp_count: usize,
    pub u_count: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub p_at_10: f64,
    pub p_at_20: f64,
    pub r_at_10: f64,
    pub r_at_20: f64,
    pub seed: u64,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bm25_sweep: Option<Bm25SweepSummary>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
enum Line {
    Doc(DocRecord),
    Summary(Summary),
}

/// Scores, decisions and metrics of one run over U. `docs` is in ranking
/// order: descending score, ties by id.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub docs: Vec<DocRecord>,
    pub summary: Summary,
}

/// Run metadata that does not come from the scores.
#[derive(Debug, Clone)]
pub struct RunInfo {
    pub method: String,
    pub lp_count: usize,
    pub seed: u64,
    pub config_hash: String,
}

impl ScoreReport {
    /// Ranks `u_ids` by `scores`, applies `policy` and computes every metric
    /// against `truth` (aligned with `u_ids`).
    pub fn build(
        info: RunInfo,
        u_ids: &[String],
        scores: &[f64],
        truth: &[bool],
        policy: ThresholdPolicy,
    ) -> Result<Self, EvalError> {
        if truth.len() != u_ids.len() {
            return Err(EvalError::Length {
                expected: u_ids.len(),
                got: truth.len(),
            });
        }
        if u_ids.is_empty() {
            return Err(EvalError::EmptyRanking);
        }
        let order = rank(u_ids, scores)?;
        let decisions = policy.decide(scores, &order)?;
        let c = Confusion::from_decisions(&decisions, truth)?;
        let ranked_truth: Vec<bool> = order.iter().map(|&i| truth[i]).collect();
        let (p_at_10, r_at_10) = precision_recall_at_pct(&ranked_truth, 10.0)?;
        let (p_at_20, r_at_20) = precision_recall_at_pct(&ranked_truth, 20.0)?;
        let docs = order
            .iter()
            .enumerate()
            .map(|(r, &i)| DocRecord {
                id: u_ids[i].clone(),
                score: scores[i],
                decision: decisions[i],
                truth: truth[i],
                rank: r + 1,
            })
            .collect();
        Ok(Self {
            docs,
            summary: Summary {
                method: info.method,
                policy,
                lp_count: info.lp_count,
                u_count: u_ids.len(),
                precision: c.precision(),
                recall: c.recall(),
                f1: c.f1(),
                p_at_10,
                p_at_20,
                r_at_10,
                r_at_20,
                seed: info.seed,
                config_hash: info.config_hash,
                bm25_sweep: None,
            },
        })
    }

    /// Relevance of each document in ranking order.
    pub fn ranked_truth(&self) -> Vec<bool> {
        self.docs.iter().map(|d| d.truth).collect()
    }

    pub fn ranking(&self) -> impl Iterator<Item = &str> {
        self.docs.iter().map(|d| d.id.as_str())
    }

    /// JSON lines: one `doc` record per document in ranking order, then the
    /// `summary` record.
    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for d in &self.docs {
            serde_json::to_writer(&mut out, &Line::Doc(d.clone()))?;
            out.write_all(b"\n")?;
        }
        serde_json::to_writer(&mut out, &Line::Summary(self.summary.clone()))?;
        out.write_all(b"\n")?;
        out.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(EvalError::io(path))?;
        self.write_jsonl(std::io::BufWriter::new(file))
            .map_err(EvalError::io(path))
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self, EvalError> {
        let mut docs = Vec::new();
        let mut summary = None;
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| EvalError::Report(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            if summary.is_some() {
                return Err(EvalError::Report(format!(
                    "line {}: record after summary",
                    n + 1
                )));
            }
            match serde_json::from_str(&line)
                .map_err(|e| EvalError::Report(format!("line {}: {e}", n + 1)))?
            {
                Line::Doc(d) => docs.push(d),
                Line::Summary(s) => summary = Some(s),
            }
        }
        let summary = summary.ok_or_else(|| EvalError::Report("missing summary record".into()))?;
        Ok(Self { docs, summary })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(EvalError::io(path))?;
        Self::read_jsonl(std::io::BufReader::new(file))
    }
}

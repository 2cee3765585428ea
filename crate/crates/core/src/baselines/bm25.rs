//! Okapi BM25 query-by-documents: the labelled documents are concatenated
//! into one term multiset and every candidate is scored against it.

use super::BaselineError;
use crate::eval::metrics::Confusion;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) || !(0.0..=1.0).contains(&self.b) {
            return Err(BaselineError::Parameter(format!(
                "BM25 needs k1 >= 0 and b in [0, 1], got k1 = {}, b = {}",
                self.k1, self.b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct IndexedDoc {
    tf: HashMap<String, usize>,
    len: usize,
}

#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    df: HashMap<String, usize>,
    docs: Vec<IndexedDoc>,
    by_id: HashMap<String, usize>,
    avg_len: f64,
}

impl Bm25Index {
    pub fn build<I, S>(docs: I, params: Bm25Params) -> Result<Self, BaselineError>
    where
        I: IntoIterator<Item = (S, Vec<String>)>,
        S: Into<String>,
    {
        params.validate()?;
        let mut indexed = Vec::new();
        let mut by_id = HashMap::new();
        let mut df: HashMap<String, usize> = HashMap::new();
        for (id, tokens) in docs {
            let id = id.into();
            let mut tf: HashMap<String, usize> = HashMap::new();
            for t in &tokens {
                *tf.entry(t.clone()).or_default() += 1;
            }
            for term in tf.keys() {
                *df.entry(term.clone()).or_default() += 1;
            }
            if by_id.insert(id.clone(), indexed.len()).is_some() {
                return Err(BaselineError::Parameter(format!(
                    "duplicate document id {id:?}"
                )));
            }
            indexed.push(IndexedDoc {
                tf,
                len: tokens.len(),
            });
        }
        let total: usize = indexed.iter().map(|d| d.len).sum();
        let avg_len = if indexed.is_empty() {
            0.0
        } else {
            total as f64 / indexed.len() as f64
        };
        Ok(Self {
            params,
            df,
            docs: indexed,
            by_id,
            avg_len,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    /// `ln(1 + (N − df + 0.5) / (df + 0.5))`, always positive.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = self.doc_freq(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// `Σ_t qtf(t) · idf(t) · tf·(k1 + 1) / (tf + k1·(1 − b + b·len/avg_len))`.
    pub fn score(&self, query: &BTreeMap<String, usize>, id: &str) -> Result<f64, BaselineError> {
        let doc = &self.docs[*self
            .by_id
            .get(id)
            .ok_or_else(|| BaselineError::MissingTokens(id.to_string()))?];
        let Bm25Params { k1, b } = self.params;
        let norm = if self.avg_len > 0.0 {
            1.0 - b + b * doc.len as f64 / self.avg_len
        } else {
            1.0
        };
        Ok(query
            .iter()
            .map(|(term, &qtf)| {
                let tf = doc.tf.get(term).copied().unwrap_or(0) as f64;
                if tf == 0.0 {
                    0.0
                } else {
                    qtf as f64 * self.idf(term) * tf * (k1 + 1.0) / (tf + k1 * norm)
                }
            })
            .sum())
    }
}

/// The labelled documents' tokens merged into one term multiset.
pub fn query_from_docs<'a>(
    docs: impl IntoIterator<Item = &'a [String]>,
) -> BTreeMap<String, usize> {
    let mut q = BTreeMap::new();
    for doc in docs {
        for t in doc {
            *q.entry(t.clone()).or_default() += 1;
        }
    }
    q
}

/// Scores every id in `candidates` against the merged query and returns
/// `(id, score)` by descending score, ties by id.
pub fn bm25_rank(
    index: &Bm25Index,
    query_docs: &[Vec<String>],
    candidates: &[String],
) -> Result<Vec<(String, f64)>, BaselineError> {
    let query = query_from_docs(query_docs.iter().map(Vec::as_slice));
    let mut scored = candidates
        .iter()
        .map(|id| Ok((id.clone(), index.score(&query, id)?)))
        .collect::<Result<Vec<_>, BaselineError>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(scored)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    #[serde(rename = "K")]
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub mean_f1: f64,
    /// Population standard deviation over the swept K.
    pub std_f1: f64,
}

impl SweepResult {
    pub fn write_csv(&self, out: impl Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), BaselineError> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| BaselineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(file)
            .map_err(|e| BaselineError::Csv(e.to_string()))
    }
}

/// Takes the top `K` of a ranking as positive for every `K` in
/// `k_min..=k_max` and reports F1 per K with its mean and standard deviation.
/// `ranked_truth[i]` is the relevance of the i-th ranked document. `k_max`
/// above the ranking length is clamped with a warning.
pub fn bm25_f1_sweep(
    ranked_truth: &[bool],
    k_min: usize,
    k_max: usize,
) -> Result<SweepResult, BaselineError> {
    let n = ranked_truth.len();
    let mut k_max = k_max;
    if k_max > n {
        log::warn!("sweep upper bound {k_max} exceeds the {n} ranked documents; clamping");
        k_max = n;
    }
    if k_min == 0 || k_min > k_max {
        return Err(BaselineError::Parameter(format!(
            "empty sweep range {k_min}..={k_max} over {n} documents"
        )));
    }
    let positives = ranked_truth.iter().filter(|&&t| t).count();
    let mut tp = ranked_truth[..k_min - 1].iter().filter(|&&t| t).count();
    let mut points = Vec::with_capacity(k_max - k_min + 1);
    for k in k_min..=k_max {
        if ranked_truth[k - 1] {
            tp += 1;
        }
        let c = Confusion {
            tp,
            fp: k - tp,
            fn_: positives - tp,
            tn: n - k - (positives - tp),
        };
        points.push(SweepPoint {
            k,
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
        });
    }
    let m = points.len() as f64;
    let mean_f1 = points.iter().map(|p| p.f1).sum::<f64>() / m;
    let std_f1 = (points.iter().map(|p| (p.f1 - mean_f1).powi(2)).sum::<f64>() / m).sqrt();
    Ok(SweepResult {
        points,
        mean_f1,
        std_f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn absent_terms_give_zero_and_id_order() {
        let idx = Bm25Index::build(
            [("c", toks("x y")), ("a", toks("y z")), ("b", toks("z"))],
            Bm25Params::default(),
        )
        .unwrap();
        let ranked = bm25_rank(&idx, &[toks("q r")], &ids(&["c", "a", "b"])).unwrap();
        assert_eq!(
            ranked.iter().map(|r| r.0.as_str()).collect::<Vec<_>>(),
            ["a", "b", "c"]
        );
        assert!(ranked.iter().all(|r| r.1 == 0.0));
    }

    #[test]
    fn single_match_ranks_first() {
        let idx = Bm25Index::build(
            [("a", toks("x y")), ("b", toks("q z")), ("c", toks("z"))],
            Bm25Params::default(),
        )
        .unwrap();
        let ranked = bm25_rank(&idx, &[toks("q")], &ids(&["a", "b", "c"])).unwrap();
        assert_eq!(ranked[0].0, "b");
        assert!(ranked[0].1 > 0.0);
    }

    #[test]
    fn missing_candidate_is_an_error() {
        let idx = Bm25Index::build([("a", toks("x"))], Bm25Params::default()).unwrap();
        assert!(matches!(
            bm25_rank(&idx, &[toks("x")], &ids(&["zz"])),
            Err(BaselineError::MissingTokens(id)) if id == "zz"
        ));
    }

    #[test]
    fn invalid_parameters_and_duplicates() {
        assert!(Bm25Index::build([("a", toks("x"))], Bm25Params { k1: -1.0, b: 0.5 }).is_err());
        assert!(Bm25Index::build([("a", toks("x"))], Bm25Params { k1: 1.0, b: 1.5 }).is_err());
        assert!(
            Bm25Index::build([("a", toks("x")), ("a", toks("y"))], Bm25Params::default()).is_err()
        );
    }

    #[test]
    fn query_multiset_counts_repeats() {
        let q = query_from_docs([toks("a b a").as_slice(), toks("b c").as_slice()]);
        assert_eq!(q.get("a"), Some(&2));
        assert_eq!(q.get("b"), Some(&2));
        assert_eq!(q.get("c"), Some(&1));
    }

    #[test]
    fn perfect_ranking_hits_one_at_positive_count() {
        let truth = [true, true, true, false, false];
        let s = bm25_f1_sweep(&truth, 1, 5).unwrap();
        assert_eq!(s.points[2].k, 3);
        assert_eq!(s.points[2].f1, 1.0);
        let min = s.points.iter().map(|p| p.f1).fold(f64::INFINITY, f64::min);
        let max = s.points.iter().map(|p| p.f1).fold(0.0, f64::max);
        assert!(min <= s.mean_f1 && s.mean_f1 <= max);
    }

    #[test]
    fn sweep_clamps_and_validates() {
        let truth = [true, false, true];
        let s = bm25_f1_sweep(&truth, 2, 5000).unwrap();
        assert_eq!(s.points.last().unwrap().k, 3);
        assert!(bm25_f1_sweep(&truth, 0, 2).is_err());
        assert!(bm25_f1_sweep(&truth, 4, 5000).is_err());
        let mut csv = Vec::new();
        s.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv)
            .unwrap()
            .starts_with("K,precision,recall,f1\n2,"));
    }
}

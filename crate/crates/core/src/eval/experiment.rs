use super::report::{Bm25SweepSummary, RunInfo, ScoreReport};
use super::threshold::ThresholdPolicy;
use super::{EvalError, MethodError};
use crate::baselines::{
    bm25_f1_sweep, query_from_docs, train_nnpu, Bm25Index, Bm25Params, NnpuConfig, NnpuEpoch,
    NnpuModel,
};
use crate::binio::{peek_magic, Reader};
use crate::data::{Corpus, PuTask, PuView};
use crate::ebm::{train_pude_em, EmEpoch, EmTrainConfig, EnergyPair};
use crate::kde::{KdeConfig, KdeRatioScorer};
use crate::neural::checkpoint::{read_net, write_net};
use byteorder::{LittleEndian, WriteBytesExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25Spec {
    pub k1: f64,
    pub b: f64,
    /// Upper end of the top-K sweep; the lower end is |LP|.
    pub sweep_max: usize,
}

impl Default for Bm25Spec {
    fn default() -> Self {
        let p = Bm25Params::default();
        Self {
            k1: p.k1,
            b: p.b,
            sweep_max: 5000,
        }
    }
}

impl Bm25Spec {
    pub fn params(&self) -> Bm25Params {
        Bm25Params {
            k1: self.k1,
            b: self.b,
        }
    }
}

/// A scoring method together with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum MethodSpec {
    PudeKde(KdeConfig),
    PudeEm(EmTrainConfig),
    Nnpu(NnpuConfig),
    Bm25(Bm25Spec),
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::PudeKde(_) => "pude-kde",
            Self::PudeEm(_) => "pude-em",
            Self::Nnpu(_) => "nnpu",
            Self::Bm25(_) => "bm25",
        }
    }

    pub fn validate(&self) -> Result<(), MethodError> {
        match self {
            Self::PudeKde(c) => {
                for h in [c.bandwidth_p, c.bandwidth_q] {
                    if !(h > 0.0 && h.is_finite()) {
                        return Err(crate::kde::KdeError::Bandwidth(h).into());
                    }
                }
            }
            Self::PudeEm(c) => c.validate()?,
            Self::Nnpu(c) => c.validate()?,
            Self::Bm25(b) => b.params().validate()?,
        }
        Ok(())
    }

    /// The natural zero point of each score: log-ratio ≥ 0 for KDE,
    /// `sigmoid ≥ 0.5` for the logit-like EM and nnPU scores, and the top
    /// `|LP|` documents for BM25.
    pub fn default_policy(&self, lp_count: usize) -> ThresholdPolicy {
        match self {
            Self::PudeKde(_) => ThresholdPolicy::FixedLogit { threshold: 0.0 },
            Self::PudeEm(_) | Self::Nnpu(_) => ThresholdPolicy::Sigmoid { p: 0.5 },
            Self::Bm25(_) => ThresholdPolicy::TopCount { count: lp_count },
        }
    }
}

const NNPU_MAGIC: &[u8; 4] = b"PUN1";
const BM25_MAGIC: &[u8; 4] = b"PUB1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Kde(KdeRatioScorer),
    Em(EnergyPair),
    Nnpu(NnpuModel),
    Bm25(Bm25Params),
}

/// Per-epoch training losses, when the method has any.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainingTrace {
    None,
    Em(Vec<EmEpoch>),
    Nnpu(Vec<NnpuEpoch>),
}

impl TrainingTrace {
    pub fn write_csv(&self, out: impl Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        match self {
            Self::None => {}
            Self::Em(t) => t.iter().try_for_each(|e| w.serialize(e))?,
            Self::Nnpu(t) => t.iter().try_for_each(|e| w.serialize(e))?,
        }
        w.flush()?;
        Ok(())
    }
}

fn ck(e: std::io::Error) -> EvalError {
    EvalError::Model(e.to_string())
}

impl TrainedModel {
    pub fn method(&self) -> &'static str {
        match self {
            Self::Kde(_) => "pude-kde",
            Self::Em(_) => "pude-em",
            Self::Nnpu(_) => "nnpu",
            Self::Bm25(_) => "bm25",
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        match self {
            Self::Kde(m) => m.encode(),
            Self::Em(m) => m.encode(),
            Self::Nnpu(m) => {
                let mut out = NNPU_MAGIC.to_vec();
                out.write_u32::<LittleEndian>(VERSION).unwrap();
                write_net(m.net(), &mut out);
                out
            }
            Self::Bm25(p) => {
                let mut out = BM25_MAGIC.to_vec();
                out.write_u32::<LittleEndian>(VERSION).unwrap();
                out.write_f64::<LittleEndian>(p.k1).unwrap();
                out.write_f64::<LittleEndian>(p.b).unwrap();
                out
            }
        }
    }

    /// Dispatches on the leading magic bytes.
    pub fn decode(buf: &[u8]) -> Result<Self, EvalError> {
        let magic = peek_magic(buf).ok_or_else(|| EvalError::Model("file too short".into()))?;
        let model_err = |e: MethodError| EvalError::Model(e.to_string());
        match &magic {
            b"PUK1" => Ok(Self::Kde(
                KdeRatioScorer::decode(buf).map_err(|e| model_err(e.into()))?,
            )),
            b"PUP1" => Ok(Self::Em(
                EnergyPair::decode(buf).map_err(|e| model_err(e.into()))?,
            )),
            NNPU_MAGIC | BM25_MAGIC => {
                let mut r = Reader::new(buf);
                r.magic(&magic).map_err(ck)?;
                let version = r.u32().map_err(ck)?;
                if version != VERSION {
                    return Err(EvalError::Model(format!("unsupported version {version}")));
                }
                let model = if &magic == NNPU_MAGIC {
                    let net = read_net(&mut r).map_err(|e| EvalError::Model(e.to_string()))?;
                    Self::Nnpu(NnpuModel::new(net).map_err(|e| model_err(e.into()))?)
                } else {
                    Self::Bm25(Bm25Params {
                        k1: r.f64().map_err(ck)?,
                        b: r.f64().map_err(ck)?,
                    })
                };
                if r.remaining() != 0 {
                    return Err(EvalError::Model("trailing bytes".into()));
                }
                Ok(model)
            }
            other => Err(EvalError::Model(format!(
                "unknown model magic {:?}",
                String::from_utf8_lossy(other)
            ))),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(EvalError::io(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        Self::decode(&std::fs::read(path).map_err(EvalError::io(path))?)
    }
}

/// Trains `spec` on LP ∪ U. BM25 has nothing to fit and returns its
/// parameters.
pub fn train_method(
    spec: &MethodSpec,
    corpus: &Corpus,
    task: &PuTask,
    seed: u64,
) -> Result<(TrainedModel, TrainingTrace), EvalError> {
    let stage = EvalError::stage("train");
    let view = PuView::new(corpus, task).map_err(|e| stage(e.into()))?;
    match spec {
        MethodSpec::PudeKde(cfg) => {
            let m = KdeRatioScorer::fit(view.lp.view(), view.all().view(), cfg, seed)
                .map_err(|e| stage(e.into()))?;
            Ok((TrainedModel::Kde(m), TrainingTrace::None))
        }
        MethodSpec::PudeEm(cfg) => {
            let t = train_pude_em(corpus, task, cfg, seed).map_err(|e| stage(e.into()))?;
            Ok((TrainedModel::Em(t.pair), TrainingTrace::Em(t.trace)))
        }
        MethodSpec::Nnpu(cfg) => {
            let (m, trace) = train_nnpu(corpus, task, cfg, seed).map_err(|e| stage(e.into()))?;
            Ok((TrainedModel::Nnpu(m), TrainingTrace::Nnpu(trace)))
        }
        MethodSpec::Bm25(b) => {
            let params = b.params();
            params.validate().map_err(|e| stage(e.into()))?;
            Ok((TrainedModel::Bm25(params), TrainingTrace::None))
        }
    }
}

/// Scores every U document; returns U ids in corpus order with their scores.
pub fn score_u(
    model: &TrainedModel,
    corpus: &Corpus,
    task: &PuTask,
) -> Result<(Vec<String>, Vec<f64>), EvalError> {
    let stage = EvalError::stage("score");
    let view = PuView::new(corpus, task).map_err(|e| stage(e.into()))?;
    let scores = match model {
        TrainedModel::Kde(m) => m.score_batch(view.u.view()).map_err(|e| stage(e.into()))?,
        TrainedModel::Em(m) => m.score_batch(view.u.view()).map_err(|e| stage(e.into()))?,
        TrainedModel::Nnpu(m) => m.score_batch(view.u.view()).map_err(|e| stage(e.into()))?,
        TrainedModel::Bm25(params) => bm25_scores(&view, *params).map_err(stage)?,
    };
    Ok((view.u_ids, scores))
}

fn bm25_scores(view: &PuView, params: Bm25Params) -> Result<Vec<f64>, MethodError> {
    let missing = || {
        crate::baselines::BaselineError::MissingTokens("corpus has documents without tokens".into())
    };
    let (lp_tokens, u_tokens) = match (&view.lp_tokens, &view.u_tokens) {
        (Some(l), Some(u)) => (l, u),
        _ => return Err(missing().into()),
    };
    let docs = view
        .lp_ids
        .iter()
        .zip(lp_tokens)
        .chain(view.u_ids.iter().zip(u_tokens))
        .map(|(id, t)| (id.clone(), t.clone()));
    let index = Bm25Index::build(docs, params)?;
    let query = query_from_docs(lp_tokens.iter().map(Vec::as_slice));
    Ok(view
        .u_ids
        .iter()
        .map(|id| index.score(&query, id))
        .collect::<Result<_, _>>()?)
}

/// Ground truth of each U document, read at evaluation time only.
pub fn u_truth(corpus: &Corpus, u_ids: &[String]) -> Result<Vec<bool>, EvalError> {
    u_ids
        .iter()
        .map(|id| {
            corpus
                .get(id)
                .and_then(|d| d.truth)
                .map(|t| t.is_positive())
                .ok_or_else(|| EvalError::UnknownTruth(id.clone()))
        })
        .collect()
}

#[derive(Serialize)]
struct Fingerprint<'a> {
    method: &'a MethodSpec,
    policy: ThresholdPolicy,
    seed: u64,
    lp_ids: &'a BTreeSet<String>,
    u_ids: &'a BTreeSet<String>,
}

/// SHA-256 over the canonical JSON of the method, policy, seed and task.
pub fn config_hash(spec: &MethodSpec, policy: ThresholdPolicy, seed: u64, task: &PuTask) -> String {
    let json = serde_json::to_vec(&Fingerprint {
        method: spec,
        policy,
        seed,
        lp_ids: &task.lp_ids,
        u_ids: &task.u_ids,
    })
    .expect("fingerprint serializes");
    Sha256::digest(&json)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Builds the report for scores already computed by [`score_u`]. `policy`
/// falls back to the method default.
pub fn evaluate(
    spec: &MethodSpec,
    corpus: &Corpus,
    task: &PuTask,
    u_ids: &[String],
    scores: &[f64],
    policy: Option<ThresholdPolicy>,
    seed: u64,
) -> Result<ScoreReport, EvalError> {
    let policy = policy.unwrap_or_else(|| spec.default_policy(task.lp_ids.len()));
    let truth = u_truth(corpus, u_ids)?;
    let info = RunInfo {
        method: spec.name().to_string(),
        lp_count: task.lp_ids.len(),
        seed,
        config_hash: config_hash(spec, policy, seed, task),
    };
    let mut report = ScoreReport::build(info, u_ids, scores, &truth, policy)?;
    if let MethodSpec::Bm25(b) = spec {
        let ranked = report.ranked_truth();
        let k_min = task.lp_ids.len().max(1);
        let sweep = bm25_f1_sweep(&ranked, k_min, b.sweep_max).map_err(|e| EvalError::Stage {
            stage: "bm25 sweep",
            source: e.into(),
        })?;
        report.summary.bm25_sweep = Some(Bm25SweepSummary {
            k_min,
            k_max: sweep.points.last().map_or(k_min, |p| p.k),
            mean_f1: sweep.mean_f1,
            std_f1: sweep.std_f1,
        });
    }
    Ok(report)
}

/// Transductive run: train on LP ∪ U, score U, threshold, measure.
pub fn run_experiment(
    corpus: &Corpus,
    task: &PuTask,
    spec: &MethodSpec,
    policy: Option<ThresholdPolicy>,
    seed: u64,
) -> Result<ScoreReport, EvalError> {
    let (model, _) = train_method(spec, corpus, task, seed)?;
    let (u_ids, scores) = score_u(&model, corpus, task)?;
    evaluate(spec, corpus, task, &u_ids, &scores, policy, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic_task, SynthSpec};
    use std::collections::HashMap;

    fn task() -> (Corpus, PuTask) {
        gen_synthetic_task(&SynthSpec::two_gaussian(2, 0.5, 300, 5), 20).unwrap()
    }

    #[test]
    fn method_spec_json_is_tagged() {
        let spec = MethodSpec::Bm25(Bm25Spec::default());
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(
            json,
            r#"{"method":"bm25","k1":1.2,"b":0.75,"sweep_max":5000}"#
        );
        assert_eq!(serde_json::from_str::<MethodSpec>(&json).unwrap(), spec);
        assert!(serde_json::from_str::<MethodSpec>(
            r#"{"method":"bm25","k1":1.2,"b":0.75,"sweep_max":5,"x":1}"#
        )
        .is_err());
        let em = MethodSpec::PudeEm(EmTrainConfig::default());
        let back: MethodSpec = serde_json::from_str(&serde_json::to_string(&em).unwrap()).unwrap();
        assert_eq!(back, em);
    }

    #[test]
    fn kde_run_is_deterministic_and_consistent() {
        let (corpus, task) = task();
        let spec = MethodSpec::PudeKde(KdeConfig::default());
        let a = run_experiment(&corpus, &task, &spec, None, 1).unwrap();
        let b = run_experiment(&corpus, &task, &spec, None, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.summary.u_count, task.u_ids.len());
        let ranked: BTreeSet<String> = a.ranking().map(String::from).collect();
        assert_eq!(ranked, task.u_ids);
        assert!(a.docs.iter().all(|d| d.decision == (d.score >= 0.0)));
        assert!(a.summary.f1 > 0.8, "{}", a.summary.f1);
    }

    #[test]
    fn model_files_round_trip() {
        let (corpus, task) = task();
        let nnpu = NnpuConfig {
            hidden: vec![4],
            epochs: 1,
            ..NnpuConfig::with_prior(0.5)
        };
        for spec in [
            MethodSpec::PudeKde(KdeConfig::default()),
            MethodSpec::Nnpu(nnpu),
            MethodSpec::Bm25(Bm25Spec::default()),
        ] {
            let (model, _) = train_method(&spec, &corpus, &task, 0).unwrap();
            assert_eq!(TrainedModel::decode(&model.encode()).unwrap(), model);
            assert_eq!(model.method(), spec.name());
        }
        assert!(TrainedModel::decode(b"XXXX").is_err());
        assert!(TrainedModel::decode(b"PU").is_err());
    }

    #[test]
    fn bm25_needs_tokens_and_reports_sweep() {
        let (mut corpus, task) = task();
        let spec = MethodSpec::Bm25(Bm25Spec::default());
        assert!(matches!(
            run_experiment(&corpus, &task, &spec, None, 0),
            Err(EvalError::Stage { stage: "score", .. })
        ));
        let tokens: HashMap<String, Vec<String>> = corpus
            .docs()
            .iter()
            .map(|d| {
                let t = if d.vector[0] > 0.0 { "pos" } else { "neg" };
                (d.id.clone(), vec![t.to_string(), "common".to_string()])
            })
            .collect();
        corpus.attach_tokens(tokens).unwrap();
        let r = run_experiment(&corpus, &task, &spec, None, 0).unwrap();
        let s = r.summary.bm25_sweep.clone().unwrap();
        assert_eq!(s.k_min, 20);
        assert_eq!(s.k_max, task.u_ids.len());
        assert_eq!(r.docs.iter().filter(|d| d.decision).count(), 20);
    }

    #[test]
    fn missing_truth_is_reported() {
        let (corpus, task) = task();
        let mut docs = corpus.docs().to_vec();
        let victim = task.u_ids.iter().next().unwrap().clone();
        docs.iter_mut().find(|d| d.id == victim).unwrap().truth = None;
        let corpus = Corpus::new(corpus.dim(), docs).unwrap();
        let spec = MethodSpec::PudeKde(KdeConfig::default());
        assert!(matches!(
            run_experiment(&corpus, &task, &spec, None, 0),
            Err(EvalError::UnknownTruth(id)) if id == victim
        ));
    }
}

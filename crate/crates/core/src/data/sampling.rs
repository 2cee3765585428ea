use super::{Corpus, DataError, EmbeddedDoc, PuTask, Truth};
use crate::rng;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Selected-completely-at-random labelling: every positive id is labelled
/// independently with probability `label_frequency`; everything else is U.
pub fn scar_sample(
    positive_ids: &[String],
    negative_ids: &[String],
    label_frequency: f64,
    seed: u64,
) -> Result<PuTask, DataError> {
    if positive_ids.is_empty() {
        return Err(DataError::InvalidParameter(
            "no positive ids to label".into(),
        ));
    }
    if !(label_frequency > 0.0 && label_frequency <= 1.0) {
        return Err(DataError::InvalidParameter(format!(
            "label frequency {label_frequency} outside (0, 1]"
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut lp_ids = BTreeSet::new();
    let mut u_ids = BTreeSet::new();
    for id in positive_ids {
        if rng.random::<f64>() < label_frequency {
            lp_ids.insert(id.clone());
        } else {
            u_ids.insert(id.clone());
        }
    }
    u_ids.extend(negative_ids.iter().cloned());
    if let Some(id) = lp_ids.iter().find(|id| negative_ids.contains(id)) {
        return Err(DataError::InvalidParameter(format!(
            "id {id:?} listed as both positive and negative"
        )));
    }
    Ok(PuTask {
        lp_ids,
        u_ids,
        label_frequency_hint: Some(label_frequency),
    })
}

/// Draws exactly `lp_count` labelled positives uniformly without
/// replacement; every other document of the corpus becomes U.
pub fn make_transductive_task(
    corpus: &Corpus,
    lp_count: usize,
    seed: u64,
) -> Result<PuTask, DataError> {
    if lp_count == 0 {
        return Err(DataError::InvalidParameter("lp_count must be >= 1".into()));
    }
    let positives: Vec<&str> = corpus
        .docs()
        .iter()
        .filter(|d| d.truth == Some(Truth::Positive))
        .map(|d| d.id.as_str())
        .collect();
    if positives.len() < lp_count {
        return Err(DataError::InsufficientPositives {
            needed: lp_count,
            available: positives.len(),
        });
    }
    let mut rng = rng::seeded(seed);
    let chosen = rand::seq::index::sample(&mut rng, positives.len(), lp_count);
    let lp_ids: BTreeSet<String> = chosen.iter().map(|i| positives[i].to_owned()).collect();
    let u_ids = corpus
        .ids()
        .filter(|id| !lp_ids.contains(*id))
        .map(str::to_owned)
        .collect();
    PuTask::new(lp_ids, u_ids)
}

/// Two isotropic Gaussian components with a known mixing proportion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub dim: usize,
    pub positive_mean: Vec<f64>,
    pub positive_std: f64,
    pub negative_mean: Vec<f64>,
    pub negative_std: f64,
    /// Probability that a document is drawn from the positive component.
    pub prior: f64,
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_prefix")]
    pub id_prefix: String,
}

fn default_prefix() -> String {
    "doc".into()
}

impl SynthSpec {
    /// Means at `±2` on the first axis, unit standard deviations.
    pub fn two_gaussian(dim: usize, prior: f64, n: usize, seed: u64) -> Self {
        let mut positive_mean = vec![0.0; dim];
        let mut negative_mean = vec![0.0; dim];
        if dim > 0 {
            positive_mean[0] = 2.0;
            negative_mean[0] = -2.0;
        }
        Self {
            dim,
            positive_mean,
            positive_std: 1.0,
            negative_mean,
            negative_std: 1.0,
            prior,
            n,
            seed,
            id_prefix: default_prefix(),
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidParameter(m));
        if self.dim == 0 {
            return bad("dimension must be >= 1".into());
        }
        if self.positive_mean.len() != self.dim || self.negative_mean.len() != self.dim {
            return bad(format!("component means must have dimension {}", self.dim));
        }
        if self
            .positive_mean
            .iter()
            .chain(&self.negative_mean)
            .any(|m| !m.is_finite())
        {
            return bad("component means must be finite".into());
        }
        if !(self.positive_std > 0.0 && self.positive_std.is_finite())
            || !(self.negative_std > 0.0 && self.negative_std.is_finite())
        {
            return bad("standard deviations must be positive".into());
        }
        // prior = 1 yields an all-positive corpus, used for labelled pools.
        if !(self.prior > 0.0 && self.prior <= 1.0) {
            return bad(format!("prior {} outside (0, 1]", self.prior));
        }
        if self.n < 2 {
            return bad("n must be >= 2".into());
        }
        if self.id_prefix.is_empty() {
            return bad("id prefix must be non-empty".into());
        }
        Ok(())
    }
}

pub fn gen_synthetic(spec: &SynthSpec) -> Result<Corpus, DataError> {
    spec.validate()?;
    let mut rng = rng::seeded(spec.seed);
    let width = spec.n.to_string().len();
    let docs = (0..spec.n)
        .map(|i| {
            let positive = rng.random::<f64>() < spec.prior;
            let (mean, std, truth) = if positive {
                (&spec.positive_mean, spec.positive_std, Truth::Positive)
            } else {
                (&spec.negative_mean, spec.negative_std, Truth::Negative)
            };
            let vector = mean
                .iter()
                .map(|&m| (m + std * rng.sample::<f64, _>(StandardNormal)) as f32)
                .collect();
            EmbeddedDoc::new(
                format!("{}-{:0width$}", spec.id_prefix, i),
                vector,
                Some(truth),
            )
        })
        .collect();
    Corpus::new(spec.dim, docs)
}

/// A transductive task drawn from `spec`: `spec.n` unlabelled documents plus
/// `lp_count` labelled positives from the positive component. Labelled ids
/// use the prefix `{spec.id_prefix}-lp`.
pub fn gen_synthetic_task(
    spec: &SynthSpec,
    lp_count: usize,
) -> Result<(Corpus, PuTask), DataError> {
    if lp_count == 0 {
        return Err(DataError::InsufficientPositives {
            needed: 1,
            available: 0,
        });
    }
    let unlabelled = gen_synthetic(spec)?;
    let pool_spec = SynthSpec {
        prior: 1.0,
        n: lp_count.max(2),
        seed: spec.seed ^ 0x9e37_79b9_7f4a_7c15,
        id_prefix: format!("{}-lp", spec.id_prefix),
        ..spec.clone()
    };
    let mut pool = gen_synthetic(&pool_spec)?;
    if lp_count < pool.len() {
        let keep = pool.ids().take(lp_count).map(String::from).collect();
        pool = pool.subset(&keep);
    }
    let task = PuTask::new(
        pool.ids().map(String::from).collect(),
        unlabelled.ids().map(String::from).collect(),
    )?;
    Ok((pool.concat(&unlabelled)?, task))
}

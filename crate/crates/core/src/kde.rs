//! Gaussian kernel density estimation and the density-ratio scorer.
//!
//! `f̂(x) = 1/(n·hᵈ) Σᵢ K((x − xᵢ)/h)` with `K` the standard d-dimensional
//! Gaussian density. Everything is evaluated in log space with log-sum-exp,
//! so far-away queries return a large negative number instead of `-inf`.
//!
//! The scorer returns `log f̂_p(x) − log f̂(x)`, where `f̂_p` is fit on the
//! labelled positives and `f̂` on all documents. The class prior would only
//! add a constant to every score, so it is never needed.

use crate::binio::{write_f64s, Reader};
use crate::neural::{train_vae, NeuralError, VaeConfig, VaeModel};
use byteorder::{LittleEndian, WriteBytesExt};
use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

pub const DEFAULT_BANDWIDTH: f64 = 1.9;
/// Inputs wider than this are reduced with a VAE before density estimation.
pub const REDUCE_ABOVE_DIM: usize = 64;

const MAGIC: &[u8; 4] = b"PUK1";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum KdeError {
    #[error("cannot fit a density to zero points")]
    Empty,
    #[error("bandwidth must be positive and finite, got {0}")]
    Bandwidth(f64),
    #[error("support contains non-finite values")]
    NonFinite,
    #[error("query has dimension {got}, model has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("dimensionality reduction failed: {0}")]
    Reduction(#[from] NeuralError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    support: Array2<f64>,
    bandwidth: f64,
}

/// Stores the support points verbatim; KDE has no training step.
pub fn fit(points: Array2<f64>, bandwidth: f64) -> Result<KdeModel, KdeError> {
    if points.nrows() == 0 || points.ncols() == 0 {
        return Err(KdeError::Empty);
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(KdeError::Bandwidth(bandwidth));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(KdeError::NonFinite);
    }
    Ok(KdeModel {
        support: points.as_standard_layout().into_owned(),
        bandwidth,
    })
}

impl KdeModel {
    pub fn len(&self) -> usize {
        self.support.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.support.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.support.ncols()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn support(&self) -> ArrayView2<'_, f64> {
        self.support.view()
    }

    /// `log f̂(x)`.
    pub fn log_density(&self, x: ArrayView1<f64>) -> Result<f64, KdeError> {
        if x.len() != self.dim() {
            return Err(KdeError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let inv_two_h2 = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        let exponents: Vec<f64> = self
            .support
            .rows()
            .into_iter()
            .map(|row| {
                let sq: f64 = row
                    .iter()
                    .zip(x.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                -sq * inv_two_h2
            })
            .collect();
        let d = self.dim() as f64;
        let log_norm =
            (self.len() as f64).ln() + d * self.bandwidth.ln() + 0.5 * d * (2.0 * PI).ln();
        Ok(log_sum_exp(&exponents) - log_norm)
    }

    pub fn log_density_batch(&self, x: ArrayView2<f64>) -> Result<Vec<f64>, KdeError> {
        x.rows()
            .into_iter()
            .map(|row| self.log_density(row))
            .collect()
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KdeConfig {
    pub bandwidth_p: f64,
    pub bandwidth_q: f64,
    pub reduce_above_dim: usize,
    pub vae: VaeConfig,
}

impl Default for KdeConfig {
    fn default() -> Self {
        Self {
            bandwidth_p: DEFAULT_BANDWIDTH,
            bandwidth_q: DEFAULT_BANDWIDTH,
            reduce_above_dim: REDUCE_ABOVE_DIM,
            vae: VaeConfig::default(),
        }
    }
}

/// `log f̂_p(x) − log f̂(x)`, with an optional VAE front end.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeRatioScorer {
    p_model: KdeModel,
    q_model: KdeModel,
    reducer: Option<VaeModel>,
}

impl KdeRatioScorer {
    pub fn new(
        p_model: KdeModel,
        q_model: KdeModel,
        reducer: Option<VaeModel>,
    ) -> Result<Self, KdeError> {
        if p_model.dim() != q_model.dim() {
            return Err(KdeError::Dimension {
                expected: q_model.dim(),
                got: p_model.dim(),
            });
        }
        if let Some(vae) = &reducer {
            if vae.latent_dim() != p_model.dim() {
                return Err(KdeError::Dimension {
                    expected: p_model.dim(),
                    got: vae.latent_dim(),
                });
            }
        }
        Ok(Self {
            p_model,
            q_model,
            reducer,
        })
    }

    /// Fits `f̂_p` on `lp` and `f̂` on `all` (LP ∪ U). When the input is wider
    /// than `cfg.reduce_above_dim`, a VAE trained on `all` maps both sets to
    /// its latent means first.
    pub fn fit(
        lp: ArrayView2<f64>,
        all: ArrayView2<f64>,
        cfg: &KdeConfig,
        seed: u64,
    ) -> Result<Self, KdeError> {
        let reducer = if all.ncols() > cfg.reduce_above_dim {
            let (vae, trace) = train_vae(all, &cfg.vae, seed)?;
            if let Some(last) = trace.last() {
                log::info!(
                    "vae reduced {} -> {} dims (reconstruction {:.4}, kl {:.4})",
                    all.ncols(),
                    vae.latent_dim(),
                    last.reconstruction,
                    last.kl
                );
            }
            Some(vae)
        } else {
            None
        };
        let (lp, all) = match &reducer {
            Some(vae) => (vae.encode(lp)?, vae.encode(all)?),
            None => (lp.to_owned(), all.to_owned()),
        };
        Self::new(
            fit(lp, cfg.bandwidth_p)?,
            fit(all, cfg.bandwidth_q)?,
            reducer,
        )
    }

    pub fn p_model(&self) -> &KdeModel {
        &self.p_model
    }

    pub fn q_model(&self) -> &KdeModel {
        &self.q_model
    }

    pub fn reducer(&self) -> Option<&VaeModel> {
        self.reducer.as_ref()
    }

    pub fn shared_bandwidth(&self) -> bool {
        self.p_model.bandwidth == self.q_model.bandwidth
    }

    /// Input dimension expected by [`Self::score_batch`].
    pub fn input_dim(&self) -> usize {
        match &self.reducer {
            Some(vae) => vae.input_dim(),
            None => self.p_model.dim(),
        }
    }

    pub fn ratio_score(&self, x: ArrayView1<f64>) -> Result<f64, KdeError> {
        let row = x.insert_axis(ndarray::Axis(0));
        Ok(self.score_batch(row)?[0])
    }

    pub fn score_batch(&self, x: ArrayView2<f64>) -> Result<Vec<f64>, KdeError> {
        if x.ncols() != self.input_dim() {
            return Err(KdeError::Dimension {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let reduced;
        let x = match &self.reducer {
            Some(vae) => {
                reduced = vae.encode(x)?;
                reduced.view()
            }
            None => x,
        };
        x.rows()
            .into_iter()
            .map(|row| Ok(self.p_model.log_density(row)? - self.q_model.log_density(row)?))
            .collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(VERSION).unwrap();
        out.write_u32::<LittleEndian>(self.p_model.dim() as u32)
            .unwrap();
        for model in [&self.p_model, &self.q_model] {
            out.write_f64::<LittleEndian>(model.bandwidth).unwrap();
            out.write_u64::<LittleEndian>(model.len() as u64).unwrap();
            write_f64s(&mut out, model.support.as_slice().expect("standard layout")).unwrap();
        }
        match &self.reducer {
            Some(vae) => {
                out.push(1);
                vae.write(&mut out);
            }
            None => out.push(0),
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self, KdeError> {
        let ck = |e: std::io::Error| KdeError::Checkpoint(e.to_string());
        let mut r = Reader::new(buf);
        r.magic(MAGIC).map_err(ck)?;
        let version = r.u32().map_err(ck)?;
        if version != VERSION {
            return Err(KdeError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let dim = r.u32().map_err(ck)? as usize;
        let mut models = Vec::with_capacity(2);
        for _ in 0..2 {
            let bandwidth = r.f64().map_err(ck)?;
            let n = r.u64().map_err(ck)? as usize;
            let values = r.f64s(
                n.checked_mul(dim)
                    .ok_or_else(|| KdeError::Checkpoint("size overflow".into()))?,
            );
            let support = Array2::from_shape_vec((n, dim), values.map_err(ck)?)
                .map_err(|e| KdeError::Checkpoint(e.to_string()))?;
            models.push(fit(support, bandwidth)?);
        }
        let reducer = match r.u8().map_err(ck)? {
            0 => None,
            1 => Some(VaeModel::read(&mut r)?),
            f => return Err(KdeError::Checkpoint(format!("bad reducer flag {f}"))),
        };
        if r.remaining() != 0 {
            return Err(KdeError::Checkpoint("trailing bytes".into()));
        }
        let q = models.pop().expect("two models");
        let p = models.pop().expect("two models");
        Self::new(p, q, reducer)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), KdeError> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|source| KdeError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KdeError> {
        let path = path.as_ref();
        let buf = std::fs::read(path).map_err(|source| KdeError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::decode(&buf)
    }
}

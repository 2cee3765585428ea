//! Variational autoencoder used to reduce embedding dimension before KDE.
//!
//! The encoder emits `[μ | log σ²]` (width `2L`), the decoder maps a latent
//! sample back to the input space. Training minimizes, per row,
//! `‖x − x̂‖² + KL(N(μ, σ²) ‖ N(0, I))` with reparameterized sampling.

use super::adam::{adam_step_net, AdamConfig, AdamState};
use super::checkpoint::{read_net, write_net};
use super::net::{DenseNet, Mode, NetSpec};
use super::NeuralError;
use crate::binio::Reader;
use crate::rng;
use byteorder::{LittleEndian, WriteBytesExt};
use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

const MAGIC: &[u8; 4] = b"PUV1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeConfig {
    pub latent: usize,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            latent: 50,
            hidden: vec![256],
            epochs: 30,
            batch_size: 128,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    encoder: DenseNet,
    decoder: DenseNet,
    latent: usize,
}

/// Mean per-row loss components over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VaeEpoch {
    pub reconstruction: f64,
    pub kl: f64,
}

/// `KL(N(μ, diag σ²) ‖ N(0, I)) = ½ Σ (μ² + σ² − 1 − ln σ²)` per row.
pub fn kl_standard_normal(mean: ArrayView2<f64>, log_var: ArrayView2<f64>) -> Vec<f64> {
    mean.rows()
        .into_iter()
        .zip(log_var.rows())
        .map(|(m, lv)| {
            0.5 * m
                .iter()
                .zip(lv.iter())
                .map(|(&m, &lv)| m * m + lv.exp() - 1.0 - lv)
                .sum::<f64>()
        })
        .collect()
}

impl VaeModel {
    pub fn new(encoder: DenseNet, decoder: DenseNet) -> Result<Self, NeuralError> {
        let latent = decoder.input_dim();
        if encoder.output_dim() != 2 * latent {
            return Err(NeuralError::Shape(format!(
                "encoder emits {} values, expected 2 × latent = {}",
                encoder.output_dim(),
                2 * latent
            )));
        }
        if decoder.output_dim() != encoder.input_dim() {
            return Err(NeuralError::Shape(
                "decoder output must match encoder input".into(),
            ));
        }
        Ok(Self {
            encoder,
            decoder,
            latent,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn encoder(&self) -> &DenseNet {
        &self.encoder
    }

    pub fn decoder(&self) -> &DenseNet {
        &self.decoder
    }

    /// Posterior means for each row of `x`; no sampling.
    pub fn encode(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
        let out = self.encoder.predict(x)?;
        Ok(out.slice(s![.., ..self.latent]).to_owned())
    }

    pub fn decode(&self, z: ArrayView2<f64>) -> Result<Array2<f64>, NeuralError> {
        self.decoder.predict(z)
    }

    pub(crate) fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(VERSION).unwrap();
        out.write_u32::<LittleEndian>(self.latent as u32).unwrap();
        write_net(&self.encoder, out);
        write_net(&self.decoder, out);
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, NeuralError> {
        let ck = |e: std::io::Error| NeuralError::Checkpoint(e.to_string());
        r.magic(MAGIC).map_err(ck)?;
        let version = r.u32().map_err(ck)?;
        if version != VERSION {
            return Err(NeuralError::Checkpoint(format!(
                "unsupported VAE version {version}"
            )));
        }
        let latent = r.u32().map_err(ck)? as usize;
        let model = Self::new(read_net(r)?, read_net(r)?)?;
        if model.latent != latent {
            return Err(NeuralError::Checkpoint(
                "latent size disagrees with decoder".into(),
            ));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NeuralError> {
        let path = path.as_ref();
        let mut out = Vec::new();
        self.write(&mut out);
        std::fs::write(path, out).map_err(|source| NeuralError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NeuralError> {
        let path = path.as_ref();
        let buf = std::fs::read(path).map_err(|source| NeuralError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut r = Reader::new(&buf);
        let model = Self::read(&mut r)?;
        if r.remaining() != 0 {
            return Err(NeuralError::Checkpoint("trailing bytes after VAE".into()));
        }
        Ok(model)
    }
}

/// Trains a VAE on the rows of `data` and returns it with its loss trace.
pub fn train_vae(
    data: ArrayView2<f64>,
    cfg: &VaeConfig,
    seed: u64,
) -> Result<(VaeModel, Vec<VaeEpoch>), NeuralError> {
    let (n, dim) = data.dim();
    if n == 0 {
        return Err(NeuralError::EmptyBatch);
    }
    if cfg.latent == 0 || cfg.latent >= dim {
        return Err(NeuralError::Config(format!(
            "latent size {} must be in [1, {dim})",
            cfg.latent
        )));
    }
    if cfg.batch_size == 0 || cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 {
        return Err(NeuralError::Config(
            "batch size and learning rate must be positive".into(),
        ));
    }
    let latent = cfg.latent;
    let mut encoder = DenseNet::init(
        &NetSpec {
            input: dim,
            hidden: cfg.hidden.clone(),
            output: 2 * latent,
            batch_norm: false,
        },
        seed,
    )?;
    let mut decoder = DenseNet::init(
        &NetSpec {
            input: latent,
            hidden: cfg.hidden.iter().rev().copied().collect(),
            output: dim,
            batch_norm: false,
        },
        seed.wrapping_add(1),
    )?;
    let adam = AdamConfig::with_learning_rate(cfg.learning_rate);
    let mut enc_opt = AdamState::for_net(&encoder, adam);
    let mut dec_opt = AdamState::for_net(&decoder, adam);
    let mut rng = rng::derived(seed, 0x0076_6165);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut recon_sum, mut kl_sum) = (0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let x = data.select(Axis(0), chunk);
            let b = chunk.len() as f64;
            let (enc_out, enc_cache) = encoder.forward(x.view(), Mode::Train)?;
            let mean = enc_out.slice(s![.., ..latent]);
            let log_var = enc_out.slice(s![.., latent..]);
            let noise: Array2<f64> = Array2::from_shape_simple_fn((chunk.len(), latent), || {
                StandardNormal.sample(&mut rng)
            });
            let std = log_var.mapv(|lv| (0.5 * lv).exp());
            let z = &mean + &(&std * &noise);

            let (recon, dec_cache) = decoder.forward(z.view(), Mode::Train)?;
            let diff = &recon - &x;
            let recon_loss: f64 = diff.iter().map(|d| d * d).sum::<f64>() / b;
            let kl: f64 = kl_standard_normal(mean, log_var).iter().sum::<f64>() / b;
            if !recon_loss.is_finite() || !kl.is_finite() {
                return Err(NeuralError::Diverged {
                    epoch,
                    detail: format!("reconstruction {recon_loss}, KL {kl}"),
                });
            }
            recon_sum += recon_loss * b;
            kl_sum += kl * b;

            let dec_grads = decoder.backward(&dec_cache, (&diff * (2.0 / b)).view())?;
            let dz = &dec_grads.input;
            let d_mean = dz + &(&mean / b);
            let d_log_var =
                dz * &std * &noise * 0.5 + &(log_var.mapv(|lv| lv.exp() - 1.0) * (0.5 / b));
            let upstream =
                concatenate(Axis(1), &[d_mean.view(), d_log_var.view()]).expect("same rows");
            let enc_grads = encoder.backward(&enc_cache, upstream.view())?;
            if !enc_grads.is_finite() || !dec_grads.is_finite() {
                return Err(NeuralError::Diverged {
                    epoch,
                    detail: "non-finite gradient".into(),
                });
            }
            adam_step_net(&mut decoder, &dec_grads, &mut dec_opt)?;
            adam_step_net(&mut encoder, &enc_grads, &mut enc_opt)?;
        }
        trace.push(VaeEpoch {
            reconstruction: recon_sum / n as f64,
            kl: kl_sum / n as f64,
        });
        log::debug!("vae epoch {epoch}: {:?}", trace[epoch]);
    }
    Ok((VaeModel::new(encoder, decoder)?, trace))
}

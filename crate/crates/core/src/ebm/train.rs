//! Maximum-likelihood training of the energy pair with an auxiliary
//! LP-vs-U classification risk on `Φ(x) = g_q(x) − g_p(x)`.

use super::langevin::{initial_states, run_chains, InitPolicy, LangevinConfig, ReplayBuffer};
use super::{EbmError, EnergyPair};
use crate::data::{Corpus, PuTask, PuView};
use crate::neural::{adam_step_net, AdamConfig, AdamState, DenseNet, Gradients, Mode, NetSpec};
use crate::rng::{self, Rng};
use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Per-epoch decay of the risk weight γ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaSchedule {
    Constant,
    /// `γ₀ · (1 − epoch / epochs)`
    Linear,
    /// `γ₀ · 0.95^epoch`
    Exponential,
}

impl GammaSchedule {
    pub fn gamma(self, gamma0: f64, epoch: usize, epochs: usize) -> f64 {
        match self {
            Self::Constant => gamma0,
            Self::Linear => gamma0 * (1.0 - epoch as f64 / epochs.max(1) as f64),
            Self::Exponential => gamma0 * 0.95f64.powi(epoch as i32),
        }
    }
}

impl std::str::FromStr for GammaSchedule {
    type Err = EbmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "constant" => Ok(Self::Constant),
            "linear" => Ok(Self::Linear),
            "exponential" => Ok(Self::Exponential),
            other => Err(EbmError::Config(format!(
                "unknown gamma schedule {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmTrainConfig {
    /// Weight of the positive-density likelihood term.
    pub alpha: f64,
    /// Weight of the whole-data likelihood term.
    pub beta: f64,
    /// Initial weight of the classification risk.
    pub gamma0: f64,
    pub gamma_schedule: GammaSchedule,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Hidden widths of each energy net.
    pub hidden: Vec<usize>,
    pub batch_norm: bool,
    pub langevin: LangevinConfig,
}

impl Default for EmTrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma0: 1.0,
            gamma_schedule: GammaSchedule::Linear,
            epochs: 50,
            batch_size: 128,
            learning_rate: 1e-3,
            hidden: vec![512, 512, 512],
            batch_norm: false,
            langevin: LangevinConfig::default(),
        }
    }
}

impl EmTrainConfig {
    pub fn validate(&self) -> Result<(), EbmError> {
        let weights_ok = [self.alpha, self.beta, self.gamma0]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0);
        if !weights_ok {
            return Err(EbmError::Config(
                "loss weights must be finite and >= 0".into(),
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(EbmError::Config(
                "epochs and batch size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(EbmError::Config(format!(
                "learning rate {} must be > 0",
                self.learning_rate
            )));
        }
        if self.hidden.contains(&0) {
            return Err(EbmError::Config("hidden widths must be positive".into()));
        }
        self.langevin.validate()
    }
}

/// Mean per-batch losses of one epoch. `risk_loss` already carries the γ weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmEpoch {
    pub epoch: usize,
    pub mle_loss_p: f64,
    pub mle_loss_q: f64,
    pub risk_loss: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedEm {
    pub pair: EnergyPair,
    pub trace: Vec<EmEpoch>,
}

impl TrainedEm {
    /// CSV with columns `epoch,mle_loss_p,mle_loss_q,risk_loss,gamma`.
    pub fn write_trace(&self, out: impl Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.trace {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_trace(&self, path: impl AsRef<Path>) -> Result<(), EbmError> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| EbmError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_trace(file)
            .map_err(|e| EbmError::Checkpoint(e.to_string()))
    }
}

/// Contrastive likelihood gradient: mean `∇θE` over `data` minus mean `∇θE`
/// over `samples`. Also returns the matching loss
/// `mean E(data) − mean E(samples)`.
pub fn mle_grad(
    net: &DenseNet,
    data: ArrayView2<f64>,
    samples: ArrayView2<f64>,
    mode: Mode,
) -> Result<(Gradients, f64), EbmError> {
    if data.nrows() == 0 || samples.nrows() == 0 {
        return Err(EbmError::EmptyBatch);
    }
    if net.output_dim() != 1 {
        return Err(EbmError::NotScalar(net.output_dim()));
    }
    for x in [&data, &samples] {
        if x.ncols() != net.input_dim() {
            return Err(EbmError::Dimension {
                expected: net.input_dim(),
                got: x.ncols(),
            });
        }
    }
    let half = |x: ArrayView2<f64>| -> Result<(Gradients, f64), EbmError> {
        let n = x.nrows() as f64;
        let (out, cache) = net.forward_pass(x, mode)?;
        let grads = net.backward(&cache, Array2::from_elem((x.nrows(), 1), 1.0 / n).view())?;
        Ok((grads, out.sum() / n))
    };
    let (mut grads, e_data) = half(data)?;
    let (sample_grads, e_samples) = half(samples)?;
    grads.add_scaled(&sample_grads, -1.0);
    Ok((grads, e_data - e_samples))
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Class-balanced logistic risk `½·mean_P ℓ(Φ, 1) + ½·mean_N ℓ(Φ, 0)` with the
/// first `positives` rows labelled. Returns the loss and `∂loss/∂Φ` per row.
fn balanced_logistic(phi: &[f64], positives: usize) -> (f64, Vec<f64>) {
    let negatives = phi.len() - positives;
    let w_pos = if positives > 0 {
        0.5 / positives as f64
    } else {
        0.0
    };
    let w_neg = if negatives > 0 {
        0.5 / negatives as f64
    } else {
        0.0
    };
    let mut loss = 0.0;
    let grad = phi
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            if i < positives {
                loss += w_pos * softplus(-f);
                -w_pos * sigmoid(-f)
            } else {
                loss += w_neg * softplus(f);
                w_neg * sigmoid(f)
            }
        })
        .collect();
    (loss, grad)
}

struct Sampler {
    cfg: LangevinConfig,
    buffer: Option<ReplayBuffer>,
}

impl Sampler {
    fn new(cfg: &LangevinConfig, pool: ArrayView2<f64>, rng: &mut Rng) -> Result<Self, EbmError> {
        let buffer = match cfg.init {
            InitPolicy::Persistent => Some(ReplayBuffer::new(pool, cfg.buffer_size, rng)?),
            _ => None,
        };
        Ok(Self {
            cfg: cfg.clone(),
            buffer,
        })
    }

    fn sample(
        &mut self,
        net: &DenseNet,
        batch: ArrayView2<f64>,
        rng: &mut Rng,
    ) -> Result<Array2<f64>, EbmError> {
        match &mut self.buffer {
            Some(buffer) => {
                let (idx, init) = buffer.draw(batch.nrows(), self.cfg.reinit_fraction, rng);
                let out = run_chains(net, &self.cfg, init, rng)?;
                buffer.store(&idx, out.view());
                Ok(out)
            }
            None => {
                let init = initial_states(
                    self.cfg.init,
                    batch,
                    batch.nrows(),
                    self.cfg.data_noise_std,
                    rng,
                )?;
                run_chains(net, &self.cfg, init, rng)
            }
        }
    }
}

fn diverged(epoch: usize, component: &'static str) -> impl Fn(EbmError) -> EbmError {
    move |e| match e {
        EbmError::Sampling { step } => EbmError::Diverged {
            epoch,
            component,
            detail: format!("Langevin state non-finite at step {step}"),
        },
        other => other,
    }
}

fn check_finite(
    epoch: usize,
    component: &'static str,
    loss: f64,
    grads: &Gradients,
) -> Result<(), EbmError> {
    if loss.is_finite() && grads.is_finite() {
        Ok(())
    } else {
        Err(EbmError::Diverged {
            epoch,
            component,
            detail: format!("loss {loss}, gradients finite: {}", grads.is_finite()),
        })
    }
}

/// Trains `g_p` on LP and `g_q` on LP ∪ U. Each epoch makes one shuffled
/// pass over each set for the likelihood terms. The risk on each LP ∪ U
/// batch pairs its U rows with a batch drawn by cycling through LP.
pub fn train_pude_em(
    corpus: &Corpus,
    task: &PuTask,
    cfg: &EmTrainConfig,
    seed: u64,
) -> Result<TrainedEm, EbmError> {
    cfg.validate()?;
    let view = PuView::new(corpus, task).map_err(|e| EbmError::Config(e.to_string()))?;
    train_on_arrays(view.lp.view(), view.all().view(), cfg, seed)
}

/// Same as [`train_pude_em`] on raw matrices. `all` holds the LP rows first.
pub fn train_on_arrays(
    lp: ArrayView2<f64>,
    all: ArrayView2<f64>,
    cfg: &EmTrainConfig,
    seed: u64,
) -> Result<TrainedEm, EbmError> {
    cfg.validate()?;
    let n_lp = lp.nrows();
    if n_lp == 0 || all.nrows() <= n_lp {
        return Err(EbmError::EmptyBatch);
    }
    let dim = lp.ncols();
    if all.ncols() != dim {
        return Err(EbmError::Dimension {
            expected: dim,
            got: all.ncols(),
        });
    }
    let spec = NetSpec {
        input: dim,
        hidden: cfg.hidden.clone(),
        output: 1,
        batch_norm: cfg.batch_norm,
    };
    let mut g_p = DenseNet::init(&spec, seed)?;
    let mut g_q = DenseNet::init(&spec, seed.wrapping_add(1))?;
    let adam = AdamConfig::with_learning_rate(cfg.learning_rate);
    let mut opt_p = AdamState::for_net(&g_p, adam);
    let mut opt_q = AdamState::for_net(&g_q, adam);
    let mut rng = rng::derived(seed, 0x0065_626d);
    let mut sampler_p = Sampler::new(&cfg.langevin, lp, &mut rng)?;
    let mut sampler_q = Sampler::new(&cfg.langevin, all, &mut rng)?;

    let mut order: Vec<usize> = (0..all.nrows()).collect();
    let mut lp_order: Vec<usize> = (0..n_lp).collect();
    let mut risk_order = lp_order.clone();
    risk_order.shuffle(&mut rng);
    let mut risk_cursor = 0;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let gamma = cfg.gamma_schedule.gamma(cfg.gamma0, epoch, cfg.epochs);
        order.shuffle(&mut rng);
        lp_order.shuffle(&mut rng);
        let lp_chunks: Vec<&[usize]> = lp_order.chunks(cfg.batch_size).collect();
        let (mut sum_p, mut sum_q, mut sum_risk) = (0.0, 0.0, 0.0);
        let mut batches = 0usize;

        for chunk in order.chunks(cfg.batch_size) {
            let x_batch = all.select(Axis(0), chunk);
            // LP is shorter than LP ∪ U, so its pass ends within the first batches.
            let lp_batch = lp_chunks.get(batches).map(|idx| lp.select(Axis(0), idx));

            let mut grad_p = Gradients::zeros_like(&g_p, 0);
            if let Some(lp_batch) = &lp_batch {
                let samples_p = sampler_p
                    .sample(&g_p, lp_batch.view(), &mut rng)
                    .map_err(diverged(epoch, "langevin-p"))?;
                let (grad, loss_p) =
                    mle_grad(&g_p, lp_batch.view(), samples_p.view(), Mode::Train)?;
                check_finite(epoch, "mle-p", loss_p, &grad)?;
                grad_p.add_scaled(&grad, cfg.alpha);
                sum_p += loss_p;
            }
            let samples_q = sampler_q
                .sample(&g_q, x_batch.view(), &mut rng)
                .map_err(diverged(epoch, "langevin-q"))?;
            let (mut grad_q, loss_q) =
                mle_grad(&g_q, x_batch.view(), samples_q.view(), Mode::Train)?;
            check_finite(epoch, "mle-q", loss_q, &grad_q)?;
            grad_q.scale(cfg.beta);

            // Risk batch: a cycled LP batch followed by the U rows of this batch.
            let mut risk_idx = Vec::with_capacity(cfg.batch_size.min(n_lp));
            while risk_idx.len() < cfg.batch_size.min(n_lp) {
                if risk_cursor == n_lp {
                    risk_order.shuffle(&mut rng);
                    risk_cursor = 0;
                }
                risk_idx.push(risk_order[risk_cursor]);
                risk_cursor += 1;
            }
            let u_rows: Vec<usize> = chunk.iter().copied().filter(|&i| i >= n_lp).collect();
            let risk_batch = concatenate(
                Axis(0),
                &[
                    lp.select(Axis(0), &risk_idx).view(),
                    all.select(Axis(0), &u_rows).view(),
                ],
            )
            .expect("same width");
            let (out_p, cache_p) = g_p.forward_pass(risk_batch.view(), Mode::Train)?;
            let (out_q, cache_q) = g_q.forward_pass(risk_batch.view(), Mode::Train)?;
            let phi: Vec<f64> = out_q.iter().zip(out_p.iter()).map(|(q, p)| q - p).collect();
            let (risk, d_phi) = balanced_logistic(&phi, risk_idx.len());
            if gamma > 0.0 {
                let upstream = Array2::from_shape_vec((phi.len(), 1), d_phi).expect("column");
                let risk_q = g_q.backward(&cache_q, upstream.view())?;
                let risk_p = g_p.backward(&cache_p, upstream.view())?;
                check_finite(epoch, "risk", risk, &risk_q)?;
                grad_q.add_scaled(&risk_q, gamma);
                grad_p.add_scaled(&risk_p, -gamma);
            }

            adam_step_net(&mut g_p, &grad_p, &mut opt_p)?;
            adam_step_net(&mut g_q, &grad_q, &mut opt_q)?;
            if cfg.batch_norm {
                if let Some(lp_batch) = &lp_batch {
                    g_p.forward(lp_batch.view(), Mode::Train)?;
                }
                g_q.forward(x_batch.view(), Mode::Train)?;
            }
            if !g_p.is_finite() || !g_q.is_finite() {
                return Err(EbmError::Diverged {
                    epoch,
                    component: "parameters",
                    detail: "non-finite weights after update".into(),
                });
            }
            sum_q += loss_q;
            sum_risk += gamma * risk;
            batches += 1;
        }
        let row = EmEpoch {
            epoch,
            mle_loss_p: sum_p / lp_chunks.len() as f64,
            mle_loss_q: sum_q / batches as f64,
            risk_loss: sum_risk / batches as f64,
            gamma,
        };
        log::debug!("em epoch {epoch}: {row:?}");
        trace.push(row);
    }
    Ok(TrainedEm {
        pair: EnergyPair::new(g_p, g_q)?,
        trace,
    })
}

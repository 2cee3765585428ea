//! Non-negative PU learning (Kiryo et al., 2017). Unlike the density-ratio
//! scorers it needs the class prior π of the unlabelled data.
//!
//! With the sigmoid loss `ℓ(z, y) = σ(−y·z)`, the corrected risk is
//! `π·R_P⁺ + max(0, R_U⁻ − π·R_P⁻)`. When the bracket goes negative the
//! step descends on its negation instead, pushing it back towards zero.

use super::BaselineError;
use crate::data::{Corpus, PuTask, PuView};
use crate::neural::{adam_step_net, AdamConfig, AdamState, DenseNet, Mode, NetSpec};
use crate::rng;
use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NnpuConfig {
    /// Fraction of positives in U.
    pub prior: f64,
    pub hidden: Vec<usize>,
    pub batch_norm: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl NnpuConfig {
    /// Defaults for every field except the prior, which has none.
    pub fn with_prior(prior: f64) -> Self {
        Self {
            prior,
            hidden: vec![512, 512, 512],
            batch_norm: true,
            epochs: 50,
            batch_size: 128,
            learning_rate: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        if !(self.prior > 0.0 && self.prior < 1.0) {
            return Err(BaselineError::Parameter(format!(
                "class prior {} outside (0, 1)",
                self.prior
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.hidden.contains(&0) {
            return Err(BaselineError::Parameter(
                "epochs, batch size and hidden widths must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(BaselineError::Parameter(format!(
                "learning rate {} must be > 0",
                self.learning_rate
            )));
        }
        Ok(())
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

/// Components of the empirical risk for one batch of logits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnpuRisk {
    /// `π·R_P⁺`
    pub positive: f64,
    /// `R_U⁻ − π·R_P⁻`, possibly negative.
    pub negative: f64,
    /// `π·R_P⁺ + max(0, R_U⁻ − π·R_P⁻)`
    pub corrected: f64,
}

pub fn nnpu_risk(
    logits_p: &[f64],
    logits_u: &[f64],
    prior: f64,
) -> Result<NnpuRisk, BaselineError> {
    if logits_p.is_empty() || logits_u.is_empty() {
        return Err(BaselineError::Empty);
    }
    let mean =
        |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|&x| f(x)).sum::<f64>() / v.len() as f64;
    let r_p_pos = mean(logits_p, &|g| sigmoid(-g));
    let r_p_neg = mean(logits_p, &|g| sigmoid(g));
    let r_u_neg = mean(logits_u, &|g| sigmoid(g));
    let positive = prior * r_p_pos;
    let negative = r_u_neg - prior * r_p_neg;
    Ok(NnpuRisk {
        positive,
        negative,
        corrected: positive + negative.max(0.0),
    })
}

/// `∂/∂g` of the objective actually descended for this batch.
fn risk_upstream(logits_p: &[f64], logits_u: &[f64], prior: f64, negative: f64) -> Vec<f64> {
    let (np, nu) = (logits_p.len() as f64, logits_u.len() as f64);
    let ds = |g: f64| sigmoid(g) * (1.0 - sigmoid(g));
    let mut up: Vec<f64> = Vec::with_capacity(logits_p.len() + logits_u.len());
    if negative >= 0.0 {
        // π·σ(−g) − π·σ(g) over P, σ(g) over U.
        up.extend(logits_p.iter().map(|&g| prior * (-ds(g) - ds(g)) / np));
        up.extend(logits_u.iter().map(|&g| ds(g) / nu));
    } else {
        // −(R_U⁻ − π·R_P⁻)
        up.extend(logits_p.iter().map(|&g| prior * ds(g) / np));
        up.extend(logits_u.iter().map(|&g| -ds(g) / nu));
    }
    up
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnpuEpoch {
    pub epoch: usize,
    /// Mean corrected risk over the epoch's batches.
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnpuModel {
    net: DenseNet,
}

impl NnpuModel {
    pub fn new(net: DenseNet) -> Result<Self, BaselineError> {
        if net.output_dim() != 1 {
            return Err(BaselineError::Parameter(format!(
                "classifier must have one output, found {}",
                net.output_dim()
            )));
        }
        Ok(Self { net })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    /// Classifier logits; `≥ 0` means positive.
    pub fn score_batch(&self, x: ArrayView2<f64>) -> Result<Vec<f64>, BaselineError> {
        Ok(self.net.predict(x)?.column(0).to_vec())
    }
}

pub fn train_nnpu(
    corpus: &Corpus,
    task: &PuTask,
    cfg: &NnpuConfig,
    seed: u64,
) -> Result<(NnpuModel, Vec<NnpuEpoch>), BaselineError> {
    cfg.validate()?;
    let view = PuView::new(corpus, task)?;
    train_nnpu_arrays(view.lp.view(), view.u.view(), cfg, seed)
}

/// nnPU on raw matrices of labelled positives and unlabelled rows.
pub fn train_nnpu_arrays(
    lp: ArrayView2<f64>,
    u: ArrayView2<f64>,
    cfg: &NnpuConfig,
    seed: u64,
) -> Result<(NnpuModel, Vec<NnpuEpoch>), BaselineError> {
    cfg.validate()?;
    if lp.nrows() == 0 || u.nrows() == 0 {
        return Err(BaselineError::Empty);
    }
    let mut net = DenseNet::init(
        &NetSpec {
            input: lp.ncols(),
            hidden: cfg.hidden.clone(),
            output: 1,
            batch_norm: cfg.batch_norm,
        },
        seed,
    )?;
    let mut opt = AdamState::for_net(&net, AdamConfig::with_learning_rate(cfg.learning_rate));
    let mut rng = rng::derived(seed, 0x6e6e_7075);
    let mut u_order: Vec<usize> = (0..u.nrows()).collect();
    let mut p_order: Vec<usize> = (0..lp.nrows()).collect();
    p_order.shuffle(&mut rng);
    let mut p_cursor = 0;
    let p_batch = cfg.batch_size.min(lp.nrows());
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        u_order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in u_order.chunks(cfg.batch_size) {
            let mut p_idx = Vec::with_capacity(p_batch);
            while p_idx.len() < p_batch {
                if p_cursor == lp.nrows() {
                    p_order.shuffle(&mut rng);
                    p_cursor = 0;
                }
                p_idx.push(p_order[p_cursor]);
                p_cursor += 1;
            }
            let x = concatenate(
                Axis(0),
                &[
                    lp.select(Axis(0), &p_idx).view(),
                    u.select(Axis(0), chunk).view(),
                ],
            )
            .expect("same width");
            let (out, cache) = net.forward(x.view(), Mode::Train)?;
            let logits = out.column(0).to_vec();
            let (lp_logits, u_logits) = logits.split_at(p_idx.len());
            let risk = nnpu_risk(lp_logits, u_logits, cfg.prior)?;
            if !risk.corrected.is_finite() {
                return Err(BaselineError::Diverged {
                    epoch,
                    detail: format!("risk {risk:?}"),
                });
            }
            let upstream = Array2::from_shape_vec(
                (logits.len(), 1),
                risk_upstream(lp_logits, u_logits, cfg.prior, risk.negative),
            )
            .expect("column");
            let grads = net.backward(&cache, upstream.view())?;
            adam_step_net(&mut net, &grads, &mut opt)?;
            total += risk.corrected;
            batches += 1;
        }
        if !net.is_finite() {
            return Err(BaselineError::Diverged {
                epoch,
                detail: "non-finite weights".into(),
            });
        }
        trace.push(NnpuEpoch {
            epoch,
            risk: total / batches as f64,
        });
    }
    Ok((NnpuModel::new(net)?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_zeroes_negative_part() {
        // P scored positive and U negative: R_U⁻ ≈ 0 while π·R_P⁻ ≈ 0.5.
        let r = nnpu_risk(&[10.0, 10.0], &[-10.0, -10.0], 0.5).unwrap();
        assert!(r.negative < 0.0);
        assert_eq!(r.corrected, r.positive);
        let r = nnpu_risk(&[0.0], &[0.0], 0.5).unwrap();
        assert!((r.positive - 0.25).abs() < 1e-15);
        assert!((r.negative - 0.25).abs() < 1e-15);
        assert!((r.corrected - 0.5).abs() < 1e-15);
    }

    #[test]
    fn upstream_matches_finite_differences() {
        let (p, u, prior) = (vec![0.3, -1.2], vec![0.8, 0.1, -0.4], 0.4);
        for shift in [0.0, -6.0] {
            let p: Vec<f64> = p.iter().map(|g| g + shift).collect();
            let u: Vec<f64> = u.iter().map(|g| g - shift).collect();
            let r = nnpu_risk(&p, &u, prior).unwrap();
            let objective = |p: &[f64], u: &[f64]| {
                let r2 = nnpu_risk(p, u, prior).unwrap();
                if r.negative >= 0.0 {
                    r2.positive + r2.negative
                } else {
                    -r2.negative
                }
            };
            let up = risk_upstream(&p, &u, prior, r.negative);
            let h = 1e-6;
            for i in 0..p.len() + u.len() {
                let (mut pp, mut uu, mut pm, mut um) = (p.clone(), u.clone(), p.clone(), u.clone());
                if i < p.len() {
                    pp[i] += h;
                    pm[i] -= h;
                } else {
                    uu[i - p.len()] += h;
                    um[i - p.len()] -= h;
                }
                let fd = (objective(&pp, &uu) - objective(&pm, &um)) / (2.0 * h);
                assert!((fd - up[i]).abs() < 1e-8, "{i}: {fd} vs {}", up[i]);
            }
        }
    }

    #[test]
    fn prior_is_required_in_range() {
        for prior in [0.0, 1.0, -0.2, f64::NAN] {
            assert!(NnpuConfig::with_prior(prior).validate().is_err());
        }
        assert!(NnpuConfig::with_prior(0.3).validate().is_ok());
    }

    #[test]
    fn corrected_risk_is_non_negative_and_training_is_deterministic() {
        let lp = Array2::from_shape_fn((10, 2), |(i, j)| 2.0 + 0.2 * ((i * 3 + j) as f64).sin());
        let u = Array2::from_shape_fn((40, 2), |(i, j)| {
            let s = if i % 2 == 0 { 2.0 } else { -2.0 };
            s + 0.3 * ((i * 5 + j) as f64).cos()
        });
        let cfg = NnpuConfig {
            hidden: vec![8, 8],
            epochs: 5,
            batch_size: 16,
            ..NnpuConfig::with_prior(0.5)
        };
        let (a, trace) = train_nnpu_arrays(lp.view(), u.view(), &cfg, 3).unwrap();
        let (b, _) = train_nnpu_arrays(lp.view(), u.view(), &cfg, 3).unwrap();
        assert_eq!(a, b);
        assert!(trace.iter().all(|e| e.risk >= 0.0));
        assert_eq!(a.score_batch(u.view()).unwrap().len(), 40);
    }
}

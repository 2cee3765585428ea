//! Independent reference computations shared by the integration and
//! acceptance suites. Nothing here calls the code paths it is used to check.
#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use pude::neural::{DenseNet, Mode};

/// `Σ upstream ⊙ net(x)` evaluated with a fresh forward pass.
fn weighted_output(net: &DenseNet, x: ArrayView2<f64>, mode: Mode, upstream: &Array2<f64>) -> f64 {
    let (out, _) = net.forward_pass(x, mode).expect("forward");
    (&out * upstream).sum()
}

/// Central finite differences of `Σ upstream ⊙ net(x)` with respect to every
/// trainable parameter (in `param_slices` order) and every input entry.
pub fn finite_difference_grads(
    net: &DenseNet,
    x: &Array2<f64>,
    mode: Mode,
    upstream: &Array2<f64>,
    step: f64,
) -> (Vec<Vec<f64>>, Array2<f64>) {
    let sizes: Vec<usize> = net.param_slices().iter().map(|s| s.len()).collect();
    let mut params = Vec::with_capacity(sizes.len());
    for (group, &len) in sizes.iter().enumerate() {
        let mut g = vec![0.0; len];
        for (j, slot) in g.iter_mut().enumerate() {
            let mut plus = net.clone();
            plus.param_slices_mut()[group][j] += step;
            let mut minus = net.clone();
            minus.param_slices_mut()[group][j] -= step;
            *slot = (weighted_output(&plus, x.view(), mode, upstream)
                - weighted_output(&minus, x.view(), mode, upstream))
                / (2.0 * step);
        }
        params.push(g);
    }
    let mut input = Array2::zeros(x.raw_dim());
    for idx in ndarray::indices(x.raw_dim()) {
        let mut plus = x.clone();
        plus[idx] += step;
        let mut minus = x.clone();
        minus[idx] -= step;
        input[idx] = (weighted_output(net, plus.view(), mode, upstream)
            - weighted_output(net, minus.view(), mode, upstream))
            / (2.0 * step);
    }
    (params, input)
}

/// `|a − b| / max(|a|, |b|)`, with values below `floor` treated as `floor`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Naive Gaussian KDE: `ln( 1/(n hᵈ) Σ (2π)^(-d/2) exp(-‖x − xᵢ‖² / 2h²) )`.
pub fn naive_kde_log_density(support: &Array2<f64>, h: f64, x: &[f64]) -> f64 {
    let (n, d) = support.dim();
    let norm = (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0);
    let mut total = 0.0;
    for row in support.rows() {
        let mut sq = 0.0;
        for j in 0..d {
            let u = (x[j] - row[j]) / h;
            sq += u * u;
        }
        total += norm * (-0.5 * sq).exp();
    }
    (total / (n as f64 * h.powi(d as i32))).ln()
}

/// Confusion counts by direct enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

pub fn confusion(predicted: &[bool], truth: &[bool]) -> Confusion {
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        fn_: 0,
        tn: 0,
    };
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// (precision, recall, F1) from confusion counts; 0 for undefined ratios.
pub fn prf(c: Confusion) -> (f64, f64, f64) {
    let p = if c.tp + c.fp == 0 {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fp) as f64
    };
    let r = if c.tp + c.fn_ == 0 {
        0.0
    } else {
        c.tp as f64 / (c.tp + c.fn_) as f64
    };
    let f = if c.tp == 0 {
        0.0
    } else {
        2.0 * c.tp as f64 / (2 * c.tp + c.fp + c.fn_) as f64
    };
    (p, r, f)
}

/// Marks the first `k` entries of a ranking as predicted positive.
pub fn top_k_predictions(len: usize, k: usize) -> Vec<bool> {
    (0..len).map(|i| i < k).collect()
}

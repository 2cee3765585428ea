//! Energy-based density-ratio scoring.
//!
//! Two energy networks are trained by maximum likelihood: `g_p` on the
//! labelled positives and `g_q` on every document. With
//! `p(x) ∝ exp(−g_p(x))` and `q(x) ∝ exp(−g_q(x))`, the log-ratio
//! `log p(x) − log q(x)` equals `g_q(x) − g_p(x)` plus a constant involving
//! the partition functions and the class prior. That constant moves every
//! score by the same amount, so the score is simply `g_q(x) − g_p(x)`.
//!
//! The likelihood gradient needs expectations under the model, which come
//! from short Langevin chains ([`langevin`]). An auxiliary LP-vs-U
//! classification risk on the score anchors the shared offset and stabilizes
//! training ([`train`]).

pub mod langevin;
pub mod train;

pub use langevin::{
    initial_states, langevin_sample, langevin_step, InitPolicy, LangevinConfig, NoiseScale,
    ReplayBuffer,
};
pub use train::{
    mle_grad, train_on_arrays, train_pude_em, EmEpoch, EmTrainConfig, GammaSchedule, TrainedEm,
};

use crate::binio::Reader;
use crate::neural::checkpoint::{read_net, write_net};
use crate::neural::{DenseNet, Mode, NeuralError};
use byteorder::{LittleEndian, WriteBytesExt};
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum EbmError {
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("energy input has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("energy network must have a single output, found {0}")]
    NotScalar(usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("Langevin chain left the finite range at step {step}")]
    Sampling { step: usize },
    #[error("non-finite {component} at epoch {epoch}: {detail}")]
    Diverged {
        epoch: usize,
        component: &'static str,
        detail: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// A scalar energy with an input gradient, evaluated row-wise.
pub trait EnergyFunction {
    fn dim(&self) -> usize;

    fn energies(&self, x: ArrayView2<f64>) -> Result<Vec<f64>, EbmError>;

    /// `∂E/∂x` for each row.
    fn input_gradients(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, EbmError>;
}

impl EnergyFunction for DenseNet {
    fn dim(&self) -> usize {
        self.input_dim()
    }

    fn energies(&self, x: ArrayView2<f64>) -> Result<Vec<f64>, EbmError> {
        if self.output_dim() != 1 {
            return Err(EbmError::NotScalar(self.output_dim()));
        }
        Ok(self.predict(x)?.column(0).to_vec())
    }

    fn input_gradients(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, EbmError> {
        if self.output_dim() != 1 {
            return Err(EbmError::NotScalar(self.output_dim()));
        }
        let (_, cache) = self.forward_pass(x, Mode::Eval)?;
        Ok(self.input_gradient(&cache, Array2::ones((x.nrows(), 1)).view())?)
    }
}

/// `E(x) = ‖x‖² / 2`; its Boltzmann distribution is the standard normal.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticEnergy {
    pub dim: usize,
}

impl EnergyFunction for QuadraticEnergy {
    fn dim(&self) -> usize {
        self.dim
    }

    fn energies(&self, x: ArrayView2<f64>) -> Result<Vec<f64>, EbmError> {
        check_dim(self.dim, x.ncols())?;
        Ok(x.rows().into_iter().map(|r| 0.5 * r.dot(&r)).collect())
    }

    fn input_gradients(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, EbmError> {
        check_dim(self.dim, x.ncols())?;
        Ok(x.to_owned())
    }
}

fn check_dim(expected: usize, got: usize) -> Result<(), EbmError> {
    if expected != got {
        return Err(EbmError::Dimension { expected, got });
    }
    Ok(())
}

/// Energy of a single point.
pub fn energy(f: &dyn EnergyFunction, x: ArrayView1<f64>) -> Result<f64, EbmError> {
    check_dim(f.dim(), x.len())?;
    Ok(f.energies(x.insert_axis(Axis(0)))?[0])
}

const PAIR_MAGIC: &[u8; 4] = b"PUP1";
const PAIR_VERSION: u32 = 1;

/// The two trained energy networks.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyPair {
    g_p: DenseNet,
    g_q: DenseNet,
}

impl EnergyPair {
    pub fn new(g_p: DenseNet, g_q: DenseNet) -> Result<Self, EbmError> {
        for net in [&g_p, &g_q] {
            if net.output_dim() != 1 {
                return Err(EbmError::NotScalar(net.output_dim()));
            }
        }
        check_dim(g_q.input_dim(), g_p.input_dim())?;
        Ok(Self { g_p, g_q })
    }

    pub fn dim(&self) -> usize {
        self.g_p.input_dim()
    }

    /// Energy of the positive-data model.
    pub fn g_p(&self) -> &DenseNet {
        &self.g_p
    }

    /// Energy of the whole-data model.
    pub fn g_q(&self) -> &DenseNet {
        &self.g_q
    }

    /// `g_q(x) − g_p(x)`; larger means more likely positive.
    pub fn score_em(&self, x: ArrayView1<f64>) -> Result<f64, EbmError> {
        check_dim(self.dim(), x.len())?;
        Ok(self.score_batch(x.insert_axis(Axis(0)))?[0])
    }

    pub fn score_batch(&self, x: ArrayView2<f64>) -> Result<Vec<f64>, EbmError> {
        check_dim(self.dim(), x.ncols())?;
        let q = self.g_q.energies(x)?;
        let p = self.g_p.energies(x)?;
        Ok(q.iter().zip(&p).map(|(q, p)| q - p).collect())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(PAIR_MAGIC);
        out.write_u32::<LittleEndian>(PAIR_VERSION).unwrap();
        out.write_u32::<LittleEndian>(self.dim() as u32).unwrap();
        write_net(&self.g_p, &mut out);
        write_net(&self.g_q, &mut out);
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self, EbmError> {
        let ck = |e: std::io::Error| EbmError::Checkpoint(e.to_string());
        let mut r = Reader::new(buf);
        r.magic(PAIR_MAGIC).map_err(ck)?;
        let version = r.u32().map_err(ck)?;
        if version != PAIR_VERSION {
            return Err(EbmError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let dim = r.u32().map_err(ck)? as usize;
        let pair = Self::new(read_net(&mut r)?, read_net(&mut r)?)?;
        if pair.dim() != dim || r.remaining() != 0 {
            return Err(EbmError::Checkpoint(
                "pair header disagrees with payload".into(),
            ));
        }
        Ok(pair)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EbmError> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|source| EbmError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EbmError> {
        let path = path.as_ref();
        let buf = std::fs::read(path).map_err(|source| EbmError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::decode(&buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Activation, Layer, NetSpec};
    use ndarray::{array, Array1};

    fn sum_energy() -> DenseNet {
        DenseNet::from_layers(vec![Layer {
            weight: array![[1.0, 1.0]],
            bias: Array1::zeros(1),
            batch_norm: None,
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    #[test]
    fn linear_energy_hand_value() {
        let net = sum_energy();
        assert_eq!(energy(&net, array![1.0, 2.0].view()).unwrap(), 3.0);
        assert!(energy(&net, array![1.0].view()).is_err());
        let g = net
            .input_gradients(array![[1.0, 2.0], [0.0, 0.0]].view())
            .unwrap();
        assert_eq!(g, array![[1.0, 1.0], [1.0, 1.0]]);
    }

    #[test]
    fn batch_energy_matches_rows() {
        let net = DenseNet::init(
            &NetSpec {
                input: 3,
                hidden: vec![8, 8],
                output: 1,
                batch_norm: false,
            },
            4,
        )
        .unwrap();
        let x = Array2::from_shape_fn((6, 3), |(i, j)| (i as f64 - j as f64) * 0.4);
        let batch = net.energies(x.view()).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            assert_eq!(energy(&net, row).unwrap(), batch[i]);
        }
        assert_eq!(batch, net.energies(x.view()).unwrap());
    }

    #[test]
    fn vector_output_is_not_an_energy() {
        let net = DenseNet::init(
            &NetSpec {
                input: 2,
                hidden: vec![],
                output: 2,
                batch_norm: false,
            },
            0,
        )
        .unwrap();
        assert!(matches!(
            net.energies(Array2::zeros((1, 2)).view()),
            Err(EbmError::NotScalar(2))
        ));
        assert!(EnergyPair::new(net.clone(), net).is_err());
    }

    #[test]
    fn identical_nets_score_zero_and_offsets_shift_uniformly() {
        let spec = NetSpec {
            input: 2,
            hidden: vec![6],
            output: 1,
            batch_norm: false,
        };
        let net = DenseNet::init(&spec, 1).unwrap();
        let pair = EnergyPair::new(net.clone(), net.clone()).unwrap();
        let x = Array2::from_shape_fn((10, 2), |(i, j)| (i * 2 + j) as f64 * 0.3 - 2.0);
        assert!(pair
            .score_batch(x.view())
            .unwrap()
            .iter()
            .all(|&s| s == 0.0));

        let other = DenseNet::init(&spec, 2).unwrap();
        let base = EnergyPair::new(net.clone(), other.clone()).unwrap();
        let mut shifted_q = other;
        shifted_q.layers_mut()[1].bias[0] += 2.5;
        let shifted = EnergyPair::new(net, shifted_q).unwrap();
        let a = base.score_batch(x.view()).unwrap();
        let b = shifted.score_batch(x.view()).unwrap();
        for (a, b) in a.iter().zip(&b) {
            assert!((b - a - 2.5).abs() < 1e-12);
        }
        let rank = |s: &[f64]| {
            let mut idx: Vec<usize> = (0..s.len()).collect();
            idx.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
            idx
        };
        assert_eq!(rank(&a), rank(&b));
    }

    #[test]
    fn pair_checkpoint_round_trip() {
        let spec = NetSpec {
            input: 3,
            hidden: vec![4],
            output: 1,
            batch_norm: true,
        };
        let pair = EnergyPair::new(
            DenseNet::init(&spec, 1).unwrap(),
            DenseNet::init(&spec, 2).unwrap(),
        )
        .unwrap();
        assert_eq!(EnergyPair::decode(&pair.encode()).unwrap(), pair);
        let mut bad = pair.encode();
        bad[0] = b'X';
        assert!(EnergyPair::decode(&bad).is_err());
    }
}

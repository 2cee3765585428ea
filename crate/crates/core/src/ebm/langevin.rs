//! Unadjusted Langevin dynamics on an energy surface:
//! `x ← x − (ε/2)·∇E(x) + ξ`, `ξ ~ N(0, ε)`.

use super::{EbmError, EnergyFunction};
use crate::rng::{self, Rng};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitPolicy {
    /// Uniform over the bounding box of the reference data.
    Noise,
    /// The current training batch plus small Gaussian noise.
    Data,
    /// Chains resumed from a replay buffer.
    Persistent,
}

/// How the `ε` in `N(0, ε)` is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseScale {
    /// Noise variance ε (standard deviation √ε).
    Variance,
    /// Noise standard deviation ε.
    StdDev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LangevinConfig {
    pub step_size: f64,
    pub steps: usize,
    pub init: InitPolicy,
    pub noise_scale: NoiseScale,
    /// Standard deviation of the perturbation for [`InitPolicy::Data`].
    pub data_noise_std: f64,
    pub buffer_size: usize,
    /// Fraction of persistent chains restarted from noise on each draw.
    pub reinit_fraction: f64,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        Self {
            step_size: 0.01,
            steps: 20,
            init: InitPolicy::Data,
            noise_scale: NoiseScale::Variance,
            data_noise_std: 0.1,
            buffer_size: 10_000,
            reinit_fraction: 0.05,
        }
    }
}

impl LangevinConfig {
    pub fn validate(&self) -> Result<(), EbmError> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(EbmError::Config(format!(
                "step size {} must be > 0",
                self.step_size
            )));
        }
        if self.steps == 0 {
            return Err(EbmError::Config("Langevin needs at least one step".into()));
        }
        if self.data_noise_std.is_nan()
            || self.data_noise_std < 0.0
            || !(0.0..=1.0).contains(&self.reinit_fraction)
        {
            return Err(EbmError::Config(
                "invalid initialization noise settings".into(),
            ));
        }
        if self.init == InitPolicy::Persistent && self.buffer_size == 0 {
            return Err(EbmError::Config(
                "persistent chains need a non-empty buffer".into(),
            ));
        }
        Ok(())
    }

    pub fn noise_std(&self) -> f64 {
        match self.noise_scale {
            NoiseScale::Variance => self.step_size.sqrt(),
            NoiseScale::StdDev => self.step_size,
        }
    }
}

/// One update of every chain (row of `x`) with caller-supplied noise.
pub fn langevin_step(
    energy: &dyn EnergyFunction,
    x: &mut Array2<f64>,
    step_size: f64,
    noise: ArrayView2<f64>,
) -> Result<(), EbmError> {
    let grad = energy.input_gradients(x.view())?;
    x.scaled_add(-0.5 * step_size, &grad);
    *x += &noise;
    Ok(())
}

pub(crate) fn run_chains(
    energy: &dyn EnergyFunction,
    cfg: &LangevinConfig,
    mut x: Array2<f64>,
    rng: &mut Rng,
) -> Result<Array2<f64>, EbmError> {
    cfg.validate()?;
    if x.ncols() != energy.dim() {
        return Err(EbmError::Dimension {
            expected: energy.dim(),
            got: x.ncols(),
        });
    }
    let std = cfg.noise_std();
    for step in 0..cfg.steps {
        let noise = Array2::from_shape_simple_fn(x.raw_dim(), || {
            std * Distribution::<f64>::sample(&StandardNormal, rng)
        });
        langevin_step(energy, &mut x, cfg.step_size, noise.view())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(EbmError::Sampling { step });
        }
    }
    Ok(x)
}

/// Runs `cfg.steps` Langevin updates from `init` (one chain per row) and
/// returns the final states.
pub fn langevin_sample(
    energy: &dyn EnergyFunction,
    cfg: &LangevinConfig,
    init: Array2<f64>,
    seed: u64,
) -> Result<Array2<f64>, EbmError> {
    let mut rng = rng::seeded(seed);
    run_chains(energy, cfg, init, &mut rng)
}

fn bounding_box(pool: ArrayView2<f64>) -> (Array1<f64>, Array1<f64>) {
    let lo = pool.fold_axis(Axis(0), f64::INFINITY, |&a, &b| a.min(b));
    let hi = pool.fold_axis(Axis(0), f64::NEG_INFINITY, |&a, &b| a.max(b));
    (lo, hi)
}

fn uniform_in_box(lo: &Array1<f64>, hi: &Array1<f64>, count: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_fn((count, lo.len()), |(_, j)| {
        if hi[j] > lo[j] {
            rng.random_range(lo[j]..hi[j])
        } else {
            lo[j]
        }
    })
}

/// Chain starting points for the non-persistent policies. `Data` cycles
/// through the rows of `pool` in order and perturbs them.
pub fn initial_states(
    policy: InitPolicy,
    pool: ArrayView2<f64>,
    count: usize,
    data_noise_std: f64,
    rng: &mut impl rand::Rng,
) -> Result<Array2<f64>, EbmError> {
    if pool.nrows() == 0 {
        return Err(EbmError::EmptyBatch);
    }
    let mut local = rng::seeded(rng.random());
    Ok(match policy {
        InitPolicy::Noise | InitPolicy::Persistent => {
            let (lo, hi) = bounding_box(pool);
            uniform_in_box(&lo, &hi, count, &mut local)
        }
        InitPolicy::Data => {
            let normal =
                Normal::new(0.0, data_noise_std).map_err(|e| EbmError::Config(e.to_string()))?;
            Array2::from_shape_fn((count, pool.ncols()), |(i, j)| {
                pool[[i % pool.nrows(), j]] + normal.sample(&mut local)
            })
        }
    })
}

/// Persistent chain states, initialized uniformly over a bounding box.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    states: Array2<f64>,
    lo: Array1<f64>,
    hi: Array1<f64>,
}

impl ReplayBuffer {
    pub fn new(
        pool: ArrayView2<f64>,
        size: usize,
        rng: &mut impl rand::Rng,
    ) -> Result<Self, EbmError> {
        if pool.nrows() == 0 || size == 0 {
            return Err(EbmError::EmptyBatch);
        }
        let (lo, hi) = bounding_box(pool);
        let mut local = rng::seeded(rng.random());
        let states = uniform_in_box(&lo, &hi, size, &mut local);
        Ok(Self { states, lo, hi })
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    /// Draws `count` stored states; each is replaced by fresh noise with
    /// probability `reinit_fraction`.
    pub fn draw(
        &self,
        count: usize,
        reinit_fraction: f64,
        rng: &mut impl rand::Rng,
    ) -> (Vec<usize>, Array2<f64>) {
        let idx: Vec<usize> = (0..count)
            .map(|_| rng.random_range(0..self.len()))
            .collect();
        let mut out = self.states.select(Axis(0), &idx);
        let mut local = rng::seeded(rng.random());
        for mut row in out.rows_mut() {
            if local.random::<f64>() < reinit_fraction {
                row.assign(&uniform_in_box(&self.lo, &self.hi, 1, &mut local).row(0));
            }
        }
        (idx, out)
    }

    pub fn store(&mut self, indices: &[usize], samples: ArrayView2<f64>) {
        for (&i, row) in indices.iter().zip(samples.rows()) {
            self.states.row_mut(i).assign(&row);
        }
    }
}

use crate::CliError;
use clap::{Args, ValueEnum};
use pude::baselines::{Bm25Params, NnpuConfig};
use pude::ebm::{EmTrainConfig, GammaSchedule, InitPolicy};
use pude::eval::{Bm25Spec, MethodSpec};
use pude::kde::KdeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    PudeKde,
    PudeEm,
    Nnpu,
    Bm25,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::PudeKde => "pude-kde",
            Self::PudeEm => "pude-em",
            Self::Nnpu => "nnpu",
            Self::Bm25 => "bm25",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Schedule {
    Constant,
    Linear,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Init {
    Noise,
    Data,
    Persistent,
}

/// Hyperparameter overrides. Unset flags keep the method defaults; a flag
/// that does not apply to the chosen method is a usage error.
#[derive(Debug, Clone, Default, Args)]
pub struct HyperArgs {
    /// Class prior of U. Required by nnpu, rejected by every other method.
    #[arg(long)]
    pub prior: Option<f64>,
    /// KDE bandwidth for both densities [pude-kde].
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Reduce inputs wider than this with a VAE first [pude-kde].
    #[arg(long)]
    pub reduce_above_dim: Option<usize>,
    /// Initial classification-risk weight [pude-em].
    #[arg(long)]
    pub gamma0: Option<f64>,
    #[arg(long, value_enum)]
    pub gamma_schedule: Option<Schedule>,
    /// Positive-likelihood weight [pude-em].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Whole-data likelihood weight [pude-em].
    #[arg(long)]
    pub beta: Option<f64>,
    /// Langevin step size ε [pude-em].
    #[arg(long)]
    pub step_size: Option<f64>,
    /// Langevin steps per sample [pude-em].
    #[arg(long)]
    pub langevin_steps: Option<usize>,
    #[arg(long, value_enum)]
    pub init: Option<Init>,
    /// Training epochs [pude-em, nnpu].
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Comma-separated hidden widths [pude-em, nnpu].
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub batch_norm: Option<bool>,
    /// BM25 term-frequency saturation [bm25].
    #[arg(long)]
    pub k1: Option<f64>,
    /// BM25 length normalization [bm25].
    #[arg(long)]
    pub b: Option<f64>,
    /// Largest K of the BM25 top-K sweep [bm25].
    #[arg(long)]
    pub sweep_max: Option<usize>,
}

impl HyperArgs {
    fn given(&self) -> Vec<(&'static str, &'static [Method])> {
        use Method::*;
        const EM: &[Method] = &[PudeEm];
        const NET: &[Method] = &[PudeEm, Nnpu];
        let mut out = Vec::new();
        let mut flag = |set: bool, name, methods| {
            if set {
                out.push((name, methods));
            }
        };
        flag(self.prior.is_some(), "--prior", &[Nnpu][..]);
        flag(self.bandwidth.is_some(), "--bandwidth", &[PudeKde]);
        flag(
            self.reduce_above_dim.is_some(),
            "--reduce-above-dim",
            &[PudeKde],
        );
        flag(self.gamma0.is_some(), "--gamma0", EM);
        flag(self.gamma_schedule.is_some(), "--gamma-schedule", EM);
        flag(self.alpha.is_some(), "--alpha", EM);
        flag(self.beta.is_some(), "--beta", EM);
        flag(self.step_size.is_some(), "--step-size", EM);
        flag(self.langevin_steps.is_some(), "--langevin-steps", EM);
        flag(self.init.is_some(), "--init", EM);
        flag(self.epochs.is_some(), "--epochs", NET);
        flag(self.batch_size.is_some(), "--batch-size", NET);
        flag(self.learning_rate.is_some(), "--learning-rate", NET);
        flag(self.hidden.is_some(), "--hidden", NET);
        flag(self.batch_norm.is_some(), "--batch-norm", NET);
        flag(self.k1.is_some(), "--k1", &[Bm25]);
        flag(self.b.is_some(), "--b", &[Bm25]);
        flag(self.sweep_max.is_some(), "--sweep-max", &[Bm25]);
        out
    }

    /// Copy keeping only the flags that apply to `method`.
    fn restricted(&self, method: Method) -> HyperArgs {
        use Method::*;
        let mut h = self.clone();
        if method != Nnpu {
            h.prior = None;
        }
        if method != PudeKde {
            h.bandwidth = None;
            h.reduce_above_dim = None;
        }
        if method != PudeEm {
            h.gamma0 = None;
            h.gamma_schedule = None;
            h.alpha = None;
            h.beta = None;
            h.step_size = None;
            h.langevin_steps = None;
            h.init = None;
        }
        if !matches!(method, PudeEm | Nnpu) {
            h.epochs = None;
            h.batch_size = None;
            h.learning_rate = None;
            h.hidden = None;
            h.batch_norm = None;
        }
        if method != Bm25 {
            h.k1 = None;
            h.b = None;
            h.sweep_max = None;
        }
        h
    }

    /// One spec per method; every given flag must apply to at least one.
    pub fn specs(&self, methods: &[Method]) -> Result<Vec<MethodSpec>, CliError> {
        for (flag, applies) in self.given() {
            if !methods.iter().any(|m| applies.contains(m)) {
                return Err(CliError::Config(format!(
                    "{flag} applies to none of the chosen methods"
                )));
            }
        }
        methods
            .iter()
            .map(|&m| self.restricted(m).spec(m))
            .collect()
    }

    /// Builds a validated method spec from the defaults plus overrides.
    pub fn spec(&self, method: Method) -> Result<MethodSpec, CliError> {
        for (flag, methods) in self.given() {
            if !methods.contains(&method) {
                return Err(if flag == "--prior" {
                    CliError::Config(format!(
                        "{} does not take a class prior; only nnpu accepts --prior",
                        method.name()
                    ))
                } else {
                    CliError::Config(format!("{flag} does not apply to {}", method.name()))
                });
            }
        }
        let config = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        let spec = match method {
            Method::PudeKde => {
                let mut c = KdeConfig::default();
                if let Some(h) = self.bandwidth {
                    if !(h > 0.0 && h.is_finite()) {
                        return Err(CliError::Config(format!("bandwidth {h} must be > 0")));
                    }
                    c.bandwidth_p = h;
                    c.bandwidth_q = h;
                }
                if let Some(d) = self.reduce_above_dim {
                    c.reduce_above_dim = d;
                }
                MethodSpec::PudeKde(c)
            }
            Method::PudeEm => {
                let mut c = EmTrainConfig::default();
                set(&mut c.gamma0, self.gamma0);
                set(&mut c.alpha, self.alpha);
                set(&mut c.beta, self.beta);
                if let Some(s) = self.gamma_schedule {
                    c.gamma_schedule = match s {
                        Schedule::Constant => GammaSchedule::Constant,
                        Schedule::Linear => GammaSchedule::Linear,
                        Schedule::Exponential => GammaSchedule::Exponential,
                    };
                }
                set(&mut c.langevin.step_size, self.step_size);
                set(&mut c.langevin.steps, self.langevin_steps);
                if let Some(i) = self.init {
                    c.langevin.init = match i {
                        Init::Noise => InitPolicy::Noise,
                        Init::Data => InitPolicy::Data,
                        Init::Persistent => InitPolicy::Persistent,
                    };
                }
                set(&mut c.epochs, self.epochs);
                set(&mut c.batch_size, self.batch_size);
                set(&mut c.learning_rate, self.learning_rate);
                set(&mut c.hidden, self.hidden.clone());
                set(&mut c.batch_norm, self.batch_norm);
                c.validate().map_err(|e| config(&e))?;
                MethodSpec::PudeEm(c)
            }
            Method::Nnpu => {
                let prior = self.prior.ok_or_else(|| {
                    CliError::Config("nnpu needs the class prior of U: pass --prior".into())
                })?;
                let mut c = NnpuConfig::with_prior(prior);
                set(&mut c.epochs, self.epochs);
                set(&mut c.batch_size, self.batch_size);
                set(&mut c.learning_rate, self.learning_rate);
                set(&mut c.hidden, self.hidden.clone());
                set(&mut c.batch_norm, self.batch_norm);
                c.validate().map_err(|e| config(&e))?;
                MethodSpec::Nnpu(c)
            }
            Method::Bm25 => {
                let mut c = Bm25Spec::default();
                set(&mut c.k1, self.k1);
                set(&mut c.b, self.b);
                set(&mut c.sweep_max, self.sweep_max);
                Bm25Params { k1: c.k1, b: c.b }
                    .validate()
                    .map_err(|e| config(&e))?;
                MethodSpec::Bm25(c)
            }
        };
        Ok(spec)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

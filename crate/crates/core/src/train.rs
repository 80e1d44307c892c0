//! IGANN training loop.
//!
//! Each epoch draws one fresh batch, takes one Adam step on the IGANN loss
//! and then anneals beta and the learning rate. Single-threaded runs are
//! bit-reproducible, including across a save/resume boundary.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{igann_loss_and_grad, AnnealSchedule, LossTerms};
use crate::network::{Activation, Architecture, FieldNetwork, Init, ParamVector};
use crate::sampling::{self, lhs_sample_with, SampleSource, WalkerState};
use crate::scalar::Scalar;
use crate::systems::{self, SystemSpec};

/// `lr_min + (lr_max - lr_min) (1 + cos(pi e / (E - 1))) / 2`; a single
/// epoch runs at `lr_max`.
pub fn cosine_lr(epoch: usize, epochs: usize, lr_max: f64, lr_min: f64) -> f64 {
    if epochs <= 1 {
        return lr_max;
    }
    let t = epoch as f64 / (epochs - 1) as f64;
    lr_min + (lr_max - lr_min) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Optimizer {
    Adam {
        #[serde(default = "defaults::beta1")]
        beta1: f64,
        #[serde(default = "defaults::beta2")]
        beta2: f64,
        #[serde(default = "defaults::adam_eps")]
        eps: f64,
    },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// Bias-corrected Adam step. Moments are kept in `f64` regardless of `S`.
pub fn adam_update<S: Scalar>(params: &mut [S], grad: &[S], state: &mut AdamState, opt: &Optimizer, lr: f64) {
    let Optimizer::Adam { beta1, beta2, eps } = *opt;
    state.t += 1;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        let g = g.to_f64_lossy();
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let step = lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        *p -= S::c(step);
    }
}

mod defaults {
    pub fn widths() -> Vec<usize> {
        vec![64; 4]
    }
    pub fn batch_size() -> usize {
        2000
    }
    pub fn beta0() -> f64 {
        10.0
    }
    pub fn beta_decay() -> f64 {
        4e-4
    }
    pub fn lr_max() -> f64 {
        1e-3
    }
    pub fn lr_min() -> f64 {
        1e-6
    }
    pub fn checkpoint_every() -> usize {
        1000
    }
    pub fn workers() -> usize {
        1
    }
    pub fn steps_per_epoch() -> usize {
        100
    }
    pub fn beta1() -> f64 {
        0.9
    }
    pub fn beta2() -> f64 {
        0.999
    }
    pub fn adam_eps() -> f64 {
        1e-8
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    #[serde(default = "defaults::widths")]
    pub hidden_widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub init: Init,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            hidden_widths: defaults::widths(),
            activation: Activation::default(),
            init: Init::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: SampleSource,
    /// Euler-Maruyama step; `None` picks the per-system default.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "defaults::steps_per_epoch")]
    pub steps_per_epoch: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            kind: SampleSource::Lhs,
            dt: None,
            steps_per_epoch: defaults::steps_per_epoch(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub system_id: String,
    pub epsilon: f64,
    #[serde(default)]
    pub arch: ArchConfig,
    /// `None`: 20000 for d <= 2, 30000 above.
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default = "defaults::beta0")]
    pub beta0: f64,
    #[serde(default = "defaults::beta_decay")]
    pub beta_decay: f64,
    #[serde(default = "defaults::lr_max")]
    pub lr_max: f64,
    #[serde(default = "defaults::lr_min")]
    pub lr_min: f64,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default)]
    pub seed: u64,
    /// 0 disables intermediate checkpoints.
    #[serde(default = "defaults::checkpoint_every")]
    pub checkpoint_every: usize,
    #[serde(default = "defaults::workers")]
    pub workers: usize,
}

impl TrainConfig {
    pub fn new(system_id: &str, epsilon: f64) -> Self {
        Self {
            system_id: system_id.into(),
            epsilon,
            arch: ArchConfig::default(),
            epochs: None,
            batch_size: defaults::batch_size(),
            sampler: SamplerConfig::default(),
            beta0: defaults::beta0(),
            beta_decay: defaults::beta_decay(),
            lr_max: defaults::lr_max(),
            lr_min: defaults::lr_min(),
            optimizer: Optimizer::default(),
            seed: 0,
            checkpoint_every: defaults::checkpoint_every(),
            workers: defaults::workers(),
        }
    }

    pub fn system(&self) -> Result<SystemSpec> {
        systems::by_id(&self.system_id, self.epsilon)
    }

    pub fn architecture(&self, dim: usize) -> Result<Architecture> {
        let arch = Architecture {
            input_dim: dim,
            hidden_widths: self.arch.hidden_widths.clone(),
            activation: self.arch.activation,
            init: self.arch.init,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn resolved_epochs(&self, dim: usize) -> usize {
        self.epochs.unwrap_or(if dim <= 2 { 20_000 } else { 30_000 })
    }

    pub fn validate(&self) -> Result<SystemSpec> {
        let system = self.system()?;
        self.architecture(system.dim)?;
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.resolved_epochs(system.dim) == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr_min > 0.0 && self.lr_min <= self.lr_max) {
            return bad(format!("need 0 < lr_min <= lr_max, got {} and {}", self.lr_min, self.lr_max));
        }
        AnnealSchedule::new(self.beta0, self.beta_decay)?;
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if let Some(dt) = self.sampler.dt {
            if !(dt > 0.0) {
                return bad(format!("sampler.dt must be positive, got {dt}"));
            }
        }
        let Optimizer::Adam { beta1, beta2, eps } = self.optimizer;
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
            return bad("Adam needs 0 <= beta1, beta2 < 1 and eps > 0".into());
        }
        Ok(system)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub loss: f64,
    pub pde: f64,
    pub penalty: f64,
    pub beta: f64,
    pub lr: f64,
    /// Wall-clock seconds since the start of training.
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
}

pub const TRACE_HEADER: &str = "epoch,loss,pde,penalty,beta,lr,seconds";

impl TrainTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 1));
        s.push_str(TRACE_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:e},{:e},{:e},{:.6}",
                r.epoch, r.loss, r.pde, r.penalty, r.beta, r.lr, r.seconds
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(TRACE_HEADER) {
            return Err(Error::InvalidArgument(format!("trace must start with `{TRACE_HEADER}`")));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let num = |k: usize| -> Result<f64> {
                f.get(k)
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("trace line {}: bad column {k}", i + 2)))
            };
            rows.push(TraceRow {
                epoch: num(0)? as usize,
                loss: num(1)?,
                pde: num(2)?,
                penalty: num(3)?,
                beta: num(4)?,
                lr: num(5)?,
                seconds: num(6)?,
            });
        }
        Ok(Self { rows })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub config: TrainConfig,
    /// Next epoch to run.
    pub epoch: usize,
    pub params: Vec<f64>,
    pub adam: AdamState,
    pub walkers: Option<WalkerState>,
    pub trace: TrainTrace,
    pub elapsed: f64,
}

impl TrainState {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Hooks called from the training loop.
pub trait TrainObserver {
    fn epoch(&mut self, _row: &TraceRow) {}

    /// Called every `checkpoint_every` epochs with the resumable state.
    fn checkpoint(&mut self, _state: &TrainState) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

pub struct TrainOutcome<S> {
    pub network: FieldNetwork<S>,
    pub trace: TrainTrace,
    pub state: TrainState,
}

/// Initial state: He-uniform parameters and, for the SDE sampler, walkers
/// started from a Latin hypercube.
pub fn initial_state(config: &TrainConfig) -> Result<TrainState> {
    let system = config.validate()?;
    let arch = config.architecture(system.dim)?;
    let net = FieldNetwork::<f64>::init(arch, config.seed)?;
    let walkers = match config.sampler.kind {
        SampleSource::Lhs => None,
        SampleSource::Sde => {
            let dt = config.sampler.dt.unwrap_or_else(|| sampling::default_dt(&system));
            Some(WalkerState::from_lhs(&system, config.batch_size, dt, config.seed)?)
        }
    };
    let n = net.params().len();
    Ok(TrainState {
        config: config.clone(),
        epoch: 0,
        params: net.into_params().0,
        adam: AdamState::new(n),
        walkers,
        trace: TrainTrace::default(),
        elapsed: 0.0,
    })
}

pub fn train<S: Scalar>(config: &TrainConfig, observer: &mut dyn TrainObserver) -> Result<TrainOutcome<S>> {
    resume(initial_state(config)?, observer)
}

/// Runs the remaining epochs of `state`.
pub fn resume<S: Scalar>(state: TrainState, observer: &mut dyn TrainObserver) -> Result<TrainOutcome<S>> {
    resume_until(state, usize::MAX, observer)
}

/// Like [`resume`] but stops once `stop` epochs are done. The schedules
/// still follow the configured epoch count, so a run split this way is
/// identical to an uninterrupted one.
pub fn resume_until<S: Scalar>(
    mut state: TrainState,
    stop: usize,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome<S>> {
    let config = state.config.clone();
    let system = config.validate()?;
    let arch = config.architecture(system.dim)?;
    let epochs = config.resolved_epochs(system.dim);
    let stop = stop.min(epochs);
    let mut net = FieldNetwork::<S>::new(arch, ParamVector::from_f64(&state.params))?;
    if state.adam.m.len() != net.params().len() {
        return Err(Error::DimensionMismatch {
            what: "optimizer state",
            expected: net.params().len(),
            got: state.adam.m.len(),
        });
    }
    let mut last_checkpoint = None;
    let clock = Instant::now();
    let base_elapsed = state.elapsed;
    let mut batch_s: Vec<S> = Vec::new();

    while state.epoch < stop {
        let epoch = state.epoch;
        let points = match state.walkers.as_mut() {
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(epoch as u64 + 1);
                lhs_sample_with(&system.domain, config.batch_size, &mut rng)?.points
            }
            Some(w) => sampling::sde_batch(&system, w, config.sampler.steps_per_epoch, epoch)?.points,
        };
        batch_s.clear();
        batch_s.extend(points.iter().map(|&v| S::c(v)));

        let beta = AnnealSchedule::at(config.beta0, config.beta_decay, epoch as u64);
        let lr = cosine_lr(epoch, epochs, config.lr_max, config.lr_min);
        let (terms, grad): (LossTerms<S>, Vec<S>) =
            igann_loss_and_grad(&system, &net, &batch_s, S::c(beta), config.workers)?;
        let loss = terms.loss.to_f64_lossy();
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { epoch, last_checkpoint });
        }
        adam_update(net.params_mut(), &grad, &mut state.adam, &config.optimizer, lr);

        let row = TraceRow {
            epoch,
            loss,
            pde: terms.pde_term.to_f64_lossy(),
            penalty: terms.penalty_term.to_f64_lossy(),
            beta,
            lr,
            seconds: base_elapsed + clock.elapsed().as_secs_f64(),
        };
        state.trace.rows.push(row);
        observer.epoch(&row);
        state.epoch += 1;

        if config.checkpoint_every > 0 && state.epoch % config.checkpoint_every == 0 && state.epoch < stop {
            state.params = net.params().to_f64().0;
            state.elapsed = row.seconds;
            observer.checkpoint(&state)?;
            last_checkpoint = Some(state.epoch);
        }
    }
    state.params = net.params().to_f64().0;
    state.elapsed = base_elapsed + clock.elapsed().as_secs_f64();
    Ok(TrainOutcome {
        network: net,
        trace: state.trace.clone(),
        state,
    })
}

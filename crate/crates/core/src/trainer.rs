//! Wake-sleep training of a Helmholtz machine with an Ising prior.
//!
//! Each iteration infers hidden states for the data with the recognition
//! network (wake), fabricates samples from the prior and the generator
//! (sleep), and takes one gradient-ascent step on every parameter group.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::checkpoint::checkpoint_save;
use crate::embedding::{Embedding, DEFAULT_CHAIN_STRENGTH};
use crate::error::{check_len, QahmError, Result};
use crate::ising::{prior_gradient, IsingModel, MomentStats, PriorGradient};
use crate::nets::{DeepNetwork, Direction, LayerWidths, NetworkGradient};
use crate::quantum::{prior_log_partition, prior_probabilities};
use crate::rng::stream;
use crate::sampler::SamplerBackend;
use crate::spin::SpinVector;

const TAG_INIT: u64 = 1;
const TAG_SHUFFLE: u64 = 2;
const TAG_WAKE: u64 = 3;
const TAG_SLEEP: u64 = 4;
const TAG_FANTASY: u64 = 5;

/// Data points processed per parallel work unit; partial sums are reduced in
/// chunk order so results do not depend on the thread count.
const CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchMode {
    Full,
    Minibatch(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub epochs_phase1: usize,
    pub epochs_phase2: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Learning rate for `(J, h)` at the start of the schedule; `None` shares
    /// the network rate. Follows the same schedule shape.
    pub prior_lr: Option<f64>,
    pub sleep_samples: usize,
    pub batch: BatchMode,
    /// Recognition samples drawn per data point in the wake phase.
    pub wake_samples: usize,
    pub seed: u64,
    /// Write a checkpoint every this many epochs (0 disables).
    pub checkpoint_every: usize,
    pub chain_strength: f64,
    /// Clip `J` to `[-1, 1]` and `h` to `[-2, 2]` after each update.
    pub clip_prior: bool,
}

impl Default for TrainingConfig {
    /// 500 epochs at 0.005, then 500 epochs decaying linearly to 0.0005, with
    /// 1000 sleep samples per iteration and full-batch wake phases.
    fn default() -> Self {
        TrainingConfig {
            epochs_phase1: 500,
            epochs_phase2: 500,
            lr_start: 0.005,
            lr_end: 0.0005,
            prior_lr: None,
            sleep_samples: 1000,
            batch: BatchMode::Full,
            wake_samples: 1,
            seed: 0,
            checkpoint_every: 0,
            chain_strength: DEFAULT_CHAIN_STRENGTH,
            clip_prior: false,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(QahmError::InvalidParameter(m.to_string()));
        if !(self.lr_start > 0.0 && self.lr_end > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.lr_end > self.lr_start {
            return bad("lr_end must not exceed lr_start");
        }
        if self.sleep_samples == 0 || self.wake_samples == 0 {
            return bad("sleep_samples and wake_samples must be at least 1");
        }
        if self.batch == BatchMode::Minibatch(0) {
            return bad("minibatch size must be at least 1");
        }
        if self.prior_lr.is_some_and(|r| !(r >= 0.0)) {
            return bad("prior_lr must be nonnegative");
        }
        if !(self.chain_strength > 0.0) {
            return bad("chain_strength must be positive");
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs_phase1 + self.epochs_phase2
    }
}

/// Constant `lr_start` for `epochs_phase1` epochs, then linear interpolation
/// reaching `lr_end` at epoch `epochs_phase1 + epochs_phase2 - 1`.
pub fn lr_schedule(epoch: usize, config: &TrainingConfig) -> f64 {
    if epoch < config.epochs_phase1 || config.epochs_phase2 == 0 {
        return config.lr_start;
    }
    if config.epochs_phase2 == 1 {
        return config.lr_end;
    }
    let t = ((epoch - config.epochs_phase1) as f64 / (config.epochs_phase2 - 1) as f64).min(1.0);
    config.lr_start + (config.lr_end - config.lr_start) * t
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub recon_mse: f64,
    /// Monte-Carlo bound estimate, available when the prior is exactly evaluable.
    pub bound: Option<f64>,
    pub seconds: f64,
}

impl EpochMetrics {
    pub const CSV_HEADER: &'static str = "epoch,lr,recon_mse,bound,seconds";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch,
            self.lr,
            self.recon_mse,
            self.bound.map(|b| b.to_string()).unwrap_or_default(),
            self.seconds
        )
    }
}

/// All trainable state plus bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub recognition: DeepNetwork,
    pub generator: DeepNetwork,
    pub prior: IsingModel,
    pub embedding: Option<Embedding>,
    pub chain_strength: f64,
    /// Completed epochs.
    pub epoch: usize,
    pub metrics: Vec<EpochMetrics>,
    /// Persistent Metropolis chain states, when the backend keeps any.
    pub sampler_chains: Vec<Vec<f64>>,
}

impl TrainState {
    /// Random networks (weights uniform in `[-0.01, 0.01]`, zero biases) and a
    /// fully connected prior with zero parameters.
    pub fn init(widths: &LayerWidths, beta: f64, gamma: f64, embedding: Option<Embedding>, seed: u64) -> Result<Self> {
        let mut rng = stream(seed, &[TAG_INIT]);
        let recognition = DeepNetwork::random(Direction::Recognition, widths, &mut rng);
        let generator = DeepNetwork::random(Direction::Generator, widths, &mut rng);
        let prior = IsingModel::fully_connected(widths.deepest(), beta, gamma)?;
        Self::from_parts(recognition, generator, prior, embedding)
    }

    pub fn from_parts(
        recognition: DeepNetwork,
        generator: DeepNetwork,
        prior: IsingModel,
        embedding: Option<Embedding>,
    ) -> Result<Self> {
        if recognition.direction() != Direction::Recognition || generator.direction() != Direction::Generator {
            return Err(QahmError::Usage("networks passed in the wrong roles".into()));
        }
        if recognition.widths() != generator.widths() {
            return Err(QahmError::Usage(
                "recognition and generator widths must mirror each other".into(),
            ));
        }
        check_len("prior size", generator.widths().deepest(), prior.n())?;
        if let Some(e) = &embedding {
            check_len("embedded variables", prior.n(), e.logical_count())?;
        }
        Ok(TrainState {
            recognition,
            generator,
            prior,
            embedding,
            chain_strength: DEFAULT_CHAIN_STRENGTH,
            epoch: 0,
            metrics: Vec::new(),
            sampler_chains: Vec::new(),
        })
    }

    pub fn widths(&self) -> &LayerWidths {
        self.generator.widths()
    }

    /// `theta <- theta + lr * grad` for both networks and the prior.
    pub fn apply(&mut self, grad: &GradientEstimate, lr: f64, prior_lr: f64) -> Result<()> {
        self.generator.apply(&grad.generator, lr);
        self.recognition.apply(&grad.recognition, lr);
        self.prior.apply_gradient(&grad.prior, prior_lr)
    }

    fn check_finite(&self) -> Result<()> {
        let detail = if !self.generator.all_finite() {
            "generator"
        } else if !self.recognition.all_finite() {
            "recognition"
        } else if !self.prior.all_finite() {
            "prior"
        } else {
            return Ok(());
        };
        Err(QahmError::NonFinite {
            epoch: self.epoch,
            detail: format!("{detail} parameters"),
        })
    }

    /// Draws logical prior samples, decoding through the embedding if present.
    pub fn sample_prior<R: rand::Rng + ?Sized>(
        &self,
        backend: &mut SamplerBackend,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<SpinVector>> {
        match &self.embedding {
            None => backend.draw(&self.prior, n, rng),
            Some(e) => {
                let physical = e.program_hamiltonian(&self.prior, self.chain_strength)?;
                backend
                    .draw(&physical, n, rng)?
                    .iter()
                    .map(|z| e.majority_vote(z, rng))
                    .collect()
            }
        }
    }
}

/// Gradients for every parameter group of one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientEstimate {
    pub generator: NetworkGradient,
    pub recognition: NetworkGradient,
    pub prior: PriorGradient,
}

/// Result of the wake phase.
#[derive(Clone, Debug)]
pub struct WakeEstimate {
    /// Ascent direction for the generator.
    pub generator: NetworkGradient,
    /// Deepest-layer moments under `Q(u|v) Q_S(v)`.
    pub data_moments: MomentStats,
    /// Mean squared difference between data and the generator's visible means
    /// given the inferred `u^1`.
    pub recon_mse: f64,
    /// Mean of `ln P(v, h | u) + <u|ln rho|u> - ln Q(h, u | v)` over the wake
    /// samples; present when a log-partition function was supplied.
    pub bound: Option<f64>,
}

/// Result of the sleep phase.
#[derive(Clone, Debug)]
pub struct SleepEstimate {
    pub recognition: NetworkGradient,
    /// Deepest-layer moments of the prior samples.
    pub model_moments: MomentStats,
}

struct WakePartial {
    grad: NetworkGradient,
    moments: MomentStats,
    sq_err: f64,
    bound: f64,
}

/// Wake phase over `batch` (visible vectors). `tags` seed per-point streams.
pub fn wake_step(
    batch: &[Vec<f64>],
    state: &TrainState,
    samples_per_point: usize,
    log_partition: Option<f64>,
    seed: u64,
    tags: &[u64],
) -> Result<WakeEstimate> {
    if batch.is_empty() {
        return Err(QahmError::Usage("wake phase needs at least one data point".into()));
    }
    let samples_per_point = samples_per_point.max(1);
    let n = state.prior.n();
    let visible = state.widths().visible();
    let total = (batch.len() * samples_per_point) as f64;
    let weight = 1.0 / total;
    let partials: Vec<Result<WakePartial>> = batch
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut part = WakePartial {
                grad: NetworkGradient::zeros_like(&state.generator),
                moments: MomentStats::zeros(n),
                sq_err: 0.0,
                bound: 0.0,
            };
            for (k, v) in chunk.iter().enumerate() {
                check_len("visible vector", visible, v.len())?;
                let point = (c * CHUNK + k) as u64;
                for s in 0..samples_per_point {
                    let mut path = tags.to_vec();
                    path.extend([point, s as u64]);
                    let mut rng = stream(seed, &path);
                    let traj = state.recognition.recognition_pass(v, &mut rng)?;
                    part.grad.accumulate_generator(&state.generator, &traj, weight)?;
                    part.moments.accumulate(traj.deepest().as_slice(), 1.0);
                    let means = state.generator.visible_means(traj.hidden[0].as_slice())?;
                    part.sq_err += v.iter().zip(&means).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / visible as f64;
                    if let Some(log_z) = log_partition {
                        let log_prior = -state.prior.beta() * state.prior.energy(traj.deepest())? - log_z;
                        part.bound += state.generator.generator_log_prob(&traj)? + log_prior
                            - state.recognition.recognition_log_prob(&traj)?;
                    }
                }
            }
            Ok(part)
        })
        .collect();
    let mut generator = NetworkGradient::zeros_like(&state.generator);
    let mut data_moments = MomentStats::zeros(n);
    let (mut sq_err, mut bound) = (0.0, 0.0);
    for p in partials {
        let p = p?;
        generator.add_scaled(&p.grad, 1.0);
        data_moments.merge(&p.moments);
        sq_err += p.sq_err;
        bound += p.bound;
    }
    data_moments.finish(total);
    Ok(WakeEstimate {
        generator,
        data_moments,
        recon_mse: sq_err / total,
        bound: log_partition.map(|_| bound / total),
    })
}

/// Sleep phase: `n_samples` prior draws pushed through the generator.
pub fn sleep_step(
    state: &TrainState,
    backend: &mut SamplerBackend,
    n_samples: usize,
    seed: u64,
    tags: &[u64],
) -> Result<SleepEstimate> {
    let mut path = tags.to_vec();
    path.push(TAG_SLEEP);
    let mut rng = stream(seed, &path);
    let prior_samples = state.sample_prior(backend, n_samples, &mut rng)?;
    sleep_from_samples(state, &prior_samples, seed, tags)
}

/// Sleep phase from given deepest-layer samples.
pub fn sleep_from_samples(
    state: &TrainState,
    prior_samples: &[SpinVector],
    seed: u64,
    tags: &[u64],
) -> Result<SleepEstimate> {
    if prior_samples.is_empty() {
        return Err(QahmError::Usage("sleep phase needs at least one prior sample".into()));
    }
    let n = state.prior.n();
    let weight = 1.0 / prior_samples.len() as f64;
    let partials: Vec<Result<(NetworkGradient, MomentStats)>> = prior_samples
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut grad = NetworkGradient::zeros_like(&state.recognition);
            let mut moments = MomentStats::zeros(n);
            for (k, u) in chunk.iter().enumerate() {
                let mut path = tags.to_vec();
                path.extend([TAG_FANTASY, (c * CHUNK + k) as u64]);
                let mut rng = stream(seed, &path);
                let traj = state.generator.generator_pass(u, &mut rng)?;
                grad.accumulate_recognition(&state.recognition, &traj, weight)?;
                moments.accumulate(u.as_slice(), 1.0);
            }
            Ok((grad, moments))
        })
        .collect();
    let mut recognition = NetworkGradient::zeros_like(&state.recognition);
    let mut model_moments = MomentStats::zeros(n);
    for p in partials {
        let (g, m) = p?;
        recognition.add_scaled(&g, 1.0);
        model_moments.merge(&m);
    }
    model_moments.finish(prior_samples.len() as f64);
    Ok(SleepEstimate {
        recognition,
        model_moments,
    })
}

/// Exact expected wake gradient: every recognition trajectory weighted by
/// `Q(h, u | v) / |D|`. Needs an enumerable recognition network.
pub fn exact_wake_gradient(state: &TrainState, data: &[Vec<f64>]) -> Result<(NetworkGradient, MomentStats)> {
    let n = state.prior.n();
    let mut grad = NetworkGradient::zeros_like(&state.generator);
    let mut moments = MomentStats::zeros(n);
    let w = 1.0 / data.len() as f64;
    for v in data {
        for (hidden, q) in state.recognition.enumerate_recognition(v)? {
            let traj = crate::nets::Trajectory {
                visible: v.clone(),
                hidden,
            };
            grad.accumulate_generator(&state.generator, &traj, w * q)?;
            moments.accumulate(traj.deepest().as_slice(), w * q);
        }
    }
    moments.finish(1.0);
    Ok((grad, moments))
}

/// Exact expected sleep gradient: every generator trajectory weighted by its
/// joint probability under the exact prior.
pub fn exact_sleep_gradient(state: &TrainState) -> Result<(NetworkGradient, MomentStats)> {
    let n = state.prior.n();
    let probs = prior_probabilities(&state.prior)?;
    let mut grad = NetworkGradient::zeros_like(&state.recognition);
    for (k, &pu) in probs.iter().enumerate() {
        if pu == 0.0 {
            continue;
        }
        let u = SpinVector::from_index(k, n);
        for (traj, p) in state.generator.enumerate_generator(&u)? {
            grad.accumulate_recognition(&state.recognition, &traj, pu * p)?;
        }
    }
    Ok((grad, MomentStats::from_distribution(n, &probs)?))
}

/// Owns a training run: state, schedule, and the prior backend.
pub struct Trainer {
    pub state: TrainState,
    pub config: TrainingConfig,
    pub backend: SamplerBackend,
}

impl Trainer {
    pub fn new(mut state: TrainState, config: TrainingConfig, mut backend: SamplerBackend) -> Result<Self> {
        config.validate()?;
        state.chain_strength = config.chain_strength;
        if !state.sampler_chains.is_empty() {
            if let Some(m) = backend.metropolis_mut() {
                m.set_chain_states(state.sampler_chains.clone());
            }
        }
        Ok(Trainer { state, config, backend })
    }

    fn log_partition(&self) -> Option<f64> {
        if !self.backend.is_exact() || self.state.embedding.is_some() {
            return None;
        }
        prior_log_partition(&self.state.prior).ok()
    }

    fn prior_lr(&self, lr: f64) -> f64 {
        match self.config.prior_lr {
            None => lr,
            Some(p) => p * lr / self.config.lr_start,
        }
    }

    /// Runs one epoch and records its metrics.
    pub fn step_epoch(&mut self, data: &[Vec<f64>]) -> Result<EpochMetrics> {
        if data.is_empty() {
            return Err(QahmError::Usage("dataset is empty".into()));
        }
        let started = Instant::now();
        let epoch = self.state.epoch;
        let seed = self.config.seed;
        let lr = lr_schedule(epoch, &self.config);
        let prior_lr = self.prior_lr(lr);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let batch_size = match self.config.batch {
            BatchMode::Full => data.len(),
            BatchMode::Minibatch(b) => {
                order.shuffle(&mut stream(seed, &[TAG_SHUFFLE, epoch as u64]));
                b.min(data.len())
            }
        };
        let (mut recon, mut bound_sum, mut batches) = (0.0, 0.0, 0usize);
        let mut have_bound = true;
        for (b, ids) in order.chunks(batch_size).enumerate() {
            let tags = [TAG_WAKE, epoch as u64, b as u64];
            let batch: Vec<Vec<f64>> = ids.iter().map(|&i| data[i].clone()).collect();
            let log_z = self.log_partition();
            let wake = wake_step(&batch, &self.state, self.config.wake_samples, log_z, seed, &tags)?;
            let sleep = sleep_step(&self.state, &mut self.backend, self.config.sleep_samples, seed, &tags)?;
            let grad = GradientEstimate {
                generator: wake.generator,
                recognition: sleep.recognition,
                prior: prior_gradient(&wake.data_moments, &sleep.model_moments)?,
            };
            self.state.apply(&grad, lr, prior_lr)?;
            if self.config.clip_prior {
                self.state.prior.clip_to_hardware();
            }
            self.state.check_finite()?;
            recon += wake.recon_mse;
            match wake.bound {
                Some(v) => bound_sum += v,
                None => have_bound = false,
            }
            batches += 1;
        }
        if let Some(m) = self.backend.metropolis() {
            self.state.sampler_chains = m.chain_states().to_vec();
        }
        self.state.epoch += 1;
        let metrics = EpochMetrics {
            epoch,
            lr,
            recon_mse: recon / batches as f64,
            bound: have_bound.then(|| bound_sum / batches as f64),
            seconds: started.elapsed().as_secs_f64(),
        };
        debug!(
            "epoch {epoch}: lr {lr:.6} recon {:.5} bound {:?}",
            metrics.recon_mse, metrics.bound
        );
        self.state.metrics.push(metrics.clone());
        Ok(metrics)
    }

    /// Trains until `config.total_epochs()` epochs have completed, writing
    /// checkpoints into `checkpoint_dir` when configured.
    pub fn run(&mut self, data: &[Vec<f64>], checkpoint_dir: Option<&Path>) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let total = self.config.total_epochs();
        while self.state.epoch < total {
            let m = self.step_epoch(data)?;
            if m.epoch % 50 == 0 || m.epoch + 1 == total {
                info!("epoch {}/{total}: lr {:.6} recon {:.5}", m.epoch + 1, m.lr, m.recon_mse);
            }
            if let Some(dir) = checkpoint_dir {
                let every = self.config.checkpoint_every;
                if every > 0 && self.state.epoch.is_multiple_of(every) {
                    let path = dir.join(format!("epoch_{:06}.qahm", self.state.epoch));
                    checkpoint_save(&self.state, &path)?;
                    written.push(path);
                }
            }
        }
        Ok(written)
    }
}

/// Trains a freshly initialized state on `data` for the configured schedule.
pub fn train(
    data: &[Vec<f64>],
    widths: &LayerWidths,
    config: &TrainingConfig,
    backend: SamplerBackend,
    beta: f64,
    gamma: f64,
    embedding: Option<Embedding>,
) -> Result<TrainState> {
    let state = TrainState::init(widths, beta, gamma, embedding, config.seed)?;
    let mut trainer = Trainer::new(state, config.clone(), backend)?;
    trainer.run(data, None)?;
    Ok(trainer.state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        let c = TrainingConfig::default();
        assert_eq!(lr_schedule(0, &c), 0.005);
        assert_eq!(lr_schedule(499, &c), 0.005);
        assert!((lr_schedule(999, &c) - 0.0005).abs() < 1e-15);
        let mid = 0.005 - 0.0045 * 250.0 / 499.0;
        assert!((lr_schedule(750, &c) - mid).abs() < 1e-15);
        assert!((lr_schedule(750, &c) - 0.002748).abs() < 5e-6);
        assert!((lr_schedule(5000, &c) - 0.0005).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainingConfig::default();
        assert!(c.validate().is_ok());
        c.lr_end = 0.01;
        assert!(c.validate().is_err());
        let c = TrainingConfig {
            sleep_samples: 0,
            ..TrainingConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_epochs_leaves_initialization() {
        let widths = LayerWidths::new(0, 4, vec![3, 2]).unwrap();
        let config = TrainingConfig {
            epochs_phase1: 0,
            epochs_phase2: 0,
            seed: 9,
            ..TrainingConfig::default()
        };
        let data = vec![vec![1.0; 4]];
        let trained = train(&data, &widths, &config, SamplerBackend::ExactEnum, 1.0, 0.0, None).unwrap();
        let fresh = TrainState::init(&widths, 1.0, 0.0, None, 9).unwrap();
        assert_eq!(trained, fresh);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let widths = LayerWidths::new(0, 2, vec![2]).unwrap();
        let s = TrainState::init(&widths, 1.0, 0.0, None, 0).unwrap();
        assert!(wake_step(&[], &s, 1, None, 0, &[]).is_err());
    }
}

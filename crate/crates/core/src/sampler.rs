//! Sampler backends standing in for the annealer.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{QahmError, Result};
use crate::ising::IsingModel;
use crate::quantum::quantum_diagonal_distribution;
use crate::rng::stream;
use crate::spin::SpinVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackendKind {
    ExactEnum,
    ExactQuantumDiagonal,
    Mcmc,
    GrayBox,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::ExactEnum => "exact",
            BackendKind::ExactQuantumDiagonal => "quantum",
            BackendKind::Mcmc => "mcmc",
            BackendKind::GrayBox => "graybox",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetropolisConfig {
    /// Sweeps between consecutive samples of a chain.
    pub sweeps: usize,
    /// Sweeps discarded when a chain is (re)initialized.
    pub burn_in: usize,
    /// Independent chains; samples are concatenated in chain order.
    pub chains: usize,
}

impl Default for MetropolisConfig {
    fn default() -> Self {
        MetropolisConfig {
            sweeps: 5,
            burn_in: 50,
            chains: 10,
        }
    }
}

/// Persistent single-site Metropolis chains.
///
/// Chains keep their final states between calls, so later draws start from
/// the previous configuration and skip the burn-in.
#[derive(Clone, Debug, PartialEq)]
pub struct MetropolisSampler {
    pub config: MetropolisConfig,
    chains: Vec<Vec<f64>>,
}

impl MetropolisSampler {
    pub fn new(config: MetropolisConfig) -> Result<Self> {
        if config.sweeps == 0 || config.chains == 0 {
            return Err(QahmError::InvalidParameter(
                "metropolis sampler needs sweeps >= 1 and chains >= 1".into(),
            ));
        }
        Ok(MetropolisSampler {
            config,
            chains: Vec::new(),
        })
    }

    pub fn chain_states(&self) -> &[Vec<f64>] {
        &self.chains
    }

    pub fn set_chain_states(&mut self, chains: Vec<Vec<f64>>) {
        self.chains = chains;
    }

    pub fn draw<R: Rng + ?Sized>(&mut self, model: &IsingModel, n: usize, rng: &mut R) -> Result<Vec<SpinVector>> {
        require_classical(model, "mcmc")?;
        let k = self.config.chains;
        let base: u64 = rng.random();
        let fresh = self.chains.len() != k || self.chains.iter().any(|c| c.len() != model.n());
        if fresh {
            self.chains = vec![Vec::new(); k];
        }
        let per_chain = n.div_ceil(k);
        let adjacency = model.adjacency();
        let cfg = self.config;
        let results: Vec<Vec<SpinVector>> = self
            .chains
            .par_iter_mut()
            .enumerate()
            .map(|(c, state)| {
                let mut crng = stream(base, &[c as u64]);
                let burn_in = if state.is_empty() {
                    *state = (0..model.n())
                        .map(|_| if crng.random::<bool>() { 1.0 } else { -1.0 })
                        .collect();
                    cfg.burn_in
                } else {
                    0
                };
                let mut chain = Chain {
                    adjacency: &adjacency,
                    fields: model.fields(),
                    beta: model.beta(),
                    state,
                    order: (0..model.n()).collect(),
                };
                chain.run(per_chain, cfg.sweeps, burn_in, &mut crng)
            })
            .collect();
        Ok(results.into_iter().flatten().take(n).collect())
    }
}

struct Chain<'a> {
    adjacency: &'a [Vec<(usize, f64)>],
    fields: &'a [f64],
    beta: f64,
    state: &'a mut Vec<f64>,
    order: Vec<usize>,
}

impl Chain<'_> {
    fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.order.shuffle(rng);
        for &i in &self.order {
            let s = self.state[i];
            let local: f64 = self.fields[i] + self.adjacency[i].iter().map(|&(j, w)| w * self.state[j]).sum::<f64>();
            let delta = -2.0 * s * local;
            if delta <= 0.0 || rng.random::<f64>() < (-self.beta * delta).exp() {
                self.state[i] = -s;
            }
        }
    }

    fn run<R: Rng + ?Sized>(&mut self, n: usize, sweeps: usize, burn_in: usize, rng: &mut R) -> Vec<SpinVector> {
        for _ in 0..burn_in {
            self.sweep(rng);
        }
        (0..n)
            .map(|_| {
                for _ in 0..sweeps {
                    self.sweep(rng);
                }
                SpinVector::from_vec_unchecked(self.state.clone())
            })
            .collect()
    }
}

/// One Metropolis chain from a uniformly random start: `burn_in` sweeps, then
/// one sample every `sweeps` sweeps.
pub fn mcmc_sample<R: Rng + ?Sized>(
    model: &IsingModel,
    n_samples: usize,
    sweeps: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<Vec<SpinVector>> {
    require_classical(model, "mcmc")?;
    if sweeps == 0 {
        return Err(QahmError::InvalidParameter("sweeps must be at least 1".into()));
    }
    let adjacency = model.adjacency();
    let mut state: Vec<f64> = (0..model.n())
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let mut chain = Chain {
        adjacency: &adjacency,
        fields: model.fields(),
        beta: model.beta(),
        state: &mut state,
        order: (0..model.n()).collect(),
    };
    Ok(chain.run(n_samples, sweeps, burn_in, rng))
}

fn require_classical(model: &IsingModel, backend: &'static str) -> Result<()> {
    if model.gamma() != 0.0 {
        Err(QahmError::WrongBackend {
            backend,
            operation: "sample a transverse-field model",
        })
    } else {
        Ok(())
    }
}

/// Draws `n` indices from a probability table by inverse-CDF lookup.
pub fn sample_table<R: Rng + ?Sized>(probs: &[f64], n_spins: usize, n: usize, rng: &mut R) -> Vec<SpinVector> {
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in probs {
        acc += p;
        cdf.push(acc);
    }
    (0..n)
        .map(|_| {
            let r = rng.random::<f64>() * acc;
            let k = cdf.partition_point(|&c| c <= r).min(probs.len() - 1);
            SpinVector::from_index(k, n_spins)
        })
        .collect()
}

/// Wraps another backend with a hidden inverse-temperature scale and additive
/// Gaussian parameter noise, redrawn on every call.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayBox {
    inner: Box<SamplerBackend>,
    beta_scale: f64,
    param_noise: f64,
}

impl GrayBox {
    pub fn new(inner: SamplerBackend, beta_scale: f64, param_noise: f64) -> Result<Self> {
        if matches!(inner, SamplerBackend::GrayBox(_)) {
            return Err(QahmError::InvalidParameter("gray-box backends do not nest".into()));
        }
        if !(beta_scale > 0.0) || !(param_noise >= 0.0) {
            return Err(QahmError::InvalidParameter(
                "gray-box needs beta_scale > 0 and param_noise >= 0".into(),
            ));
        }
        Ok(GrayBox {
            inner: Box::new(inner),
            beta_scale,
            param_noise,
        })
    }

    pub fn inner(&self) -> &SamplerBackend {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut SamplerBackend {
        &mut self.inner
    }

    /// The distortion applied to `model`. Only the emulator itself and tests
    /// look at this; trainers must not.
    pub fn distort<R: Rng + ?Sized>(&self, model: &IsingModel, rng: &mut R) -> Result<IsingModel> {
        let mut device = model.clone();
        device.set_beta(model.beta() * self.beta_scale)?;
        if self.param_noise > 0.0 {
            let noise = Normal::new(0.0, self.param_noise).unwrap();
            let keys: Vec<(usize, usize)> = device.couplings().map(|(k, _)| k).collect();
            for (i, j) in keys {
                device.add_coupling(i, j, noise.sample(rng))?;
            }
            for h in device.fields_mut() {
                *h += noise.sample(rng);
            }
        }
        Ok(device)
    }

    pub fn draw<R: Rng + ?Sized>(&mut self, model: &IsingModel, n: usize, rng: &mut R) -> Result<Vec<SpinVector>> {
        let device = self.distort(model, rng)?;
        self.inner.draw(&device, n, rng)
    }
}

/// Draws from `inner` after the gray-box distortion.
pub fn graybox_sample<R: Rng + ?Sized>(
    inner: SamplerBackend,
    model: &IsingModel,
    beta_scale: f64,
    param_noise: f64,
    n: usize,
    rng: &mut R,
) -> Result<Vec<SpinVector>> {
    GrayBox::new(inner, beta_scale, param_noise)?.draw(model, n, rng)
}

/// A prior sampler.
#[derive(Clone, Debug, PartialEq)]
pub enum SamplerBackend {
    /// Exact classical Gibbs sampling by enumeration (`gamma = 0`).
    ExactEnum,
    /// Exact sampling from `<u|rho|u>` of the transverse-field Gibbs state.
    ExactQuantumDiagonal,
    Mcmc(MetropolisSampler),
    GrayBox(GrayBox),
}

impl SamplerBackend {
    pub fn mcmc(config: MetropolisConfig) -> Result<Self> {
        Ok(SamplerBackend::Mcmc(MetropolisSampler::new(config)?))
    }

    pub fn kind(&self) -> BackendKind {
        match self {
            SamplerBackend::ExactEnum => BackendKind::ExactEnum,
            SamplerBackend::ExactQuantumDiagonal => BackendKind::ExactQuantumDiagonal,
            SamplerBackend::Mcmc(_) => BackendKind::Mcmc,
            SamplerBackend::GrayBox(_) => BackendKind::GrayBox,
        }
    }

    /// Whether the distribution being sampled is known exactly to the caller.
    pub fn parameters_known(&self) -> bool {
        !matches!(self, SamplerBackend::GrayBox(_))
    }

    /// Whether the sampled distribution can be evaluated exactly, which is
    /// what bound estimation needs.
    pub fn is_exact(&self) -> bool {
        matches!(self, SamplerBackend::ExactEnum | SamplerBackend::ExactQuantumDiagonal)
    }

    pub fn draw<R: Rng + ?Sized>(&mut self, model: &IsingModel, n: usize, rng: &mut R) -> Result<Vec<SpinVector>> {
        match self {
            SamplerBackend::ExactEnum => {
                let probs = model.exact_distribution()?;
                Ok(sample_table(&probs, model.n(), n, rng))
            }
            SamplerBackend::ExactQuantumDiagonal => {
                let probs = quantum_diagonal_distribution(model)?;
                Ok(sample_table(&probs, model.n(), n, rng))
            }
            SamplerBackend::Mcmc(s) => s.draw(model, n, rng),
            SamplerBackend::GrayBox(g) => g.draw(model, n, rng),
        }
    }

    pub fn metropolis(&self) -> Option<&MetropolisSampler> {
        match self {
            SamplerBackend::Mcmc(s) => Some(s),
            SamplerBackend::GrayBox(g) => g.inner().metropolis(),
            _ => None,
        }
    }

    pub fn metropolis_mut(&mut self) -> Option<&mut MetropolisSampler> {
        match self {
            SamplerBackend::Mcmc(s) => Some(s),
            SamplerBackend::GrayBox(g) => g.inner_mut().metropolis_mut(),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::MomentStats;

    #[test]
    fn zero_model_moments_near_zero() {
        let m = IsingModel::new(5, 1.0, 0.0).unwrap();
        let mut rng = stream(4, &[]);
        let n = 20_000;
        let samples = mcmc_sample(&m, n, 1, 10, &mut rng).unwrap();
        let moments = MomentStats::from_samples(5, &samples).unwrap();
        let sigma = 1.0 / (n as f64).sqrt();
        assert!(moments.first.iter().all(|v| v.abs() < 3.0 * sigma * 1.5));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let mut m = IsingModel::new(4, 1.0, 0.0).unwrap();
        m.set_coupling(0, 3, -0.5).unwrap();
        m.set_field(1, 0.2);
        let a = mcmc_sample(&m, 100, 2, 5, &mut stream(1, &[])).unwrap();
        let b = mcmc_sample(&m, 100, 2, 5, &mut stream(1, &[])).unwrap();
        assert_eq!(a, b);

        let mut s1 = SamplerBackend::mcmc(MetropolisConfig::default()).unwrap();
        let mut s2 = SamplerBackend::mcmc(MetropolisConfig::default()).unwrap();
        let a = s1.draw(&m, 77, &mut stream(2, &[])).unwrap();
        let b = s2.draw(&m, 77, &mut stream(2, &[])).unwrap();
        assert_eq!(a.len(), 77);
        assert_eq!(a, b);
    }

    #[test]
    fn mcmc_rejects_transverse_field() {
        let m = IsingModel::new(2, 1.0, 0.3).unwrap();
        assert!(mcmc_sample(&m, 1, 1, 0, &mut stream(0, &[])).is_err());
        assert!(mcmc_sample(&IsingModel::new(2, 1.0, 0.0).unwrap(), 1, 0, 0, &mut stream(0, &[])).is_err());
    }

    #[test]
    fn identity_graybox_matches_inner_stream() {
        let mut m = IsingModel::new(3, 1.0, 0.0).unwrap();
        m.set_field(0, 0.4);
        let mut rng_a = stream(6, &[]);
        let mut rng_b = stream(6, &[]);
        let inner = SamplerBackend::ExactEnum.draw(&m, 50, &mut rng_a).unwrap();
        let wrapped = graybox_sample(SamplerBackend::ExactEnum, &m, 1.0, 0.0, 50, &mut rng_b).unwrap();
        assert_eq!(inner, wrapped);
    }

    #[test]
    fn graybox_reports_unknown_parameters() {
        let g = SamplerBackend::GrayBox(GrayBox::new(SamplerBackend::ExactEnum, 1.2, 0.1).unwrap());
        assert!(!g.parameters_known());
        assert!(SamplerBackend::ExactEnum.parameters_known());
    }
}

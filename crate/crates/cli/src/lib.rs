//! Command implementations behind the `qahm` binary.
//!
//! Every command writes into one output directory with a fixed layout:
//! `metrics.csv`, `checkpoints/`, `samples/` and `reports/`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use qahm::embedding::{find_embedding_with, EmbeddingSearch};
use qahm::eval::{bound_estimate, exact_kl, nearest_neighbors, recon_mse, write_image_grid, KL_LIMIT};
use qahm::gaussian::{clique_check, distribution_csv, induced_x_distribution, INDUCED_LIMIT};
use qahm::quantum::verify_jensen_all;
use qahm::rng::stream;
use qahm::sampler::GrayBox;
use qahm::{
    checkpoint_load, checkpoint_save, encode_gaussian, Dataset, Embedding, EpochMetrics, EvalReport, HardwareGraph,
    IsingModel, SamplerBackend, TrainState, Trainer,
};
use rand::Rng;

pub use config::{BackendName, DataKind, RunConfig};

const TAG_EMBED: u64 = 101;
const TAG_SAMPLE: u64 = 102;
const TAG_EVAL: u64 = 103;
const TAG_JENSEN: u64 = 104;

/// Monte-Carlo recognition samples per point for bound reports.
const BOUND_SAMPLES: usize = 100;

/// Marker written into an output directory when a command fails midway.
pub const FAILED_MARKER: &str = "FAILED";

/// Reference embedding figures for `K_60` on `chimera(16, 16, 4)`.
const REFERENCE_QUBITS: usize = 1644;
const REFERENCE_CHAINS: (usize, usize) = (18, 43);

#[derive(Debug, Parser)]
#[command(
    name = "qahm",
    version,
    about = "Train and evaluate Helmholtz machines with Ising priors"
)]
pub struct Cli {
    /// Default root for output directories when --out is not given.
    #[arg(long, env = "QAHM_OUT", global = true, default_value = "runs")]
    pub out_root: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory (overrides the config and the output root).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed overriding the config value.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from a run configuration.
    ///
    /// Writes metrics.csv, periodic and final checkpoints, a grid of generated
    /// samples and a nearest-neighbor audit. Config defaults: beta 1, gamma 0,
    /// exact backend, 500+500 epochs from 0.005 to 0.0005, 1000 sleep
    /// samples, full batch, 100 output samples in rows of 10.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Prior backend overriding the config.
        #[arg(long, value_enum)]
        backend: Option<BackendName>,
        /// Dataset file overriding data.path.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Draw samples from a trained checkpoint and write them as an image grid.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Number of samples.
        #[arg(short, long, default_value_t = 36)]
        n: usize,
        /// Config supplying the image shape and backend settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        backend: Option<BackendName>,
    },
    /// Evaluate a checkpoint against the configured dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        backend: Option<BackendName>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Minor-embed a complete graph into chimera hardware.
    Embed {
        /// Number of logical variables.
        n_logical: usize,
        /// Chimera dimensions m,n,t.
        #[arg(long, value_delimiter = ',', default_values_t = [16, 16, 4])]
        chimera: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        restarts: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Check ln<u|rho|u> >= <u|ln rho|u> on random transverse-field models.
    VerifyJensen {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Largest number of spins; each trial draws n uniformly from 1..=max_n.
        #[arg(long, default_value_t = 4)]
        max_n: usize,
        #[arg(long, default_value_t = 2.0)]
        gamma_max: f64,
        #[arg(long, default_value_t = 0.5)]
        beta_min: f64,
        #[arg(long, default_value_t = 2.0)]
        beta_max: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Encode a weighted sum of spins as a Gaussian energy.
    EncodeGauss {
        #[arg(allow_negative_numbers = true)]
        mu: f64,
        sigma: f64,
        /// Comma-separated weights.
        #[arg(allow_negative_numbers = true, value_delimiter = ',')]
        weights: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
}

/// The fixed output layout.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        for sub in ["", "checkpoints", "samples", "reports"] {
            let p = root.join(sub);
            fs::create_dir_all(&p).with_context(|| format!("creating {}", p.display()))?;
        }
        Ok(RunDir {
            root: root.to_path_buf(),
        })
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn samples(&self) -> PathBuf {
        self.root.join("samples")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    fn write(&self, rel: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let p = self.root.join(rel);
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    /// Runs `f`, leaving a marker with the diagnostic if it fails.
    fn guard<T>(&self, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let out = f();
        if let Err(e) = &out {
            let _ = fs::write(self.root.join(FAILED_MARKER), format!("{e:#}\n"));
        }
        out
    }
}

/// Dispatches a parsed command line.
pub fn run(cli: Cli) -> Result<ExitCode> {
    let root = cli.out_root;
    let pick = |out: &Option<PathBuf>, name: &str| out.clone().unwrap_or_else(|| root.join(name));
    match cli.command {
        Command::Train {
            config,
            common,
            backend,
            data,
            resume,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            apply_overrides(&mut cfg, &common, backend, data);
            let out = common
                .out
                .or_else(|| cfg.output.dir.clone())
                .unwrap_or_else(|| root.join(run_name(&config)));
            train(&cfg, &out, resume.as_deref())?;
        }
        Command::Sample {
            checkpoint,
            n,
            config,
            common,
            backend,
        } => {
            let mut cfg = config.as_deref().map(RunConfig::load).transpose()?;
            if let Some(c) = cfg.as_mut() {
                apply_overrides(c, &common, backend, None);
            }
            let seed = common.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
            sample(
                &checkpoint,
                n,
                cfg.as_ref(),
                backend,
                seed,
                &pick(&common.out, "sample"),
            )?;
        }
        Command::Eval {
            checkpoint,
            config,
            common,
            backend,
            data,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            apply_overrides(&mut cfg, &common, backend, data);
            evaluate_checkpoint(&checkpoint, &cfg, &pick(&common.out, "eval"))?;
        }
        Command::Embed {
            n_logical,
            chimera,
            restarts,
            common,
        } => {
            let Ok(dims) = <[usize; 3]>::try_from(chimera) else {
                bail!("--chimera takes three values m,n,t");
            };
            embed(
                n_logical,
                dims,
                restarts,
                common.seed.unwrap_or(0),
                &pick(&common.out, "embed"),
            )?;
        }
        Command::VerifyJensen {
            trials,
            max_n,
            gamma_max,
            beta_min,
            beta_max,
            common,
        } => {
            let params = JensenSweep {
                trials,
                max_n,
                gamma_max,
                beta_range: (beta_min, beta_max),
                seed: common.seed.unwrap_or(0),
            };
            let violations = verify_jensen(&params, &pick(&common.out, "verify-jensen"))?;
            if violations > 0 {
                eprintln!("error: {violations} basis states violate the bound");
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::EncodeGauss {
            mu,
            sigma,
            weights,
            common,
        } => {
            encode_gauss(mu, sigma, &weights, &pick(&common.out, "encode-gauss"))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_name(config: &Path) -> String {
    config
        .file_stem()
        .map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned())
}

fn apply_overrides(cfg: &mut RunConfig, common: &Common, backend: Option<BackendName>, data: Option<PathBuf>) {
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(b) = backend {
        cfg.prior.backend = b;
    }
    if let Some(d) = data {
        cfg.data.path = Some(d);
    }
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let d = &cfg.data;
    Ok(match d.kind {
        DataKind::Usps16 => {
            let path = d.path.as_ref().context("data.path is required")?;
            Dataset::load_usps16(path)?
        }
        DataKind::BarsAndStripes => Dataset::bars_and_stripes(d.rows.unwrap_or(0), d.cols.unwrap_or(0))?,
    })
}

fn base_backend(name: BackendName, cfg: Option<&RunConfig>) -> Result<SamplerBackend> {
    let mcmc = cfg.map(|c| c.prior.mcmc.metropolis()).unwrap_or_default();
    Ok(match name {
        BackendName::Exact => SamplerBackend::ExactEnum,
        BackendName::Quantum => SamplerBackend::ExactQuantumDiagonal,
        BackendName::Mcmc => SamplerBackend::mcmc(mcmc)?,
        BackendName::Graybox => bail!("graybox needs a concrete inner backend"),
    })
}

pub fn build_backend(cfg: &RunConfig) -> Result<SamplerBackend> {
    match cfg.prior.backend {
        BackendName::Graybox => {
            let g = &cfg.prior.graybox;
            let inner = base_backend(g.inner, Some(cfg))?;
            Ok(SamplerBackend::GrayBox(GrayBox::new(
                inner,
                g.beta_scale,
                g.param_noise,
            )?))
        }
        name => base_backend(name, Some(cfg)),
    }
}

/// A backend that can sample `state` when none is configured.
fn default_backend(state: &TrainState) -> Result<SamplerBackend> {
    let n = state.prior.n();
    let name = if state.embedding.is_some() || n > KL_LIMIT {
        BackendName::Mcmc
    } else if state.prior.gamma() > 0.0 {
        BackendName::Quantum
    } else {
        BackendName::Exact
    };
    base_backend(name, None)
}

fn embed_prior(cfg: &RunConfig, n_logical: usize) -> Result<Option<Embedding>> {
    let Some(e) = &cfg.prior.embedding else {
        return Ok(None);
    };
    let [m, n, t] = e.chimera;
    let hw = HardwareGraph::chimera(m, n, t)?;
    let search = EmbeddingSearch {
        max_restarts: e.max_restarts,
        ..EmbeddingSearch::default()
    };
    let emb = find_embedding_with(n_logical, &hw, search, &mut stream(cfg.seed, &[TAG_EMBED]))?;
    info!(
        "embedded {n_logical} variables into chimera({m},{n},{t}) using {} qubits",
        emb.physical_count()
    );
    Ok(Some(emb))
}

/// Image geometry of the pixel part of a visible vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ImageShape {
    pub rows: usize,
    pub cols: usize,
}

impl ImageShape {
    fn from_dataset(d: &Dataset) -> Self {
        ImageShape {
            rows: d.layout.image_rows,
            cols: d.layout.image_cols,
        }
    }

    /// Square images with all continuous units as pixels, or all binary
    /// units when there are no continuous ones.
    fn infer(state: &TrainState) -> Option<Self> {
        let w = state.widths();
        let pixels = if w.continuous > 0 { w.continuous } else { w.binary };
        let side = (pixels as f64).sqrt().round() as usize;
        (side * side == pixels && side > 0).then_some(ImageShape { rows: side, cols: side })
    }

    fn pixels(&self) -> usize {
        self.rows * self.cols
    }
}

/// Top-down samples: prior draws (decoded through the embedding) passed
/// through the generator. Continuous pixels are the `tanh` means.
pub fn generate(state: &TrainState, backend: &mut SamplerBackend, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut rng = stream(seed, &[TAG_SAMPLE]);
    let prior = state.sample_prior(backend, n, &mut rng)?;
    prior
        .iter()
        .map(|u| Ok(state.generator.generator_pass(u, &mut rng)?.visible))
        .collect()
}

fn samples_csv(samples: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for s in samples {
        let row: Vec<String> = s.iter().map(f64::to_string).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn write_samples(dir: &RunDir, samples: &[Vec<f64>], shape: Option<ImageShape>, grid_cols: usize) -> Result<()> {
    if samples.is_empty() {
        return Ok(());
    }
    dir.write("samples/samples.csv", samples_csv(samples))?;
    match shape {
        Some(shape) => {
            let tiles: Vec<Vec<f64>> = samples.iter().map(|s| s[..shape.pixels()].to_vec()).collect();
            write_image_grid(
                &tiles,
                shape.rows,
                shape.cols,
                grid_cols,
                dir.samples().join("samples.pgm"),
            )?;
        }
        None => warn!("visible layer has no square pixel block; skipping image grid"),
    }
    Ok(())
}

/// Recon error, bound and KL where computable, and the nearest-neighbor
/// audit of `samples` against the dataset pixels.
pub fn evaluate(
    state: &TrainState,
    backend: &SamplerBackend,
    dataset: &Dataset,
    samples: &[Vec<f64>],
    seed: u64,
) -> Result<EvalReport> {
    let data = dataset.visible_vectors();
    let bound = if backend.is_exact() && state.embedding.is_none() {
        Some(bound_estimate(state, backend, &data, BOUND_SAMPLES, seed)?.mean)
    } else {
        None
    };
    let widths = state.widths();
    let exact_kl = if widths.continuous == 0 && widths.stochastic_units() <= KL_LIMIT {
        Some(exact_kl(state, &data)?)
    } else {
        None
    };
    let pixels = dataset.layout.pixels;
    let nn_pairs = if samples.is_empty() {
        Vec::new()
    } else {
        let gen: Vec<Vec<f64>> = samples.iter().map(|s| s[..pixels].to_vec()).collect();
        let real: Vec<Vec<f64>> = dataset.records.iter().map(|r| r.pixels.clone()).collect();
        nearest_neighbors(&gen, &real, 1)?
    };
    Ok(EvalReport {
        bound,
        exact_kl,
        recon_mse: recon_mse(state, &data, seed)?,
        nn_pairs,
    })
}

fn write_report(dir: &RunDir, report: &EvalReport) -> Result<()> {
    dir.write("reports/summary.json", format!("{}\n", report.summary_json()))?;
    dir.write("reports/neighbors.csv", report.neighbors_csv())?;
    info!("evaluation: {}", report.summary_json());
    Ok(())
}

fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = format!("{}\n", EpochMetrics::CSV_HEADER);
    for m in metrics {
        out.push_str(&m.csv_row());
        out.push('\n');
    }
    out
}

/// What a finished training run produced.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub dir: RunDir,
    pub state: TrainState,
    pub checkpoints: Vec<PathBuf>,
    pub samples: Vec<Vec<f64>>,
    pub report: EvalReport,
}

/// Trains from `cfg` into `out`. Inputs are validated before anything is
/// written; a failure after that leaves a `FAILED` marker.
pub fn train(cfg: &RunConfig, out: &Path, resume: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    cfg.validate_paths()?;
    let dataset = load_dataset(cfg)?;
    let widths = dataset.layout.layer_widths(cfg.model.hidden.clone())?;
    let resumed = resume.map(checkpoint_load).transpose()?;
    if let Some(s) = &resumed {
        if s.widths() != &widths {
            bail!(
                "checkpoint widths {:?} do not match the config {:?}",
                s.widths(),
                widths
            );
        }
    }
    let mut backend = build_backend(cfg)?;
    let tc = cfg.training();
    info!(
        "training on {} ({} records), widths {:?}, backend {}",
        dataset.name,
        dataset.len(),
        widths,
        cfg.prior.backend
    );

    let dir = RunDir::create(out)?;
    let _ = fs::remove_file(dir.root.join(FAILED_MARKER));
    dir.write(config::ECHO_FILE, cfg.to_toml())?;
    dir.guard(|| {
        let state = match resumed {
            Some(s) => s,
            None => {
                let emb = embed_prior(cfg, widths.deepest())?;
                if let Some(e) = &emb {
                    dir.write("reports/embedding.txt", e.to_text())?;
                }
                TrainState::init(&widths, cfg.prior.beta, cfg.prior.gamma, emb, cfg.seed)?
            }
        };
        let mut trainer = Trainer::new(state, tc, backend.clone())?;
        let data = dataset.visible_vectors();
        let mut checkpoints = trainer.run(&data, Some(&dir.checkpoints()))?;
        let last = dir.checkpoints().join("final.qahm");
        checkpoint_save(&trainer.state, &last)?;
        checkpoints.push(last);
        dir.write("metrics.csv", metrics_csv(&trainer.state.metrics))?;

        backend = trainer.backend.clone();
        let samples = generate(&trainer.state, &mut backend, cfg.output.samples, cfg.seed)?;
        write_samples(
            &dir,
            &samples,
            Some(ImageShape::from_dataset(&dataset)),
            cfg.output.grid_cols,
        )?;
        let report = evaluate(&trainer.state, &backend, &dataset, &samples, cfg.seed)?;
        write_report(&dir, &report)?;
        Ok(TrainOutcome {
            dir: dir.clone(),
            state: trainer.state,
            checkpoints,
            samples,
            report,
        })
    })
}

/// Draws `n` samples from a checkpoint into `out/samples`.
pub fn sample(
    checkpoint: &Path,
    n: usize,
    cfg: Option<&RunConfig>,
    backend: Option<BackendName>,
    seed: u64,
    out: &Path,
) -> Result<Vec<Vec<f64>>> {
    let state = checkpoint_load(checkpoint)?;
    let mut sampler = match (cfg, backend) {
        (Some(c), _) => build_backend(c)?,
        (None, Some(b)) => base_backend(b, None)?,
        (None, None) => default_backend(&state)?,
    };
    if let Some(m) = sampler.metropolis_mut() {
        if !state.sampler_chains.is_empty() {
            m.set_chain_states(state.sampler_chains.clone());
        }
    }
    let shape = match cfg {
        Some(c) => Some(ImageShape::from_dataset(&load_dataset(c)?)),
        None => ImageShape::infer(&state),
    };
    let grid_cols = cfg.map_or(6, |c| c.output.grid_cols);
    let dir = RunDir::create(out)?;
    dir.guard(|| {
        let samples = generate(&state, &mut sampler, n, seed)?;
        write_samples(&dir, &samples, shape, grid_cols)?;
        info!("wrote {} samples to {}", samples.len(), dir.samples().display());
        Ok(samples)
    })
}

/// Evaluates a checkpoint on the configured dataset.
pub fn evaluate_checkpoint(checkpoint: &Path, cfg: &RunConfig, out: &Path) -> Result<EvalReport> {
    cfg.validate_paths()?;
    let state = checkpoint_load(checkpoint)?;
    let dataset = load_dataset(cfg)?;
    let mut backend = build_backend(cfg)?;
    let dir = RunDir::create(out)?;
    dir.guard(|| {
        let samples = generate(&state, &mut backend, cfg.output.samples, cfg.seed ^ TAG_EVAL)?;
        let report = evaluate(&state, &backend, &dataset, &samples, cfg.seed)?;
        write_report(&dir, &report)?;
        Ok(report)
    })
}

/// Embeds `K_n` into `chimera(m, n, t)` and writes the chains.
pub fn embed(n_logical: usize, chimera: [usize; 3], restarts: usize, seed: u64, out: &Path) -> Result<Embedding> {
    let [m, n, t] = chimera;
    let hw = HardwareGraph::chimera(m, n, t)?;
    let search = EmbeddingSearch {
        max_restarts: restarts,
        ..EmbeddingSearch::default()
    };
    let emb = find_embedding_with(n_logical, &hw, search, &mut stream(seed, &[TAG_EMBED]))?;
    emb.validate()?;
    let sizes = emb.chain_sizes();
    let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
    let mut summary = format!(
        "logical {n_logical}\nhardware chimera({m},{n},{t})\nqubits {}\nchain_min {lo}\nchain_max {hi}\n",
        emb.physical_count()
    );
    info!(
        "K_{n_logical} on chimera({m},{n},{t}): {} qubits, chains {lo}..{hi}",
        emb.physical_count()
    );
    if (n_logical, chimera) == (60, [16, 16, 4]) {
        let (rlo, rhi) = REFERENCE_CHAINS;
        info!("reference embedding: {REFERENCE_QUBITS} qubits, chains {rlo}..{rhi}");
        summary.push_str(&format!(
            "reference_qubits {REFERENCE_QUBITS}\nreference_chain_min {rlo}\nreference_chain_max {rhi}\n"
        ));
    }
    let dir = RunDir::create(out)?;
    dir.write("reports/embedding.txt", emb.to_text())?;
    dir.write("reports/embedding_summary.txt", summary)?;
    Ok(emb)
}

#[derive(Clone, Copy, Debug)]
pub struct JensenSweep {
    pub trials: usize,
    pub max_n: usize,
    pub gamma_max: f64,
    pub beta_range: (f64, f64),
    pub seed: u64,
}

/// One random transverse-field model per trial, couplings and fields
/// uniform in `[-1, 1]`.
pub fn jensen_model(params: &JensenSweep, trial: usize) -> Result<IsingModel> {
    let mut rng = stream(params.seed, &[TAG_JENSEN, trial as u64]);
    let n = rng.random_range(1..=params.max_n);
    let (b0, b1) = params.beta_range;
    let beta = if b1 > b0 { rng.random_range(b0..=b1) } else { b0 };
    // Uniform on (0, gamma_max].
    let gamma = params.gamma_max * (1.0 - rng.random::<f64>());
    let mut m = IsingModel::new(n, beta, gamma)?;
    for i in 0..n {
        m.set_field(i, rng.random_range(-1.0..=1.0));
        for j in i + 1..n {
            m.set_coupling(i, j, rng.random_range(-1.0..=1.0))?;
        }
    }
    Ok(m)
}

/// Writes `reports/jensen.csv` and returns the number of violations.
pub fn verify_jensen(params: &JensenSweep, out: &Path) -> Result<usize> {
    if params.trials == 0 || params.max_n == 0 {
        bail!("verify-jensen needs at least one trial and max_n >= 1");
    }
    if !(params.gamma_max > 0.0) || !(params.beta_range.0 > 0.0) || params.beta_range.1 < params.beta_range.0 {
        bail!("gamma_max must be positive and 0 < beta_min <= beta_max");
    }
    let mut csv = String::from("trial,n,beta,gamma,state,lhs,rhs,slack,holds\n");
    let (mut violations, mut worst) = (0, f64::INFINITY);
    for trial in 0..params.trials {
        let m = jensen_model(params, trial)?;
        for (k, c) in verify_jensen_all(&m)?.iter().enumerate() {
            csv.push_str(&format!(
                "{trial},{},{},{},{k},{},{},{},{}\n",
                m.n(),
                m.beta(),
                m.gamma(),
                c.lhs,
                c.rhs,
                c.slack(),
                c.holds as u8
            ));
            worst = worst.min(c.slack());
            violations += usize::from(!c.holds);
        }
    }
    let dir = RunDir::create(out)?;
    dir.write("reports/jensen.csv", csv)?;
    info!(
        "{} trials, {violations} violations, smallest slack {worst:e}",
        params.trials
    );
    Ok(violations)
}

/// Writes the appendix coefficients, the canonical model, the clique check
/// and the induced distribution of `x`.
pub fn encode_gauss(mu: f64, sigma: f64, weights: &[f64], out: &Path) -> Result<()> {
    let enc = encode_gaussian(mu, sigma, weights)?;
    let check = clique_check(&enc.model, weights)?;
    let dir = RunDir::create(out)?;
    dir.write("reports/gaussian_encoding.txt", enc.to_report())?;
    dir.write("reports/gaussian_model.txt", enc.model.to_text())?;
    let mut note = format!(
        "missing_couplings {:?}\nzero_weight {:?}\nconnected_zero_weight {:?}\nimplication_holds {}\n",
        check.missing, check.zero_weight, check.connected_zero_weight, check.implication_holds
    );
    note.push_str(&check.capability_note());
    note.push('\n');
    dir.write("reports/clique_check.txt", note)?;
    if enc.n() <= INDUCED_LIMIT {
        dir.write(
            "reports/induced_x.csv",
            distribution_csv(&induced_x_distribution(&enc)?),
        )?;
    }
    if !check.ok() {
        bail!("clique check failed: {:?}", check);
    }
    Ok(())
}

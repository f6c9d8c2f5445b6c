//! Evaluation: variational bound, exact likelihood and KL on enumerable
//! models, nearest-neighbor novelty audit, class readout, and PGM images.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{check_len, QahmError, Result};
use crate::ising::log_sum_exp;
use crate::nets::Trajectory;
use crate::quantum::{prior_log_partition, prior_probabilities, GibbsSpectrum};
use crate::rng::stream;
use crate::sampler::SamplerBackend;
use crate::spin::SpinVector;
use crate::trainer::TrainState;

/// Limit on stochastic units (visible plus hidden) for [`exact_kl`].
pub const KL_LIMIT: usize = 12;

/// Limit on hidden units for exhaustive likelihood and bound evaluation.
pub const EXHAUSTIVE_HIDDEN_LIMIT: usize = 20;

/// Distances below this count as exact copies.
pub const COPY_DISTANCE: f64 = 1e-6;

/// Default number of top-down passes averaged by [`most_probable_class`].
pub const CLASS_PASSES: usize = 100;

/// `ln <u|rho|u>` per basis state, and the surrogate `<u|ln rho|u>`.
struct PriorTerms {
    log_prob: Vec<f64>,
    log_rho: Vec<f64>,
}

fn prior_terms(state: &TrainState) -> Result<PriorTerms> {
    let prior = &state.prior;
    let log_prob: Vec<f64> = prior_probabilities(prior)?.iter().map(|p| p.ln()).collect();
    let log_rho = if prior.gamma() == 0.0 {
        log_prob.clone()
    } else {
        let spec = GibbsSpectrum::new(prior)?;
        (0..log_prob.len()).map(|k| spec.log_rho_diagonal(k)).collect()
    };
    Ok(PriorTerms { log_prob, log_rho })
}

fn check_exact_backend(backend: &SamplerBackend, operation: &'static str) -> Result<()> {
    if backend.is_exact() {
        Ok(())
    } else {
        Err(QahmError::WrongBackend {
            backend: backend.kind().name(),
            operation,
        })
    }
}

fn hidden_total(state: &TrainState) -> usize {
    state.widths().hidden.iter().sum()
}

/// Calls `f` with every joint hidden configuration, shallowest layer first.
fn for_each_hidden<F: FnMut(Vec<SpinVector>) -> Result<()>>(state: &TrainState, mut f: F) -> Result<()> {
    let total = hidden_total(state);
    if total > EXHAUSTIVE_HIDDEN_LIMIT {
        return Err(QahmError::Capacity {
            what: "hidden units for exhaustive evaluation",
            actual: total,
            limit: EXHAUSTIVE_HIDDEN_LIMIT,
        });
    }
    let widths = &state.widths().hidden;
    for code in 0..1usize << total {
        let mut shift = 0;
        let hidden = widths
            .iter()
            .map(|&w| {
                let s = SpinVector::from_index((code >> shift) & ((1 << w) - 1), w);
                shift += w;
                s
            })
            .collect();
        f(hidden)?;
    }
    Ok(())
}

/// Exact `ln P(v)` under the model, marginalizing every hidden layer.
pub fn exact_log_likelihood(state: &TrainState, v: &[f64]) -> Result<f64> {
    check_len("visible vector", state.widths().visible(), v.len())?;
    let terms = prior_terms(state)?;
    let mut logs = Vec::new();
    for_each_hidden(state, |hidden| {
        let k = hidden.last().unwrap().to_index();
        let traj = Trajectory {
            visible: v.to_vec(),
            hidden,
        };
        logs.push(state.generator.generator_log_prob(&traj)? + terms.log_prob[k]);
        Ok(())
    })?;
    Ok(log_sum_exp(&logs))
}

/// Mean exact log-likelihood over `data`.
pub fn mean_log_likelihood(state: &TrainState, data: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for v in data {
        total += exact_log_likelihood(state, v)?;
    }
    Ok(total / data.len() as f64)
}

/// Bound for one data point by exhaustive summation over `Q(h, u | v)`:
/// `sum Q [ln P(v, h | u) + <u|ln rho|u> - ln Q(h, u | v)]`.
pub fn exhaustive_bound_point(state: &TrainState, v: &[f64]) -> Result<f64> {
    let terms = prior_terms(state)?;
    exhaustive_bound_with(state, v, &terms)
}

fn exhaustive_bound_with(state: &TrainState, v: &[f64], terms: &PriorTerms) -> Result<f64> {
    let mut total = 0.0;
    for (hidden, q) in state.recognition.enumerate_recognition(v)? {
        if q == 0.0 {
            continue;
        }
        let k = hidden.last().unwrap().to_index();
        let traj = Trajectory {
            visible: v.to_vec(),
            hidden,
        };
        total += q * (state.generator.generator_log_prob(&traj)? + terms.log_rho[k] - q.ln());
    }
    Ok(total)
}

/// Mean exhaustive bound over `data`.
pub fn exhaustive_bound(state: &TrainState, data: &[Vec<f64>]) -> Result<f64> {
    let terms = prior_terms(state)?;
    let mut total = 0.0;
    for v in data {
        total += exhaustive_bound_with(state, v, &terms)?;
    }
    Ok(total / data.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundEstimate {
    pub mean: f64,
    /// Standard error of the Monte-Carlo mean.
    pub std_err: f64,
    pub samples: usize,
}

/// Monte-Carlo bound over `Q(h, u | v) Q_S(v)`, drawing `n_mc` recognition
/// samples per data point. Requires an exact prior backend.
pub fn bound_estimate(
    state: &TrainState,
    backend: &SamplerBackend,
    data: &[Vec<f64>],
    n_mc: usize,
    seed: u64,
) -> Result<BoundEstimate> {
    check_exact_backend(backend, "bound estimation")?;
    if data.is_empty() || n_mc == 0 {
        return Err(QahmError::Usage(
            "bound estimation needs data and at least one sample".into(),
        ));
    }
    let terms = prior_terms(state)?;
    let log_z = prior_log_partition(&state.prior)?;
    let exact_rho = state.prior.gamma() != 0.0;
    let values: Vec<Result<Vec<f64>>> = data
        .par_iter()
        .enumerate()
        .map(|(d, v)| {
            let mut out = Vec::with_capacity(n_mc);
            for s in 0..n_mc {
                let mut rng = stream(seed, &[d as u64, s as u64]);
                let traj = state.recognition.recognition_pass(v, &mut rng)?;
                let u = traj.deepest();
                let log_rho = if exact_rho {
                    terms.log_rho[u.to_index()]
                } else {
                    -state.prior.beta() * state.prior.energy(u)? - log_z
                };
                out.push(
                    state.generator.generator_log_prob(&traj)? + log_rho
                        - state.recognition.recognition_log_prob(&traj)?,
                );
            }
            Ok(out)
        })
        .collect();
    let mut all = Vec::with_capacity(data.len() * n_mc);
    for v in values {
        all.extend(v?);
    }
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok(BoundEstimate {
        mean,
        std_err: (var / n).sqrt(),
        samples: all.len(),
    })
}

/// Exact model marginal `P(v)` over every binary visible configuration,
/// indexed by [`SpinVector::to_index`].
pub fn exact_visible_distribution(state: &TrainState) -> Result<Vec<f64>> {
    let widths = state.widths();
    if widths.continuous > 0 {
        return Err(QahmError::Usage(
            "exact visible distribution needs binary visible units".into(),
        ));
    }
    let units = widths.stochastic_units();
    if units > KL_LIMIT {
        return Err(QahmError::Capacity {
            what: "stochastic units for exact marginalization",
            actual: units,
            limit: KL_LIMIT,
        });
    }
    let n = state.prior.n();
    let probs = prior_probabilities(&state.prior)?;
    let mut out = vec![0.0; 1 << widths.binary];
    for (k, &pu) in probs.iter().enumerate() {
        if pu == 0.0 {
            continue;
        }
        for (traj, p) in state.generator.enumerate_generator(&SpinVector::from_index(k, n))? {
            out[SpinVector::new(traj.visible)?.to_index()] += pu * p;
        }
    }
    Ok(out)
}

/// Empirical distribution of binary visible vectors.
pub fn empirical_visible_distribution(data: &[Vec<f64>], width: usize) -> Result<Vec<f64>> {
    if width > KL_LIMIT {
        return Err(QahmError::Capacity {
            what: "visible units",
            actual: width,
            limit: KL_LIMIT,
        });
    }
    let mut out = vec![0.0; 1 << width];
    for v in data {
        check_len("visible vector", width, v.len())?;
        out[SpinVector::new(v.clone())?.to_index()] += 1.0;
    }
    let n = data.len() as f64;
    out.iter_mut().for_each(|p| *p /= n);
    Ok(out)
}

/// `KL(q || p) = sum q ln(q / p)`; infinite when `p` misses support of `q`.
pub fn kl_divergence(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| if b > 0.0 { a * (a / b).ln() } else { f64::INFINITY })
        .sum::<f64>()
        .max(0.0)
}

/// `KL(Q_S(v) || P(v))` between the empirical data distribution and the
/// exact model marginal.
pub fn exact_kl(state: &TrainState, data: &[Vec<f64>]) -> Result<f64> {
    if data.is_empty() {
        return Err(QahmError::Usage("KL needs at least one data point".into()));
    }
    let p = exact_visible_distribution(state)?;
    let q = empirical_visible_distribution(data, state.widths().visible())?;
    Ok(kl_divergence(&q, &p))
}

/// Mean squared reconstruction error: each point goes up the recognition
/// network once and comes back as the generator's visible means given `u^1`.
pub fn recon_mse(state: &TrainState, data: &[Vec<f64>], seed: u64) -> Result<f64> {
    let per: Vec<Result<f64>> = data
        .par_iter()
        .enumerate()
        .map(|(d, v)| {
            let mut rng = stream(seed, &[d as u64]);
            let traj = state.recognition.recognition_pass(v, &mut rng)?;
            let m = state.generator.visible_means(traj.hidden[0].as_slice())?;
            Ok(v.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / v.len() as f64)
        })
        .collect();
    let mut total = 0.0;
    for p in per {
        total += p?;
    }
    Ok(total / data.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighborPair {
    pub sample: usize,
    pub index: usize,
    pub distance: f64,
}

impl NeighborPair {
    pub fn is_copy(&self) -> bool {
        self.distance < COPY_DISTANCE
    }
}

/// The `k` nearest dataset entries (Euclidean) for every sample, ordered by
/// sample and then distance; ties go to the lower dataset index.
pub fn nearest_neighbors(samples: &[Vec<f64>], dataset: &[Vec<f64>], k: usize) -> Result<Vec<NeighborPair>> {
    if let Some(first) = dataset.first() {
        for v in dataset.iter().chain(samples) {
            check_len("image dimensionality", first.len(), v.len())?;
        }
    }
    let k = k.min(dataset.len());
    let per: Vec<Vec<NeighborPair>> = samples
        .par_iter()
        .enumerate()
        .map(|(s, x)| {
            let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
            for (i, y) in dataset.iter().enumerate() {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                if best.len() < k || d2 < best[best.len() - 1].0 {
                    let at = best.partition_point(|&(b, _)| b <= d2);
                    best.insert(at, (d2, i));
                    best.truncate(k);
                }
            }
            best.into_iter()
                .map(|(d2, index)| NeighborPair {
                    sample: s,
                    index,
                    distance: d2.sqrt(),
                })
                .collect()
        })
        .collect();
    Ok(per.into_iter().flatten().collect())
}

/// What to classify.
#[derive(Clone, Debug)]
pub enum ClassQuery {
    /// A deepest-layer state; classes come from top-down passes.
    Deepest(SpinVector),
    /// A visible vector whose class units are ignored (set to 0) on the way
    /// up; the class is then read out through the generator.
    Image(Vec<f64>),
}

/// Class-unit probabilities averaged over `passes` top-down passes, and the
/// argmax (lowest index on ties). Class units are the last `classes` binary
/// visible units.
pub fn class_probabilities<R: Rng + ?Sized>(
    state: &TrainState,
    query: &ClassQuery,
    classes: usize,
    passes: usize,
    rng: &mut R,
) -> Result<(usize, Vec<f64>)> {
    let widths = state.widths();
    if classes == 0 || classes > widths.binary {
        return Err(QahmError::Usage(format!(
            "model has {} binary visible units, cannot read {classes} classes",
            widths.binary
        )));
    }
    let passes = passes.max(1);
    let offset = widths.binary - classes;
    let mut acc = vec![0.0; classes];
    for _ in 0..passes {
        let u = match query {
            ClassQuery::Deepest(u) => u.clone(),
            ClassQuery::Image(v) => {
                check_len("visible vector", widths.visible(), v.len())?;
                let mut input = v.clone();
                let first_class = widths.visible() - classes;
                input[first_class..].iter_mut().for_each(|x| *x = 0.0);
                state.recognition.recognition_pass(&input, rng)?.deepest().clone()
            }
        };
        let traj = state.generator.generator_pass(&u, rng)?;
        let probs = state.generator.binary_visible_probs(traj.hidden[0].as_slice())?;
        for (a, p) in acc.iter_mut().zip(&probs[offset..]) {
            *a += p / passes as f64;
        }
    }
    Ok((argmax(&acc), acc))
}

pub fn most_probable_class<R: Rng + ?Sized>(
    state: &TrainState,
    query: &ClassQuery,
    classes: usize,
    rng: &mut R,
) -> Result<usize> {
    Ok(class_probabilities(state, query, classes, CLASS_PASSES, rng)?.0)
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Pixel in `[-1, 1]` to byte, `round(255 (p + 1) / 2)` with halves up.
pub fn pixel_to_byte(p: f64) -> u8 {
    (255.0 * (p + 1.0) / 2.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn byte_to_pixel(b: u8) -> f64 {
    2.0 * b as f64 / 255.0 - 1.0
}

/// Separator and padding byte between tiles.
pub const SEPARATOR: u8 = 255;

/// Tiles `samples` (each `rows x cols` pixels in row-major order) into a
/// binary PGM, `grid_cols` tiles per row, with 1-pixel separators.
pub fn encode_image_grid(samples: &[Vec<f64>], rows: usize, cols: usize, grid_cols: usize) -> Result<Vec<u8>> {
    if samples.is_empty() || rows == 0 || cols == 0 || grid_cols == 0 {
        return Err(QahmError::Usage(
            "image grid needs samples and positive dimensions".into(),
        ));
    }
    for s in samples {
        check_len("image pixels", rows * cols, s.len())?;
        if let Some(p) = s.iter().find(|p| !(-1.0..=1.0).contains(*p)) {
            return Err(QahmError::InvalidParameter(format!("pixel {p} outside [-1, 1]")));
        }
    }
    let gc = grid_cols.min(samples.len());
    let gr = samples.len().div_ceil(gc);
    let width = gc * cols + gc - 1;
    let height = gr * rows + gr - 1;
    let mut pixels = vec![SEPARATOR; width * height];
    for (n, s) in samples.iter().enumerate() {
        let (top, left) = ((n / gc) * (rows + 1), (n % gc) * (cols + 1));
        for r in 0..rows {
            for c in 0..cols {
                pixels[(top + r) * width + left + c] = pixel_to_byte(s[r * cols + c]);
            }
        }
    }
    let mut out = format!("P5 {width} {height} 255\n").into_bytes();
    out.extend(pixels);
    Ok(out)
}

pub fn write_image_grid(
    samples: &[Vec<f64>],
    rows: usize,
    cols: usize,
    grid_cols: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    let bytes = encode_image_grid(samples, rows, cols, grid_cols)?;
    let path = path.as_ref();
    fs::write(path, bytes).map_err(|e| QahmError::io(path, e))
}

/// A decoded 8-bit grayscale image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn pixel_values(&self) -> Vec<f64> {
        self.pixels.iter().map(|&b| byte_to_pixel(b)).collect()
    }
}

/// Parses a binary PGM (P5) with maxval 255. Comments are not supported.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(QahmError::Format("truncated PGM header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or("").to_string());
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    if fields[0] != "P5" {
        return Err(QahmError::Format(format!("expected P5 magic, found `{}`", fields[0])));
    }
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| QahmError::Format(format!("bad PGM header field `{s}`")))
    };
    let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 255 {
        return Err(QahmError::Format(format!("unsupported maxval {maxval}")));
    }
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() != width * height {
        return Err(QahmError::Format(format!(
            "PGM raster holds {} bytes, header implies {}",
            raster.len(),
            width * height
        )));
    }
    Ok(GrayImage {
        width,
        height,
        pixels: raster.to_vec(),
    })
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    decode_pgm(&fs::read(path).map_err(|e| QahmError::io(path, e))?)
}

/// Cuts tile `n` back out of a grid written by [`encode_image_grid`].
pub fn grid_tile(img: &GrayImage, rows: usize, cols: usize, grid_cols: usize, n: usize) -> Vec<f64> {
    let (top, left) = ((n / grid_cols) * (rows + 1), (n % grid_cols) * (cols + 1));
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push(byte_to_pixel(img.pixels[(top + r) * img.width + left + c]));
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub bound: Option<f64>,
    pub exact_kl: Option<f64>,
    pub recon_mse: f64,
    pub nn_pairs: Vec<NeighborPair>,
}

fn json_number(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => "null".into(),
    }
}

impl EvalReport {
    pub fn copies(&self) -> usize {
        self.nn_pairs.iter().filter(|p| p.is_copy()).count()
    }

    /// Summary as one JSON object on a single line.
    pub fn summary_json(&self) -> String {
        format!(
            "{{\"bound\":{},\"exact_kl\":{},\"recon_mse\":{},\"nn_pairs\":{},\"exact_copies\":{}}}",
            json_number(self.bound),
            json_number(self.exact_kl),
            json_number(Some(self.recon_mse)),
            self.nn_pairs.len(),
            self.copies()
        )
    }

    /// `sample,dataset_index,distance,copy` rows.
    pub fn neighbors_csv(&self) -> String {
        let mut out = String::from("sample,dataset_index,distance,copy\n");
        for p in &self.nn_pairs {
            writeln!(out, "{},{},{},{}", p.sample, p.index, p.distance, p.is_copy() as u8).unwrap();
        }
        out
    }
}

//! Independent oracles: brute-force enumeration, a Taylor-series matrix
//! exponential, and finite differences. Nothing here calls the library's
//! own likelihood or enumeration code.
#![allow(dead_code)]

use qahm::nets::{BernoulliLayer, LayerWidths};
use qahm::rng::stream;
use qahm::{DeepNetwork, Direction, IsingModel, SpinVector, TrainState};
use rand::Rng;

pub fn sig2(x: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * x).exp())
}

/// Spins for integer `k`, bit `i` set meaning `+1` at position `i`.
pub fn spins(k: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| if (k >> i) & 1 == 1 { 1.0 } else { -1.0 }).collect()
}

pub fn layer_logits(layer: &BernoulliLayer, input: &[f64]) -> Vec<f64> {
    (0..layer.rows())
        .map(|i| layer.biases()[i] + (0..layer.cols()).map(|j| layer.weight(i, j) * input[j]).sum::<f64>())
        .collect()
}

pub fn layer_prob(layer: &BernoulliLayer, input: &[f64], out: &[f64]) -> f64 {
    layer_logits(layer, input)
        .iter()
        .zip(out)
        .map(|(&a, &s)| if s > 0.0 { sig2(a) } else { 1.0 - sig2(a) })
        .product()
}

pub fn brute_energy(model: &IsingModel, s: &[f64]) -> f64 {
    let n = model.n();
    let mut e = 0.0;
    for i in 0..n {
        e += model.field(i) * s[i];
        for j in i + 1..n {
            e += model.coupling(i, j) * s[i] * s[j];
        }
    }
    e
}

pub type Mat = Vec<Vec<f64>>;

fn matmul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

/// `exp(a)` by scaling and squaring around a 30-term Taylor series.
pub fn taylor_expm(a: &Mat) -> Mat {
    let n = a.len();
    let norm = a
        .iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let scaled: Mat = a.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
    let mut result: Mat = (0..n)
        .map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect())
        .collect();
    let mut term = result.clone();
    for k in 1..30 {
        term = matmul(&term, &scaled);
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v /= k as f64;
            }
        }
        for i in 0..n {
            for j in 0..n {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result);
    }
    result
}

/// `-beta H` with `H = E(Z) + gamma sum_i X_i`, built from scratch.
pub fn minus_beta_h(model: &IsingModel) -> Mat {
    let n = model.n();
    let dim = 1 << n;
    let b = model.beta();
    let mut m = vec![vec![0.0; dim]; dim];
    for k in 0..dim {
        m[k][k] = -b * brute_energy(model, &spins(k, n));
        for i in 0..n {
            m[k][k ^ (1 << i)] -= b * model.gamma();
        }
    }
    m
}

/// `(ln Z, <u|rho|u> for every u)` from the Taylor exponential.
pub fn oracle_gibbs(model: &IsingModel) -> (f64, Vec<f64>) {
    let dim = 1 << model.n();
    if model.gamma() == 0.0 {
        let w: Vec<f64> = (0..dim)
            .map(|k| (-model.beta() * brute_energy(model, &spins(k, model.n()))).exp())
            .collect();
        let z: f64 = w.iter().sum();
        return (z.ln(), w.iter().map(|x| x / z).collect());
    }
    let e = taylor_expm(&minus_beta_h(model));
    let z: f64 = (0..dim).map(|k| e[k][k]).sum();
    (z.ln(), (0..dim).map(|k| e[k][k] / z).collect())
}

/// Calls `f` with every joint configuration of layers of the given widths.
pub fn for_each_joint(widths: &[usize], mut f: impl FnMut(&[Vec<f64>])) {
    let total: usize = widths.iter().sum();
    for code in 0..1usize << total {
        let mut shift = 0;
        let layers: Vec<Vec<f64>> = widths
            .iter()
            .map(|&w| {
                let s = spins((code >> shift) & ((1 << w) - 1), w);
                shift += w;
                s
            })
            .collect();
        f(&layers);
    }
}

/// `Q(h | v)` for a joint hidden trajectory, shallowest layer first.
pub fn oracle_q(rec: &DeepNetwork, v: &[f64], hidden: &[Vec<f64>]) -> f64 {
    let mut p = 1.0;
    for (k, layer) in rec.layers.iter().enumerate() {
        let input = if k == 0 { v } else { hidden[k - 1].as_slice() };
        p *= layer_prob(layer, input, &hidden[k]);
    }
    p
}

/// `ln P(v, h^1..h^{L-1} | u)` with the unit-variance Gaussian convention
/// (constant dropped) for continuous pixels.
pub fn oracle_gen_log(gen: &DeepNetwork, v: &[f64], hidden: &[Vec<f64>]) -> f64 {
    let w = gen.widths();
    let mut total = 0.0;
    for (k, layer) in gen.layers.iter().enumerate() {
        total += layer_prob(layer, &hidden[k + 1], &hidden[k]).ln();
    }
    let head = gen.head.as_ref().unwrap();
    let u1 = &hidden[0];
    for i in 0..w.continuous {
        let a = head.continuous.biases()[i] + (0..u1.len()).map(|j| head.continuous.weight(i, j) * u1[j]).sum::<f64>();
        let d = v[i] - a.tanh();
        total -= 0.5 * d * d;
    }
    total += layer_prob(&head.binary, u1, &v[w.continuous..]).ln();
    total
}

/// The wake objective: mean over data of
/// `sum_h Q(h|v) [ln P(v, h | u) - beta E(u) - ln Z]`.
pub fn oracle_g(state: &TrainState, data: &[Vec<f64>]) -> f64 {
    let (log_z, _) = oracle_gibbs(&state.prior);
    let widths = state.widths().hidden.clone();
    let mut total = 0.0;
    for v in data {
        for_each_joint(&widths, |h| {
            let q = oracle_q(&state.recognition, v, h);
            let u = h.last().unwrap();
            let log_rho = -state.prior.beta() * brute_energy(&state.prior, u) - log_z;
            total += q * (oracle_gen_log(&state.generator, v, h) + log_rho);
        });
    }
    total / data.len() as f64
}

/// The variational bound at one point:
/// `sum_h Q(h|v) [ln P(v, h | u) - beta E(u) - ln Z - ln Q(h|v)]`.
pub fn oracle_bound(state: &TrainState, v: &[f64]) -> f64 {
    let (log_z, _) = oracle_gibbs(&state.prior);
    let mut total = 0.0;
    for_each_joint(&state.widths().hidden, |h| {
        let q = oracle_q(&state.recognition, v, h);
        let log_rho = -state.prior.beta() * brute_energy(&state.prior, h.last().unwrap()) - log_z;
        total += q * (oracle_gen_log(&state.generator, v, h) + log_rho - q.ln());
    });
    total
}

/// The sleep objective:
/// `sum_u P(u) sum_{h, v_b} P(h, v_b | u) ln Q(h, u | v)`, with continuous
/// pixels at their `tanh` means.
pub fn oracle_r(state: &TrainState) -> f64 {
    let gen = &state.generator;
    let w = gen.widths().clone();
    let (_, prior) = oracle_gibbs(&state.prior);
    let depth = w.hidden.len();
    let mut layer_widths = w.hidden.clone();
    layer_widths.push(w.binary);
    let mut total = 0.0;
    for_each_joint(&layer_widths, |all| {
        let hidden = &all[..depth];
        let vb = &all[depth];
        let u = &hidden[depth - 1];
        let pu = prior[index_of(u)];
        let mut p = pu;
        for (k, layer) in gen.layers.iter().enumerate() {
            p *= layer_prob(layer, &hidden[k + 1], &hidden[k]);
        }
        let head = gen.head.as_ref().unwrap();
        p *= layer_prob(&head.binary, &hidden[0], vb);
        let mut v: Vec<f64> = layer_logits_cont(gen, &hidden[0]);
        v.extend_from_slice(vb);
        total += p * oracle_q(&state.recognition, &v, hidden).ln();
    });
    total
}

fn layer_logits_cont(gen: &DeepNetwork, u1: &[f64]) -> Vec<f64> {
    let head = gen.head.as_ref().unwrap();
    (0..gen.widths().continuous)
        .map(|i| {
            (head.continuous.biases()[i] + (0..u1.len()).map(|j| head.continuous.weight(i, j) * u1[j]).sum::<f64>())
                .tanh()
        })
        .collect()
}

pub fn index_of(s: &[f64]) -> usize {
    s.iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, _)| 1 << i)
        .sum()
}

/// Exact `ln P(v)` by brute-force marginalization.
pub fn oracle_log_likelihood(state: &TrainState, v: &[f64]) -> f64 {
    let (_, prior) = oracle_gibbs(&state.prior);
    let mut p = 0.0;
    for_each_joint(&state.widths().hidden, |h| {
        p += prior[index_of(h.last().unwrap())] * oracle_gen_log(&state.generator, v, h).exp();
    });
    p.ln()
}

/// Central difference of `f` in one coordinate.
pub fn central_difference(x0: f64, step: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    (f(x0 + step) - f(x0 - step)) / (2.0 * step)
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// A model with every parameter uniform in `[-scale, scale]`.
pub fn random_state(widths: &LayerWidths, beta: f64, gamma: f64, scale: f64, seed: u64) -> TrainState {
    let mut rng = stream(seed, &[77]);
    let mut rec = DeepNetwork::zeros(Direction::Recognition, widths);
    let mut gen = DeepNetwork::zeros(Direction::Generator, widths);
    for net in [&mut rec, &mut gen] {
        for k in 0..net.parameters().len() {
            *net.parameter_mut(k) = rng.random_range(-scale..scale);
        }
    }
    let prior = random_ising(widths.deepest(), beta, gamma, scale, &mut rng);
    TrainState::from_parts(rec, gen, prior, None).unwrap()
}

pub fn random_ising<R: Rng + ?Sized>(n: usize, beta: f64, gamma: f64, scale: f64, rng: &mut R) -> IsingModel {
    let mut m = IsingModel::fully_connected(n, beta, gamma).unwrap();
    for i in 0..n {
        m.set_field(i, rng.random_range(-scale..=scale));
        for j in i + 1..n {
            m.set_coupling(i, j, rng.random_range(-scale..=scale)).unwrap();
        }
    }
    m
}

pub fn random_spins<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

pub fn spin_vec(s: &[f64]) -> SpinVector {
    SpinVector::new(s.to_vec()).unwrap()
}

/// One analytic-versus-numeric comparison.
#[derive(Debug)]
pub struct GradCheck {
    pub name: String,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    pub fn error(&self) -> f64 {
        relative_error(self.analytic, self.numeric)
    }
}

pub const FD_STEP: f64 = 1e-5;

/// Every generator, prior and recognition parameter of `state`, analytic
/// ascent directions against central differences of the exact objectives.
/// Prior entries compare `beta * step` with `dG/dtheta`.
pub fn gradient_checks(state: &TrainState, data: &[Vec<f64>]) -> Vec<GradCheck> {
    let mut out = Vec::new();
    let (gen_grad, data_moments) = qahm::trainer::exact_wake_gradient(state, data).unwrap();
    let (rec_grad, model_moments) = qahm::trainer::exact_sleep_gradient(state).unwrap();
    let prior_grad = qahm::ising::prior_gradient(&data_moments, &model_moments).unwrap();
    let beta = state.prior.beta();

    let analytic = gen_grad.flatten();
    let mut s = state.clone();
    for (k, &a) in analytic.iter().enumerate() {
        let x0 = *s.generator.parameter_mut(k);
        let numeric = central_difference(x0, FD_STEP, |x| {
            *s.generator.parameter_mut(k) = x;
            oracle_g(&s, data)
        });
        *s.generator.parameter_mut(k) = x0;
        out.push(GradCheck {
            name: format!("generator[{k}]"),
            analytic: a,
            numeric,
        });
    }
    let n = state.prior.n();
    for i in 0..n {
        for j in i + 1..n {
            let j0 = s.prior.coupling(i, j);
            let numeric = central_difference(j0, FD_STEP, |x| {
                s.prior.set_coupling(i, j, x).unwrap();
                oracle_g(&s, data)
            });
            s.prior.set_coupling(i, j, j0).unwrap();
            out.push(GradCheck {
                name: format!("J[{i},{j}]"),
                analytic: beta * prior_grad.couplings[&(i, j)],
                numeric,
            });
        }
    }
    for i in 0..n {
        let h0 = s.prior.field(i);
        let numeric = central_difference(h0, FD_STEP, |x| {
            s.prior.set_field(i, x);
            oracle_g(&s, data)
        });
        s.prior.set_field(i, h0);
        out.push(GradCheck {
            name: format!("h[{i}]"),
            analytic: beta * prior_grad.fields[i],
            numeric,
        });
    }
    for (k, &a) in rec_grad.flatten().iter().enumerate() {
        let x0 = *s.recognition.parameter_mut(k);
        let numeric = central_difference(x0, FD_STEP, |x| {
            *s.recognition.parameter_mut(k) = x;
            oracle_r(&s)
        });
        *s.recognition.parameter_mut(k) = x0;
        out.push(GradCheck {
            name: format!("recognition[{k}]"),
            analytic: a,
            numeric,
        });
    }
    out
}

//! Classical Ising models, exact Gibbs enumeration, moment statistics and the
//! moment-matching prior gradient.
//!
//! Energies follow `E(s) = sum_{i<j} J_ij s_i s_j + sum_i h_i s_i` and Gibbs
//! weights are `exp(-beta E(s))`, so a negative coupling favours alignment.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{check_len, QahmError, Result};
use crate::spin::SpinVector;

/// Largest model the classical enumerator accepts.
pub const EXACT_LIMIT: usize = 20;

/// Optional clipping ranges that mimic annealer hardware limits.
pub const HARDWARE_COUPLING_RANGE: f64 = 1.0;
pub const HARDWARE_FIELD_RANGE: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct IsingModel {
    n: usize,
    /// Canonical `i < j` keys.
    couplings: BTreeMap<(usize, usize), f64>,
    fields: Vec<f64>,
    beta: f64,
    gamma: f64,
}

impl IsingModel {
    /// A model with no couplings and zero fields.
    pub fn new(n: usize, beta: f64, gamma: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(QahmError::InvalidParameter(format!(
                "beta must be positive, got {beta}"
            )));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(QahmError::InvalidParameter(format!(
                "gamma must be nonnegative, got {gamma}"
            )));
        }
        Ok(IsingModel {
            n,
            couplings: BTreeMap::new(),
            fields: vec![0.0; n],
            beta,
            gamma,
        })
    }

    /// A model with an explicit (initially zero) coupling for every pair.
    pub fn fully_connected(n: usize, beta: f64, gamma: f64) -> Result<Self> {
        let mut m = Self::new(n, beta, gamma)?;
        for i in 0..n {
            for j in i + 1..n {
                m.couplings.insert((i, j), 0.0);
            }
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn set_beta(&mut self, beta: f64) -> Result<()> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(QahmError::InvalidParameter(format!(
                "beta must be positive, got {beta}"
            )));
        }
        self.beta = beta;
        Ok(())
    }

    pub fn set_gamma(&mut self, gamma: f64) -> Result<()> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(QahmError::InvalidParameter(format!(
                "gamma must be nonnegative, got {gamma}"
            )));
        }
        self.gamma = gamma;
        Ok(())
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn field(&self, i: usize) -> f64 {
        self.fields[i]
    }

    pub fn set_field(&mut self, i: usize, value: f64) {
        self.fields[i] = value;
    }

    pub fn fields_mut(&mut self) -> &mut [f64] {
        &mut self.fields
    }

    fn key(&self, i: usize, j: usize) -> Result<(usize, usize)> {
        if i == j {
            return Err(QahmError::InvalidParameter(format!("self-coupling on spin {i}")));
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        if b >= self.n {
            return Err(QahmError::shape("coupling index", self.n, b));
        }
        Ok((a, b))
    }

    /// Coupling between `i` and `j` in either order; zero when absent.
    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.couplings.get(&(a, b)).copied().unwrap_or(0.0)
    }

    pub fn set_coupling(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        let key = self.key(i, j)?;
        self.couplings.insert(key, value);
        Ok(())
    }

    pub fn add_coupling(&mut self, i: usize, j: usize, delta: f64) -> Result<()> {
        let key = self.key(i, j)?;
        *self.couplings.entry(key).or_insert(0.0) += delta;
        Ok(())
    }

    /// Couplings in canonical `(i, j)` order with `i < j`.
    pub fn couplings(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.couplings.iter().map(|(&k, &v)| (k, v))
    }

    pub fn coupling_count(&self) -> usize {
        self.couplings.len()
    }

    /// Per-spin neighbour lists `(j, J_ij)`.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for (&(i, j), &v) in &self.couplings {
            if v != 0.0 {
                adj[i].push((j, v));
                adj[j].push((i, v));
            }
        }
        adj
    }

    pub fn energy(&self, s: &SpinVector) -> Result<f64> {
        check_len("spin vector", self.n, s.len())?;
        Ok(self.energy_unchecked(s.as_slice()))
    }

    pub(crate) fn energy_unchecked(&self, s: &[f64]) -> f64 {
        let pair: f64 = self.couplings.iter().map(|(&(i, j), v)| v * s[i] * s[j]).sum();
        let field: f64 = self.fields.iter().zip(s).map(|(h, x)| h * x).sum();
        pair + field
    }

    /// Energies of all `2^n` states in [`SpinVector::from_index`] order.
    pub fn all_energies(&self) -> Vec<f64> {
        let n = self.n;
        (0..1usize << n)
            .map(|k| self.energy_unchecked(SpinVector::from_index(k, n).as_slice()))
            .collect()
    }

    /// Classical Gibbs distribution `exp(-beta E) / Z` over all `2^n` states.
    pub fn exact_distribution(&self) -> Result<Vec<f64>> {
        if self.gamma != 0.0 {
            return Err(QahmError::WrongBackend {
                backend: "exact-enum",
                operation: "handle a transverse field",
            });
        }
        self.classical_distribution()
    }

    /// Gibbs distribution of the diagonal part, ignoring any transverse field.
    pub(crate) fn classical_distribution(&self) -> Result<Vec<f64>> {
        if self.n > EXACT_LIMIT {
            return Err(QahmError::Capacity {
                what: "spins for exact enumeration",
                actual: self.n,
                limit: EXACT_LIMIT,
            });
        }
        let log_w: Vec<f64> = self.all_energies().into_iter().map(|e| -self.beta * e).collect();
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = w.iter().sum();
        Ok(w.into_iter().map(|x| x / z).collect())
    }

    /// `ln Z` of the classical model.
    pub fn classical_log_partition(&self) -> Result<f64> {
        if self.n > EXACT_LIMIT {
            return Err(QahmError::Capacity {
                what: "spins for exact enumeration",
                actual: self.n,
                limit: EXACT_LIMIT,
            });
        }
        let log_w: Vec<f64> = self.all_energies().into_iter().map(|e| -self.beta * e).collect();
        Ok(log_sum_exp(&log_w))
    }

    /// Clips couplings to `[-1, 1]` and fields to `[-2, 2]`.
    pub fn clip_to_hardware(&mut self) {
        for v in self.couplings.values_mut() {
            *v = v.clamp(-HARDWARE_COUPLING_RANGE, HARDWARE_COUPLING_RANGE);
        }
        for h in &mut self.fields {
            *h = h.clamp(-HARDWARE_FIELD_RANGE, HARDWARE_FIELD_RANGE);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.fields.iter().chain(self.couplings.values()).all(|v| v.is_finite())
            && self.beta.is_finite()
            && self.gamma.is_finite()
    }

    /// Applies `J += lr * dJ`, `h += lr * dh`.
    pub fn apply_gradient(&mut self, grad: &PriorGradient, lr: f64) -> Result<()> {
        check_len("field gradient", self.n, grad.fields.len())?;
        for (&(i, j), &g) in &grad.couplings {
            self.add_coupling(i, j, lr * g)?;
        }
        for (h, g) in self.fields.iter_mut().zip(&grad.fields) {
            *h += lr * g;
        }
        Ok(())
    }

    /// Line-based text form: `n beta gamma`, then `h i value` for every spin,
    /// then `J i j value` for every stored coupling. Numbers carry 17
    /// significant digits so parsing restores them bit for bit.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} {:.16e} {:.16e}", self.n, self.beta, self.gamma).unwrap();
        for (i, h) in self.fields.iter().enumerate() {
            writeln!(out, "h {i} {h:.16e}").unwrap();
        }
        for (&(i, j), v) in &self.couplings {
            writeln!(out, "J {i} {j} {v:.16e}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (ln, header) = lines.next().ok_or(QahmError::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(QahmError::Parse {
                line: ln,
                message: "header must be `n beta gamma`".into(),
            });
        }
        let n: usize = parse_field(parts[0], ln)?;
        let mut model = IsingModel::new(n, parse_field(parts[1], ln)?, parse_field(parts[2], ln)?).map_err(|e| {
            QahmError::Parse {
                line: ln,
                message: e.to_string(),
            }
        })?;
        for (ln, line) in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = |message: String| QahmError::Parse { line: ln, message };
            match parts.as_slice() {
                ["h", i, v] => {
                    let i: usize = parse_field(i, ln)?;
                    if i >= n {
                        return Err(bad(format!("field index {i} out of range")));
                    }
                    model.fields[i] = parse_field(v, ln)?;
                }
                ["J", i, j, v] => {
                    let i: usize = parse_field(i, ln)?;
                    let j: usize = parse_field(j, ln)?;
                    if i >= j || j >= n {
                        return Err(bad(format!("coupling ({i}, {j}) must satisfy i < j < n")));
                    }
                    model.couplings.insert((i, j), parse_field(v, ln)?);
                }
                _ => return Err(bad(format!("unrecognized line `{line}`"))),
            }
        }
        Ok(model)
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| QahmError::Parse {
        line,
        message: format!("cannot parse `{s}`"),
    })
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// First and second moments of a distribution over spin vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentStats {
    pub first: Vec<f64>,
    /// Dense symmetric `n x n` matrix of `<u_i u_j>`, diagonal 1.
    pub second: Vec<f64>,
    pub sample_count: usize,
}

impl MomentStats {
    pub fn zeros(n: usize) -> Self {
        MomentStats {
            first: vec![0.0; n],
            second: vec![0.0; n * n],
            sample_count: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.first.len()
    }

    pub fn pair(&self, i: usize, j: usize) -> f64 {
        self.second[i * self.n() + j]
    }

    /// Adds `weight * s` and `weight * s s^T`; call [`MomentStats::finish`] after.
    pub fn accumulate(&mut self, s: &[f64], weight: f64) {
        let n = self.n();
        for (i, &si) in s.iter().enumerate() {
            let w = weight * si;
            self.first[i] += w;
            let row = &mut self.second[i * n..(i + 1) * n];
            for (r, &sj) in row.iter_mut().zip(s) {
                *r += w * sj;
            }
        }
        self.sample_count += 1;
    }

    pub fn merge(&mut self, other: &MomentStats) {
        for (a, b) in self.first.iter_mut().zip(&other.first) {
            *a += b;
        }
        for (a, b) in self.second.iter_mut().zip(&other.second) {
            *a += b;
        }
        self.sample_count += other.sample_count;
    }

    /// Divides accumulated sums by `total_weight`.
    pub fn finish(&mut self, total_weight: f64) {
        self.first.iter_mut().for_each(|v| *v /= total_weight);
        self.second.iter_mut().for_each(|v| *v /= total_weight);
    }

    pub fn from_samples(n: usize, samples: &[SpinVector]) -> Result<Self> {
        let mut m = MomentStats::zeros(n);
        for s in samples {
            check_len("sample width", n, s.len())?;
            m.accumulate(s.as_slice(), 1.0);
        }
        m.finish(samples.len().max(1) as f64);
        Ok(m)
    }

    /// Exact moments of a probability table in [`SpinVector::from_index`] order.
    pub fn from_distribution(n: usize, probs: &[f64]) -> Result<Self> {
        check_len("distribution length", 1 << n, probs.len())?;
        let mut m = MomentStats::zeros(n);
        for (k, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                m.accumulate(SpinVector::from_index(k, n).as_slice(), p);
            }
        }
        m.sample_count = probs.len();
        Ok(m)
    }

    /// Euclidean distance over first moments and upper-triangle second moments.
    pub fn distance(&self, other: &MomentStats) -> f64 {
        let n = self.n();
        let mut acc: f64 = self
            .first
            .iter()
            .zip(&other.first)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        for i in 0..n {
            for j in i + 1..n {
                let d = self.pair(i, j) - other.pair(i, j);
                acc += d * d;
            }
        }
        acc.sqrt()
    }
}

/// Ascent direction for `(J, h)` with the inverse temperature folded into the
/// learning rate.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorGradient {
    pub couplings: BTreeMap<(usize, usize), f64>,
    pub fields: Vec<f64>,
}

impl PriorGradient {
    pub fn max_abs(&self) -> f64 {
        self.couplings
            .values()
            .chain(&self.fields)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.couplings.values_mut().for_each(|v| *v *= s);
        self.fields.iter_mut().for_each(|v| *v *= s);
        self
    }
}

/// `dJ_ij = <u_i u_j>_model - <u_i u_j>_data` and `dh_i = <u_i>_model - <u_i>_data`
/// for every pair `i < j`.
pub fn prior_gradient(data: &MomentStats, model: &MomentStats) -> Result<PriorGradient> {
    let n = data.n();
    check_len("model moments", n, model.n())?;
    let mut couplings = BTreeMap::new();
    for i in 0..n {
        for j in i + 1..n {
            couplings.insert((i, j), model.pair(i, j) - data.pair(i, j));
        }
    }
    let fields = model.first.iter().zip(&data.first).map(|(m, d)| m - d).collect();
    Ok(PriorGradient { couplings, fields })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_energy() {
        let m = IsingModel::new(3, 1.0, 0.0).unwrap();
        for k in 0..8 {
            assert_eq!(m.energy(&SpinVector::from_index(k, 3)).unwrap(), 0.0);
        }
    }

    #[test]
    fn two_spin_energy() {
        let mut m = IsingModel::new(2, 1.0, 0.0).unwrap();
        m.set_coupling(0, 1, 1.0).unwrap();
        let up = SpinVector::new(vec![1.0, 1.0]).unwrap();
        let mixed = SpinVector::new(vec![1.0, -1.0]).unwrap();
        assert_eq!(m.energy(&up).unwrap(), 1.0);
        assert_eq!(m.energy(&mixed).unwrap(), -1.0);
        assert!(m.energy(&SpinVector::filled(3, 1.0)).is_err());
    }

    #[test]
    fn rejects_self_coupling_and_bad_beta() {
        let mut m = IsingModel::new(2, 1.0, 0.0).unwrap();
        assert!(m.set_coupling(1, 1, 0.3).is_err());
        assert!(IsingModel::new(2, 0.0, 0.0).is_err());
        assert!(IsingModel::new(2, 1.0, -0.1).is_err());
    }

    #[test]
    fn coupling_is_symmetric() {
        let mut m = IsingModel::new(3, 1.0, 0.0).unwrap();
        m.set_coupling(2, 0, 0.7).unwrap();
        assert_eq!(m.coupling(0, 2), 0.7);
        assert_eq!(m.coupling(2, 0), 0.7);
        assert_eq!(m.couplings().next().unwrap().0, (0, 2));
    }

    #[test]
    fn single_spin_distribution() {
        let m = IsingModel::new(1, 1.0, 0.0).unwrap();
        assert_eq!(m.exact_distribution().unwrap(), vec![0.5, 0.5]);

        let mut m = IsingModel::new(1, 1.0, 0.0).unwrap();
        m.set_field(0, 0.5);
        let p = m.exact_distribution().unwrap();
        let expected_up = (-0.5f64).exp() / ((-0.5f64).exp() + 0.5f64.exp());
        assert!((p[1] - expected_up).abs() < 1e-15);
        assert!((p[1] - 0.268_941).abs() < 1e-6);
    }

    #[test]
    fn ferromagnetic_ground_states() {
        let mut m = IsingModel::new(2, 20.0, 0.0).unwrap();
        m.set_coupling(0, 1, -1.0).unwrap();
        let p = m.exact_distribution().unwrap();
        let up = SpinVector::filled(2, 1.0).to_index();
        let down = SpinVector::filled(2, -1.0).to_index();
        assert!((p[up] - 0.5).abs() < 1e-8);
        assert!((p[down] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn exact_backend_rejects_transverse_field_and_large_n() {
        assert!(matches!(
            IsingModel::new(2, 1.0, 0.5).unwrap().exact_distribution(),
            Err(QahmError::WrongBackend { .. })
        ));
        assert!(matches!(
            IsingModel::new(21, 1.0, 0.0).unwrap().exact_distribution(),
            Err(QahmError::Capacity { .. })
        ));
    }

    #[test]
    fn gradient_fixed_point_and_substitution() {
        let mut a = MomentStats::zeros(2);
        a.first = vec![0.3, -0.2];
        a.second = vec![1.0, 0.1, 0.1, 1.0];
        let g = prior_gradient(&a, &a).unwrap();
        assert_eq!(g.max_abs(), 0.0);

        let mut data = MomentStats::zeros(1);
        data.first = vec![1.0];
        let model = MomentStats::zeros(1);
        assert_eq!(prior_gradient(&data, &model).unwrap().fields, vec![-1.0]);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let mut m = IsingModel::new(3, 0.7, 0.1).unwrap();
        m.set_field(0, 1.0 / 3.0);
        m.set_field(2, -2.0e-17);
        m.set_coupling(0, 2, std::f64::consts::PI).unwrap();
        m.set_coupling(1, 2, -0.1).unwrap();
        let text = m.to_text();
        let back = IsingModel::from_text(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn text_parse_errors_carry_line_numbers() {
        let err = IsingModel::from_text("2 1.0 0.0\nh 0 0.5\nJ 1 0 0.3\n").unwrap_err();
        assert!(matches!(err, QahmError::Parse { line: 3, .. }));
    }
}

//! Encoding a univariate Gaussian as an Ising energy over a weighted sum of
//! spins, `x = sum_i w_i s_i`, with `E(s) = (x - mu)^2 / (2 sigma^2)`.
//!
//! Expanding the square gives coefficients `J_ij = w_i w_j / (2 sigma^2)` on
//! every ordered pair `i != j` and `h_i = -mu w_i / sigma^2`. An [`IsingModel`]
//! stores one coupling per unordered pair, so its coupling is `2 J_ij`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{QahmError, Result};
use crate::ising::{log_sum_exp, IsingModel};
use crate::spin::SpinVector;

/// Maximum number of weights for [`induced_x_distribution`].
pub const INDUCED_LIMIT: usize = 16;

/// Largest clique in any chimera graph.
pub const CHIMERA_MAX_CLIQUE: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianEncoding {
    pub mu: f64,
    pub sigma: f64,
    pub weights: Vec<f64>,
    pub model: IsingModel,
}

impl GaussianEncoding {
    pub fn n(&self) -> usize {
        self.weights.len()
    }

    /// Ordered-pair coefficient `w_i w_j / (2 sigma^2)` (zero on the diagonal).
    pub fn pair_coefficient(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        self.weights[i] * self.weights[j] / (2.0 * self.sigma * self.sigma)
    }

    /// `h_i = -mu w_i / sigma^2`.
    pub fn field(&self, i: usize) -> f64 {
        -self.mu * self.weights[i] / (self.sigma * self.sigma)
    }

    pub fn x(&self, s: &SpinVector) -> f64 {
        self.weights.iter().zip(s.iter()).map(|(w, v)| w * v).sum()
    }

    /// `(x - mu)^2 / (2 sigma^2)`.
    pub fn quadratic_energy(&self, s: &SpinVector) -> f64 {
        let d = self.x(s) - self.mu;
        d * d / (2.0 * self.sigma * self.sigma)
    }

    /// The constant dropped from the quadratic form.
    pub fn offset(&self) -> f64 {
        let w2: f64 = self.weights.iter().map(|w| w * w).sum();
        (w2 + self.mu * self.mu) / (2.0 * self.sigma * self.sigma)
    }

    /// Plain-text listing of the ordered-pair coefficients and fields.
    pub fn to_report(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# mu {} sigma {} weights {:?}", self.mu, self.sigma, self.weights).unwrap();
        writeln!(out, "# J_ij = w_i w_j / 2 sigma^2 over ordered pairs i != j").unwrap();
        for i in 0..self.n() {
            writeln!(out, "h {i} {}", self.field(i)).unwrap();
        }
        for i in 0..self.n() {
            for j in i + 1..self.n() {
                writeln!(out, "J {i} {j} {}", self.pair_coefficient(i, j)).unwrap();
            }
        }
        out
    }
}

/// Builds the encoding at `beta = 1`, `gamma = 0`.
pub fn encode_gaussian(mu: f64, sigma: f64, weights: &[f64]) -> Result<GaussianEncoding> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(QahmError::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if weights.is_empty() {
        return Err(QahmError::InvalidParameter("at least one weight is required".into()));
    }
    if !mu.is_finite() || weights.iter().any(|w| !w.is_finite()) {
        return Err(QahmError::InvalidParameter("mu and weights must be finite".into()));
    }
    let n = weights.len();
    let mut model = IsingModel::new(n, 1.0, 0.0)?;
    let s2 = sigma * sigma;
    for i in 0..n {
        model.set_field(i, -mu * weights[i] / s2);
        for j in i + 1..n {
            let c = weights[i] * weights[j] / s2;
            if c != 0.0 {
                model.set_coupling(i, j, c)?;
            }
        }
    }
    Ok(GaussianEncoding {
        mu,
        sigma,
        weights: weights.to_vec(),
        model,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CliqueReport {
    /// Pairs `(i, j)`, `i < j`, whose coupling is zero.
    pub missing: Vec<(usize, usize)>,
    /// Qubits with zero weight.
    pub zero_weight: Vec<usize>,
    /// Zero-weight qubits that nonetheless carry a nonzero coupling.
    pub connected_zero_weight: Vec<usize>,
    /// Every missing edge touches a zero-weight qubit.
    pub implication_holds: bool,
    /// Qubits that contribute to `x` and therefore need a full clique.
    pub effective_qubits: usize,
}

impl CliqueReport {
    pub fn ok(&self) -> bool {
        self.implication_holds && self.connected_zero_weight.is_empty()
    }

    /// Notes how many effective qubits a chimera graph can host natively.
    pub fn capability_note(&self) -> String {
        format!(
            "native encoding needs a {}-clique; chimera graphs contain cliques of at most {}, \
             so at most {} effective qubits fit without embedding",
            self.effective_qubits,
            CHIMERA_MAX_CLIQUE,
            CHIMERA_MAX_CLIQUE.min(self.effective_qubits)
        )
    }
}

pub fn clique_check(model: &IsingModel, weights: &[f64]) -> Result<CliqueReport> {
    crate::error::check_len("weights", model.n(), weights.len())?;
    let n = model.n();
    let mut missing = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if model.coupling(i, j) == 0.0 {
                missing.push((i, j));
            }
        }
    }
    let zero_weight: Vec<usize> = (0..n).filter(|&i| weights[i] == 0.0).collect();
    let connected_zero_weight = zero_weight
        .iter()
        .copied()
        .filter(|&i| (0..n).any(|k| k != i && model.coupling(i, k) != 0.0))
        .collect();
    let implication_holds = missing.iter().all(|&(i, j)| weights[i] == 0.0 || weights[j] == 0.0);
    Ok(CliqueReport {
        missing,
        effective_qubits: n - zero_weight.len(),
        zero_weight,
        connected_zero_weight,
        implication_holds,
    })
}

/// Exact distribution of `x = sum_i w_i s_i`, sorted by `x`. States whose
/// `x` values agree to 12 significant digits share a bin.
pub fn induced_x_distribution(enc: &GaussianEncoding) -> Result<Vec<(f64, f64)>> {
    let n = enc.n();
    if n > INDUCED_LIMIT {
        return Err(QahmError::Capacity {
            what: "encoding weights",
            actual: n,
            limit: INDUCED_LIMIT,
        });
    }
    let log_w: Vec<f64> = (0..1usize << n)
        .map(|k| -enc.model.energy_unchecked(SpinVector::from_index(k, n).as_slice()))
        .collect();
    let log_z = log_sum_exp(&log_w);
    let mut bins: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    for (k, lw) in log_w.iter().enumerate() {
        let x = enc.x(&SpinVector::from_index(k, n));
        let scale = enc.weights.iter().fold(1.0f64, |m, w| m.max(w.abs())) * n as f64;
        let key = (x / scale * 1e12).round() as i64;
        let e = bins.entry(key).or_insert((x, 0.0));
        e.1 += (lw - log_z).exp();
    }
    Ok(bins.into_values().collect())
}

pub fn distribution_csv(table: &[(f64, f64)]) -> String {
    let mut out = String::from("x,probability\n");
    for (x, p) in table {
        writeln!(out, "{x},{p}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_pair() {
        let e = encode_gaussian(0.0, 1.0, &[1.0, 1.0]).unwrap();
        assert_eq!(e.pair_coefficient(0, 1), 0.5);
        assert_eq!(e.model.fields(), &[0.0, 0.0]);
        assert_eq!(e.model.coupling(0, 1), 1.0);
    }

    #[test]
    fn single_weight_with_mean() {
        let e = encode_gaussian(2.0, 1.0, &[1.0]).unwrap();
        assert_eq!(e.field(0), -2.0);
        assert_eq!(e.model.coupling_count(), 0);
    }

    #[test]
    fn sigma_must_be_positive() {
        assert!(encode_gaussian(0.0, 0.0, &[1.0]).is_err());
        assert!(encode_gaussian(0.0, -1.0, &[1.0]).is_err());
    }

    #[test]
    fn zero_weight_qubit_is_disconnected() {
        let w = [1.0, 0.0, 1.0];
        let e = encode_gaussian(0.3, 1.0, &w).unwrap();
        let r = clique_check(&e.model, &w).unwrap();
        assert_eq!(r.missing, vec![(0, 1), (1, 2)]);
        assert_eq!(r.zero_weight, vec![1]);
        assert!(r.ok());
        assert_eq!(r.effective_qubits, 2);
    }

    #[test]
    fn symmetric_single_spin() {
        let e = encode_gaussian(0.0, 1.0, &[1.0]).unwrap();
        let d = induced_x_distribution(&e).unwrap();
        assert_eq!(d.len(), 2);
        assert!((d[0].1 - 0.5).abs() < 1e-15 && (d[1].1 - 0.5).abs() < 1e-15);
    }
}

//! Dense transverse-field Ising Hamiltonians for small `n`.
//!
//! `H = sum_{i<j} J_ij Z_i Z_j + sum_i h_i Z_i + gamma sum_i X_i`, and the
//! Gibbs state `rho = exp(-beta H) / Z` is obtained from a symmetric
//! eigendecomposition.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_len, QahmError, Result};
use crate::ising::{log_sum_exp, IsingModel};
use crate::spin::SpinVector;

/// Largest model the dense eigensolver accepts (a 4096 x 4096 matrix).
pub const QUANTUM_LIMIT: usize = 12;

/// Tolerance used by [`verify_jensen`] to decide that the bound holds.
pub const JENSEN_SLACK: f64 = 1e-9;

fn check_capacity(model: &IsingModel) -> Result<()> {
    if model.n() > QUANTUM_LIMIT {
        Err(QahmError::Capacity {
            what: "spins for dense diagonalization",
            actual: model.n(),
            limit: QUANTUM_LIMIT,
        })
    } else {
        Ok(())
    }
}

/// Dense Hamiltonian in the computational basis, ordered as
/// [`SpinVector::from_index`].
pub fn hamiltonian_matrix(model: &IsingModel) -> Result<DMatrix<f64>> {
    check_capacity(model)?;
    let n = model.n();
    let dim = 1usize << n;
    let mut h = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(model.all_energies()));
    let gamma = model.gamma();
    if gamma != 0.0 {
        for k in 0..dim {
            for i in 0..n {
                h[(k, k ^ (1 << i))] += gamma;
            }
        }
    }
    Ok(h)
}

/// Spectral data of the Gibbs state.
#[derive(Clone, Debug)]
pub struct GibbsSpectrum {
    /// Energies `E_m` of the Hamiltonian.
    pub energies: Vec<f64>,
    /// Eigenvectors as columns.
    pub vectors: DMatrix<f64>,
    pub beta: f64,
    pub log_partition: f64,
}

impl GibbsSpectrum {
    pub fn new(model: &IsingModel) -> Result<Self> {
        let h = hamiltonian_matrix(model)?;
        let eig = SymmetricEigen::new(h);
        let energies: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let log_w: Vec<f64> = energies.iter().map(|e| -model.beta() * e).collect();
        Ok(GibbsSpectrum {
            log_partition: log_sum_exp(&log_w),
            energies,
            vectors: eig.eigenvectors,
            beta: model.beta(),
        })
    }

    /// `ln <m|rho|m>` eigenvalue of `ln rho` for eigenstate `m`.
    fn log_eigen_weight(&self, m: usize) -> f64 {
        -self.beta * self.energies[m] - self.log_partition
    }

    /// `<u|rho|u>` for every basis state.
    pub fn diagonal(&self) -> Vec<f64> {
        let dim = self.energies.len();
        let weights: Vec<f64> = (0..dim).map(|m| self.log_eigen_weight(m).exp()).collect();
        (0..dim)
            .map(|k| {
                (0..dim)
                    .map(|m| {
                        let c = self.vectors[(k, m)];
                        c * c * weights[m]
                    })
                    .sum()
            })
            .collect()
    }

    /// `<u|ln rho|u>` for basis state `k`, with `ln rho` applied as a matrix.
    pub fn log_rho_diagonal(&self, k: usize) -> f64 {
        (0..self.energies.len())
            .map(|m| {
                let c = self.vectors[(k, m)];
                c * c * self.log_eigen_weight(m)
            })
            .sum()
    }
}

/// `P(u) = <u|rho|u>` over all `2^n` basis states.
pub fn quantum_diagonal_distribution(model: &IsingModel) -> Result<Vec<f64>> {
    Ok(GibbsSpectrum::new(model)?.diagonal())
}

/// `ln Z` of the quantum Gibbs state (equals the classical one at `gamma = 0`).
pub fn quantum_log_partition(model: &IsingModel) -> Result<f64> {
    Ok(GibbsSpectrum::new(model)?.log_partition)
}

/// Exact prior table: the classical Gibbs distribution at `gamma = 0`, the
/// diagonal of the quantum Gibbs state otherwise.
pub fn prior_probabilities(model: &IsingModel) -> Result<Vec<f64>> {
    if model.gamma() == 0.0 {
        model.exact_distribution()
    } else {
        quantum_diagonal_distribution(model)
    }
}

/// `ln Z` matching [`prior_probabilities`].
pub fn prior_log_partition(model: &IsingModel) -> Result<f64> {
    if model.gamma() == 0.0 {
        model.classical_log_partition()
    } else {
        quantum_log_partition(model)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JensenCheck {
    /// `ln <u|rho|u>`.
    pub lhs: f64,
    /// `<u|ln rho|u>`.
    pub rhs: f64,
    pub holds: bool,
}

impl JensenCheck {
    pub fn slack(&self) -> f64 {
        self.lhs - self.rhs
    }
}

/// Compares `ln <u|rho|u>` against its lower bound `<u|ln rho|u>`.
pub fn verify_jensen(model: &IsingModel, u: &SpinVector) -> Result<JensenCheck> {
    check_len("spin vector", model.n(), u.len())?;
    let spectrum = GibbsSpectrum::new(model)?;
    Ok(jensen_from_spectrum(&spectrum, u.to_index()))
}

/// Jensen check for every basis state, sharing one diagonalization.
pub fn verify_jensen_all(model: &IsingModel) -> Result<Vec<JensenCheck>> {
    let spectrum = GibbsSpectrum::new(model)?;
    Ok((0..1usize << model.n())
        .map(|k| jensen_from_spectrum(&spectrum, k))
        .collect())
}

fn jensen_from_spectrum(spectrum: &GibbsSpectrum, k: usize) -> JensenCheck {
    let dim = spectrum.energies.len();
    let p: f64 = (0..dim)
        .map(|m| {
            let c = spectrum.vectors[(k, m)];
            c * c * spectrum.log_eigen_weight(m).exp()
        })
        .sum();
    let lhs = p.ln();
    let rhs = spectrum.log_rho_diagonal(k);
    JensenCheck {
        lhs,
        rhs,
        holds: lhs >= rhs - JENSEN_SLACK,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_spin_symmetric_for_any_gamma() {
        for gamma in [0.0, 0.3, 2.0] {
            let m = IsingModel::new(1, 1.3, gamma).unwrap();
            let p = quantum_diagonal_distribution(&m).unwrap();
            assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn capacity_limit() {
        let m = IsingModel::new(13, 1.0, 0.5).unwrap();
        assert!(matches!(
            quantum_diagonal_distribution(&m),
            Err(QahmError::Capacity { .. })
        ));
    }

    #[test]
    fn log_rho_diagonal_matches_classical_energy() {
        // X has no diagonal, so <u|ln rho|u> = -beta E(u) - ln Z exactly.
        let mut m = IsingModel::new(3, 0.8, 0.7).unwrap();
        m.set_coupling(0, 1, 0.4).unwrap();
        m.set_coupling(1, 2, -0.9).unwrap();
        m.set_field(2, 0.3);
        let s = GibbsSpectrum::new(&m).unwrap();
        for k in 0..8 {
            let e = m.energy(&SpinVector::from_index(k, 3)).unwrap();
            assert!((s.log_rho_diagonal(k) - (-0.8 * e - s.log_partition)).abs() < 1e-10);
        }
    }
}

//! Driver and problem Hamiltonians for the periodic XXZ chain.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli_algebra::{herm_eigensystem, to_dense, DenseOperator, Pauli, PauliString};
use crate::schedule::Schedule;

/// Eigenvalues within this distance of the minimum count toward the ground
/// level's degeneracy.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Largest chain the dense representation is meant for.
pub const MAX_QUBITS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_qubits: usize,
    /// Exchange coupling `J`; the unit of energy and inverse time.
    pub coupling: f64,
    /// Anisotropy `Delta` of the `ZZ` bond.
    pub anisotropy: f64,
    /// Transverse driver amplitude `B`.
    pub driver: f64,
}

impl ModelParams {
    pub fn new(n_qubits: usize, coupling: f64, anisotropy: f64, driver: f64) -> Result<Self> {
        let p = Self { n_qubits, coupling, anisotropy, driver };
        p.validate()?;
        Ok(p)
    }

    /// `J = 1`, `Delta = -1`, `B = 1`.
    pub fn heisenberg(n_qubits: usize) -> Result<Self> {
        Self::new(n_qubits, 1.0, -1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits < 2 || self.n_qubits > MAX_QUBITS {
            return Err(Error::config(format!("qubit count must be in 2..={MAX_QUBITS}, got {}", self.n_qubits)));
        }
        if !(self.coupling > 0.0 && self.coupling.is_finite()) {
            return Err(Error::config(format!("coupling J must be positive, got {}", self.coupling)));
        }
        if !(self.driver > 0.0 && self.driver.is_finite()) {
            return Err(Error::config(format!("driver amplitude B must be positive, got {}", self.driver)));
        }
        if !self.anisotropy.is_finite() {
            return Err(Error::config("anisotropy must be finite"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }
}

/// `H_D = -B sum_i X_i`.
pub fn driver_terms(p: &ModelParams) -> Vec<PauliString> {
    (0..p.n_qubits)
        .map(|i| {
            let mut axes = vec![Pauli::I; p.n_qubits];
            axes[i] = Pauli::X;
            PauliString::new(axes, -p.driver).expect("finite driver")
        })
        .collect()
}

pub fn build_driver(p: &ModelParams) -> DenseOperator {
    sum_terms(&driver_terms(p), p.n_qubits)
}

/// The `3N` Pauli terms of `J sum_i (X_i X_{i+1} + Y_i Y_{i+1} + Delta Z_i Z_{i+1})`
/// with periodic wrap. For `N = 2` the wrap bond `(1, 0)` coincides with
/// `(0, 1)`, so each bond appears twice.
pub fn decompose_problem(p: &ModelParams) -> Vec<PauliString> {
    let n = p.n_qubits;
    let mut terms = Vec::with_capacity(3 * n);
    for (axis, coeff) in [(Pauli::X, p.coupling), (Pauli::Y, p.coupling), (Pauli::Z, p.coupling * p.anisotropy)] {
        for i in 0..n {
            terms.push(PauliString::two_site(n, i, axis, (i + 1) % n, axis, coeff));
        }
    }
    terms
}

pub fn build_problem(p: &ModelParams) -> DenseOperator {
    sum_terms(&decompose_problem(p), p.n_qubits)
}

fn sum_terms(terms: &[PauliString], n: usize) -> DenseOperator {
    let dim = 1 << n;
    terms.iter().fold(DenseOperator::zeros(dim, dim), |acc, t| {
        acc + to_dense(t, n).expect("terms built for this chain length")
    })
}

/// `H(t) = A_t H_P + B_t H_D`.
pub fn hamiltonian_at(sched: &Schedule, t: f64, p: &ModelParams) -> Result<DenseOperator> {
    let c = sched.evaluate(t)?;
    Ok(build_problem(p) * Complex64::from(c.problem) + build_driver(p) * Complex64::from(c.driver))
}

/// Problem and driver Hamiltonians for one annealing run, in dense and
/// Pauli-term form.
#[derive(Clone, Debug)]
pub struct AnnealingModel {
    n_qubits: usize,
    problem_terms: Vec<PauliString>,
    driver_terms: Vec<PauliString>,
    problem: DenseOperator,
    driver: DenseOperator,
}

impl AnnealingModel {
    pub fn from_terms(n_qubits: usize, problem_terms: Vec<PauliString>, driver_terms: Vec<PauliString>) -> Result<Self> {
        if n_qubits == 0 || n_qubits > MAX_QUBITS {
            return Err(Error::config(format!("qubit count must be in 1..={MAX_QUBITS}, got {n_qubits}")));
        }
        let dense = |terms: &[PauliString]| -> Result<DenseOperator> {
            let dim = 1 << n_qubits;
            terms.iter().try_fold(DenseOperator::zeros(dim, dim), |acc, t| Ok(acc + to_dense(t, n_qubits)?))
        };
        let problem = dense(&problem_terms)?;
        let driver = dense(&driver_terms)?;
        Ok(Self { n_qubits, problem_terms, driver_terms, problem, driver })
    }

    /// Periodic XXZ problem with the transverse-field driver.
    pub fn heisenberg(p: &ModelParams) -> Result<Self> {
        p.validate()?;
        Self::from_terms(p.n_qubits, decompose_problem(p), driver_terms(p))
    }

    /// One qubit with `H_P = -field Z` and `H_D = -driver X`, the endpoints
    /// of the single-qubit sweep used for closed-form checks. The periodic
    /// chain has no meaningful one-site limit.
    pub fn single_qubit(field: f64, driver: f64) -> Result<Self> {
        Self::from_terms(
            1,
            vec![PauliString::new(vec![Pauli::Z], -field)?],
            vec![PauliString::new(vec![Pauli::X], -driver)?],
        )
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn problem(&self) -> &DenseOperator {
        &self.problem
    }

    pub fn driver(&self) -> &DenseOperator {
        &self.driver
    }

    pub fn problem_terms(&self) -> &[PauliString] {
        &self.problem_terms
    }

    pub fn driver_terms(&self) -> &[PauliString] {
        &self.driver_terms
    }

    pub fn hamiltonian_at(&self, sched: &Schedule, t: f64) -> Result<DenseOperator> {
        let c = sched.evaluate(t)?;
        Ok(self.combine(c.problem, c.driver))
    }

    pub fn combine(&self, problem: f64, driver: f64) -> DenseOperator {
        &self.problem * Complex64::from(problem) + &self.driver * Complex64::from(driver)
    }

    /// Lowest eigenvalue of the problem Hamiltonian and its multiplicity.
    pub fn ground_level(&self) -> Result<GroundLevel> {
        let eig = herm_eigensystem(&self.problem)?;
        let energy = eig.lowest();
        let degeneracy = eig.values.iter().filter(|&&v| v - energy <= DEGENERACY_TOL).count();
        Ok(GroundLevel { energy, degeneracy })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundLevel {
    pub energy: f64,
    pub degeneracy: usize,
}

/// Lowest eigenvalue of `H_P` and its multiplicity.
pub fn exact_ground_energy(p: &ModelParams) -> Result<GroundLevel> {
    AnnealingModel::heisenberg(p)?.ground_level()
}

/// `|+>^N` as a column vector.
pub fn plus_state(n_qubits: usize) -> nalgebra::DVector<Complex64> {
    let dim = 1 << n_qubits;
    nalgebra::DVector::from_element(dim, Complex64::from(1.0 / (dim as f64).sqrt()))
}

//! Dense complex-operator kernel: Pauli strings, projectors, Hermitian
//! eigensolves and matrix distances.
//!
//! Qubit `0` is the leftmost Kronecker factor, so it owns the most
//! significant bit of a computational-basis index.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense `2^N x 2^N` complex matrix. Energies are in units of `J`, `hbar = 1`.
pub type DenseOperator = DMatrix<Complex64>;

/// Element-wise tolerance for operators flagged Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> DenseOperator {
        let m = |a: [Complex64; 4]| DenseOperator::from_row_slice(2, 2, &a);
        match self {
            Pauli::I => m([ONE, ZERO, ZERO, ONE]),
            Pauli::X => m([ZERO, ONE, ONE, ZERO]),
            Pauli::Y => m([ZERO, -I, I, ZERO]),
            Pauli::Z => m([ONE, ZERO, ZERO, -ONE]),
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

impl TryFrom<char> for Pauli {
    type Error = Error;

    fn try_from(c: char) -> Result<Self> {
        match c.to_ascii_uppercase() {
            'I' => Ok(Pauli::I),
            'X' => Ok(Pauli::X),
            'Y' => Ok(Pauli::Y),
            'Z' => Ok(Pauli::Z),
            other => Err(Error::config(format!("unknown Pauli label {other:?}"))),
        }
    }
}

/// Outcome of a projective Pauli measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// A tensor product of single-site Pauli labels with a real coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliString {
    axes: Vec<Pauli>,
    coefficient: f64,
}

impl PauliString {
    pub fn new(axes: Vec<Pauli>, coefficient: f64) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::config("Pauli string needs at least one site"));
        }
        if !coefficient.is_finite() {
            return Err(Error::config(format!("non-finite Pauli coefficient {coefficient}")));
        }
        Ok(Self { axes, coefficient })
    }

    /// Parses a label such as `"XXI"` with coefficient 1.
    pub fn parse(label: &str) -> Result<Self> {
        let axes = label.chars().map(Pauli::try_from).collect::<Result<Vec<_>>>()?;
        Self::new(axes, 1.0)
    }

    pub fn identity(n_qubits: usize) -> Self {
        Self { axes: vec![Pauli::I; n_qubits.max(1)], coefficient: 1.0 }
    }

    /// `coefficient * P_a(site_a) P_b(site_b)` on `n_qubits` sites.
    pub fn two_site(n_qubits: usize, site_a: usize, a: Pauli, site_b: usize, b: Pauli, coefficient: f64) -> Self {
        let mut axes = vec![Pauli::I; n_qubits];
        axes[site_a] = a;
        axes[site_b] = b;
        Self { axes, coefficient }
    }

    pub fn axes(&self) -> &[Pauli] {
        &self.axes
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn n_qubits(&self) -> usize {
        self.axes.len()
    }

    pub fn label(&self) -> String {
        self.axes.iter().map(|p| p.symbol()).collect()
    }

    /// The same Pauli product with coefficient 1.
    pub fn bare(&self) -> Self {
        Self { axes: self.axes.clone(), coefficient: 1.0 }
    }

    pub fn is_identity(&self) -> bool {
        self.axes.iter().all(|&p| p == Pauli::I)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}*{}", self.coefficient, self.label())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}

/// Kronecker product of the single-site Paulis, scaled by the coefficient.
pub fn to_dense(ps: &PauliString, n_qubits: usize) -> Result<DenseOperator> {
    if ps.n_qubits() != n_qubits {
        return Err(Error::config(format!(
            "Pauli string {} has {} sites, expected {n_qubits}",
            ps.label(),
            ps.n_qubits()
        )));
    }
    let mut out = DenseOperator::from_element(1, 1, ONE);
    for axis in &ps.axes {
        out = out.kronecker(&axis.matrix());
    }
    Ok(out * Complex64::from(ps.coefficient))
}

/// `(I +- sigma) / 2` for a bare Pauli product.
pub fn projector(ps: &PauliString, sign: Sign) -> Result<DenseOperator> {
    if ps.coefficient != 1.0 {
        return Err(Error::config(format!(
            "projector needs a bare Pauli product, got coefficient {}",
            ps.coefficient
        )));
    }
    let sigma = to_dense(ps, ps.n_qubits())?;
    let dim = sigma.nrows();
    Ok((DenseOperator::identity(dim, dim) + sigma * Complex64::from(sign.value())) * Complex64::from(0.5))
}

/// Largest element-wise deviation `max |M - M^dagger|`.
pub fn hermiticity_defect(op: &DenseOperator) -> f64 {
    let n = op.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((op[(i, j)] - op[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Ascending real eigenvalues and the matching orthonormal eigenvectors
/// (as columns).
#[derive(Clone, Debug)]
pub struct Eigensystem {
    pub values: DVector<f64>,
    pub vectors: DenseOperator,
}

impl Eigensystem {
    pub fn lowest(&self) -> f64 {
        self.values[0]
    }

    /// `V diag(values) V^dagger`.
    pub fn reconstruct(&self) -> DenseOperator {
        let diag = DenseOperator::from_diagonal(&self.values.map(Complex64::from));
        &self.vectors * diag * self.vectors.adjoint()
    }
}

/// Hermitian eigensolve. Input must be Hermitian within a tolerance that
/// scales with its magnitude.
pub fn herm_eigensystem(op: &DenseOperator) -> Result<Eigensystem> {
    if !op.is_square() {
        return Err(Error::config(format!("eigensolve needs a square matrix, got {}x{}", op.nrows(), op.ncols())));
    }
    let scale = op.iter().fold(1.0_f64, |m, z| m.max(z.norm()));
    let defect = hermiticity_defect(op);
    if defect > HERMITIAN_TOL * scale {
        return Err(Error::Contract(format!("eigensolve input is not Hermitian (defect {defect:e})")));
    }
    let eig = op.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DenseOperator::zeros(op.nrows(), op.ncols());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(Eigensystem { values, vectors })
}

/// `||a - b||_F`.
pub fn frobenius_distance(a: &DenseOperator, b: &DenseOperator) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::config(format!("dimension mismatch {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt())
}

/// `Tr[a b]` without forming the product.
pub fn trace_product(a: &DenseOperator, b: &DenseOperator) -> Complex64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Number of qubits for a dimension, if it is a power of two.
pub fn qubits_for_dim(dim: usize) -> Option<usize> {
    (dim.is_power_of_two()).then(|| dim.trailing_zeros() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::from(re)
    }

    #[test]
    fn single_z_is_diag() {
        let z = to_dense(&PauliString::parse("Z").unwrap(), 1).unwrap();
        assert_eq!(z, DenseOperator::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)]));
    }

    #[test]
    fn identity_string() {
        let id = to_dense(&PauliString::parse("II").unwrap(), 2).unwrap();
        assert_eq!(id, DenseOperator::identity(4, 4));
    }

    #[test]
    fn xx_is_antidiagonal() {
        let xx = to_dense(&PauliString::parse("XX").unwrap(), 2).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i + j == 3 { 1.0 } else { 0.0 };
                assert_eq!(xx[(i, j)], c(want));
            }
        }
    }

    #[test]
    fn length_mismatch_is_config_error() {
        let err = to_dense(&PauliString::parse("XZ").unwrap(), 3).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn coefficient_scales() {
        let ps = PauliString::new(vec![Pauli::Y], -2.5).unwrap();
        let m = to_dense(&ps, 1).unwrap();
        assert_eq!(m[(0, 1)], Complex64::new(0.0, 2.5));
        assert!(PauliString::new(vec![Pauli::X], f64::NAN).is_err());
    }

    #[test]
    fn z_plus_projector() {
        let p = projector(&PauliString::parse("Z").unwrap(), Sign::Plus).unwrap();
        assert_eq!(p, DenseOperator::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(0.0)]));
    }

    #[test]
    fn xx_projector_rank_two() {
        let p = projector(&PauliString::parse("XX").unwrap(), Sign::Plus).unwrap();
        assert_abs_diff_eq!(p.trace().re, 2.0, epsilon = 1e-14);
        let eig = herm_eigensystem(&p).unwrap();
        let ones = eig.values.iter().filter(|v| (*v - 1.0).abs() < 1e-12).count();
        let zeros = eig.values.iter().filter(|v| v.abs() < 1e-12).count();
        assert_eq!((ones, zeros), (2, 2));
    }

    #[test]
    fn projector_rejects_scaled_string() {
        let ps = PauliString::new(vec![Pauli::Z], 0.5).unwrap();
        assert!(matches!(projector(&ps, Sign::Minus), Err(Error::Config(_))));
    }

    #[test]
    fn eigen_small_cases() {
        let z = to_dense(&PauliString::parse("Z").unwrap(), 1).unwrap();
        let eig = herm_eigensystem(&z).unwrap();
        assert_eq!(eig.values.as_slice(), &[-1.0, 1.0]);
        let p = projector(&PauliString::parse("Z").unwrap(), Sign::Plus).unwrap();
        let eig = herm_eigensystem(&p).unwrap();
        assert_abs_diff_eq!(eig.values[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(eig.values[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn eigen_rejects_non_hermitian() {
        let m = DenseOperator::from_row_slice(2, 2, &[c(0.0), c(1.0), c(0.0), c(0.0)]);
        assert!(matches!(herm_eigensystem(&m), Err(Error::Contract(_))));
    }

    #[test]
    fn frobenius_examples() {
        let x = to_dense(&PauliString::parse("X").unwrap(), 1).unwrap();
        let y = to_dense(&PauliString::parse("Y").unwrap(), 1).unwrap();
        assert_eq!(frobenius_distance(&x, &x).unwrap(), 0.0);
        assert_abs_diff_eq!(
            frobenius_distance(&DenseOperator::zeros(2, 2), &DenseOperator::identity(2, 2)).unwrap(),
            2f64.sqrt(),
            epsilon = 1e-15
        );
        // |X - Y|^2 sums |1 - (-i)|^2 + |1 - i|^2 = 4.
        assert_abs_diff_eq!(frobenius_distance(&x, &y).unwrap(), 2.0, epsilon = 1e-15);
        assert!(frobenius_distance(&x, &DenseOperator::identity(4, 4)).is_err());
    }

    fn pauli() -> impl Strategy<Value = Pauli> {
        prop_oneof![Just(Pauli::I), Just(Pauli::X), Just(Pauli::Y), Just(Pauli::Z)]
    }

    fn random_hermitian(dim: usize) -> impl Strategy<Value = DenseOperator> {
        prop::collection::vec(-1.0..1.0f64, 2 * dim * dim).prop_map(move |v| {
            let m = DenseOperator::from_fn(dim, dim, |i, j| Complex64::new(v[2 * (i * dim + j)], v[2 * (i * dim + j) + 1]));
            (&m + m.adjoint()) * c(0.5)
        })
    }

    proptest! {
        #[test]
        fn bare_strings_square_to_identity(axes in prop::collection::vec(pauli(), 1..5)) {
            let n = axes.len();
            let ps = PauliString::new(axes, 1.0).unwrap();
            let m = to_dense(&ps, n).unwrap();
            let id = DenseOperator::identity(1 << n, 1 << n);
            prop_assert!(frobenius_distance(&(&m * &m), &id).unwrap() < 1e-14);
            prop_assert!(hermiticity_defect(&m) == 0.0);
            let p = projector(&ps, Sign::Plus).unwrap();
            let q = projector(&ps, Sign::Minus).unwrap();
            prop_assert!(frobenius_distance(&(&p + &q), &id).unwrap() < 1e-14);
            prop_assert!((&p * &q).iter().all(|z| z.norm() <= 1e-14));
            prop_assert!(frobenius_distance(&(&p * &p), &p).unwrap() < 1e-14);
        }

        #[test]
        fn eigensystem_residual(h in (1usize..5).prop_flat_map(|n| random_hermitian(1 << n))) {
            let dim = h.nrows();
            let eig = herm_eigensystem(&h).unwrap();
            prop_assert!(eig.values.as_slice().windows(2).all(|w| w[0] <= w[1]));
            let resid = frobenius_distance(&h, &eig.reconstruct()).unwrap();
            prop_assert!(resid <= 1e-9 * dim as f64);
            let gram = eig.vectors.adjoint() * &eig.vectors;
            prop_assert!(frobenius_distance(&gram, &DenseOperator::identity(dim, dim)).unwrap() < 1e-10);
        }
    }
}

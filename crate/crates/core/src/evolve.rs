//! GKSL master-equation integration with a time-dependent Hamiltonian,
//! unitary propagators, and a superoperator oracle for channel duals.
//!
//! The noise model is uniform single-site Pauli dephasing on every axis:
//!
//! ```text
//! drho/dt = -i[H(t), rho] - (lambda/2) sum_i sum_{j in x,y,z} [s_i^j, [s_i^j, rho]]
//! ```
//!
//! All propagation is linear in the input; sub-normalized branches are never
//! renormalized.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::AnnealingModel;
use crate::pauli_algebra::{
    herm_eigensystem, hermiticity_defect, qubits_for_dim, to_dense, trace_product, DenseOperator, Pauli, PauliString,
    I, ONE, ZERO,
};
use crate::schedule::{Schedule, Segment};

/// Default integrator step, in units of `1/J`.
pub const DEFAULT_DT: f64 = 1e-3;
/// Hermitian inputs are re-symmetrized after this many steps.
pub const RESYMMETRIZE_EVERY: usize = 100;
/// Trace drift that aborts an integration.
pub const TRACE_FAILURE_TOL: f64 = 1e-6;
/// `||U^dagger U - I||_F` that aborts a unitary propagation.
pub const UNITARITY_FAILURE_TOL: f64 = 1e-6;
/// Hermiticity tolerance for density matrices.
pub const STATE_TOL: f64 = 1e-8;
/// Superoperators are `4^N x 4^N`; refuse anything larger than this `N`.
pub const SUPEROPERATOR_MAX_QUBITS: usize = 4;

/// Dense Hermitian state of dimension `2^N`. Projected branches carry trace
/// below one; nothing here renormalizes.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: DenseOperator,
}

impl DensityMatrix {
    pub fn from_matrix(matrix: DenseOperator) -> Result<Self> {
        if !matrix.is_square() || qubits_for_dim(matrix.nrows()).is_none() {
            return Err(Error::config(format!("density matrix must be 2^N square, got {:?}", matrix.shape())));
        }
        let defect = hermiticity_defect(&matrix);
        if defect > STATE_TOL {
            return Err(Error::Contract(format!("density matrix not Hermitian (defect {defect:e})")));
        }
        Ok(Self { matrix })
    }

    pub fn pure(state: &DVector<Complex64>) -> Result<Self> {
        Self::from_matrix(state * state.adjoint())
    }

    /// `|+><+|^{(x) N}`.
    pub fn plus_state(n_qubits: usize) -> Self {
        let dim = 1 << n_qubits;
        Self { matrix: DenseOperator::from_element(dim, dim, Complex64::from(1.0 / dim as f64)) }
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let dim = 1 << n_qubits;
        Self { matrix: DenseOperator::identity(dim, dim) * Complex64::from(1.0 / dim as f64) }
    }

    pub fn matrix(&self) -> &DenseOperator {
        &self.matrix
    }

    pub fn into_matrix(self) -> DenseOperator {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// `Re Tr[op rho]`.
    pub fn expectation(&self, op: &DenseOperator) -> f64 {
        trace_product(op, &self.matrix).re
    }

    /// `<v| rho |v>`.
    pub fn population(&self, v: &DVector<Complex64>) -> f64 {
        (v.adjoint() * &self.matrix * v)[(0, 0)].re
    }

    /// Population of `|+>^N`: the mean of all matrix entries.
    pub fn plus_population(&self) -> f64 {
        plus_population(&self.matrix)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let mut m = self.matrix.clone();
        symmetrize(&mut m);
        Ok(herm_eigensystem(&m)?.lowest())
    }

    /// `P rho P` for a Hermitian projector `P`.
    pub fn project(&self, projector: &DenseOperator) -> Result<Self> {
        if projector.shape() != self.matrix.shape() {
            return Err(Error::config("projector dimension does not match state"));
        }
        let mut m = projector * &self.matrix * projector;
        symmetrize(&mut m);
        Ok(Self { matrix: m })
    }
}

/// `<+|^N x |+>^N`.
pub fn plus_population(x: &DenseOperator) -> f64 {
    x.iter().map(|z| z.re).sum::<f64>() / x.nrows() as f64
}

fn symmetrize(m: &mut DenseOperator) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
        m[(j, j)].im = 0.0;
    }
}

/// Uniform decay rate `lambda` for every site and Pauli axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub rate: f64,
}

impl NoiseParams {
    pub fn new(rate: f64) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::config(format!("decay rate must be finite and >= 0, got {rate}")));
        }
        Ok(Self { rate })
    }

    pub fn noiseless() -> Self {
        Self { rate: 0.0 }
    }
}

/// Column-stacking vectorization: `vec(X)[i + d j] = X[i, j]`.
pub fn vectorize(x: &DenseOperator) -> DVector<Complex64> {
    DVector::from_column_slice(x.as_slice())
}

pub fn unvectorize(v: &DVector<Complex64>) -> Result<DenseOperator> {
    let dim = (v.len() as f64).sqrt().round() as usize;
    if dim * dim != v.len() {
        return Err(Error::config(format!("vector of length {} is not a vectorized square matrix", v.len())));
    }
    Ok(DenseOperator::from_column_slice(dim, dim, v.as_slice()))
}

/// A linear map on `d x d` matrices, as a `d^2 x d^2` matrix acting on
/// column-stacked vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Superoperator {
    matrix: DMatrix<Complex64>,
    dim: usize,
}

impl Superoperator {
    pub fn from_matrix(matrix: DMatrix<Complex64>) -> Result<Self> {
        let dim = (matrix.nrows() as f64).sqrt().round() as usize;
        if !matrix.is_square() || dim * dim != matrix.nrows() {
            return Err(Error::config(format!("superoperator shape {:?} is not d^2 x d^2", matrix.shape())));
        }
        Ok(Self { matrix, dim })
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: DMatrix::identity(dim * dim, dim * dim), dim }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// Dimension `d` of the matrices it acts on.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&self, x: &DenseOperator) -> Result<DenseOperator> {
        self.check_dim(x)?;
        unvectorize(&(&self.matrix * vectorize(x)))
    }

    /// Largest deviation of `vec(I)^dagger S` from `vec(I)^dagger`; zero for a
    /// trace-preserving map.
    pub fn trace_preservation_defect(&self) -> f64 {
        let d = self.dim;
        (0..d * d)
            .map(|col| {
                let tr: Complex64 = (0..d).map(|i| self.matrix[(i + d * i, col)]).sum();
                let want = if col % (d + 1) == 0 { ONE } else { ZERO };
                (tr - want).norm()
            })
            .fold(0.0, f64::max)
    }

    fn check_dim(&self, x: &DenseOperator) -> Result<()> {
        if x.shape() != (self.dim, self.dim) {
            return Err(Error::config(format!("operator {:?} does not match superoperator dim {}", x.shape(), self.dim)));
        }
        Ok(())
    }
}

/// Dense reference right-hand side, with the dissipator written literally as
/// nested commutators.
pub fn lindblad_rhs(rho: &DenseOperator, h: &DenseOperator, noise: &NoiseParams) -> Result<DenseOperator> {
    if rho.shape() != h.shape() || !rho.is_square() {
        return Err(Error::config(format!("rho {:?} and H {:?} disagree", rho.shape(), h.shape())));
    }
    let n = qubits_for_dim(rho.nrows()).ok_or_else(|| Error::config("dimension is not a power of two"))?;
    let mut out = (h * rho - rho * h) * (-I);
    if noise.rate > 0.0 {
        for site in 0..n {
            for axis in [Pauli::X, Pauli::Y, Pauli::Z] {
                let mut axes = vec![Pauli::I; n];
                axes[site] = axis;
                let s = to_dense(&PauliString::new(axes, 1.0)?, n)?;
                let inner = &s * rho - rho * &s;
                let outer = &s * &inner - &inner * &s;
                out -= outer * Complex64::from(noise.rate / 2.0);
            }
        }
    }
    Ok(out)
}

/// Row-sparse `H(t) = A H_P + B H_D` plus the closed-form dissipator.
#[derive(Clone, Debug)]
struct Generator {
    dim: usize,
    site_masks: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    problem: Vec<Complex64>,
    driver: Vec<Complex64>,
    rate: f64,
}

impl Generator {
    fn new(model: &AnnealingModel, noise: &NoiseParams) -> Self {
        let dim = model.dim();
        let (hp, hd) = (model.problem(), model.driver());
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let (mut cols, mut problem, mut driver) = (Vec::new(), Vec::new(), Vec::new());
        row_ptr.push(0);
        for a in 0..dim {
            for k in 0..dim {
                let (p, d) = (hp[(a, k)], hd[(a, k)]);
                if p != ZERO || d != ZERO {
                    cols.push(k);
                    problem.push(p);
                    driver.push(d);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { dim, site_masks: dim - 1, row_ptr, cols, problem, driver, rate: noise.rate }
    }

    fn hamiltonian(&self, a: f64, b: f64, out: &mut [Complex64]) {
        for ((o, p), d) in out.iter_mut().zip(&self.problem).zip(&self.driver) {
            *o = p * a + d * b;
        }
    }

    /// `out = -i[H, x] + D(x)` with `H` given by its sparse values `h`.
    fn apply(&self, h: &[Complex64], x: &[Complex64], out: &mut [Complex64], scratch: &mut [Complex64], hermitian: bool) {
        let d = self.dim;
        for b in 0..d {
            let col = &x[b * d..(b + 1) * d];
            let dst = &mut scratch[b * d..(b + 1) * d];
            for (a, slot) in dst.iter_mut().enumerate() {
                let mut acc = ZERO;
                for k in self.row_ptr[a]..self.row_ptr[a + 1] {
                    acc += h[k] * col[self.cols[k]];
                }
                *slot = acc;
            }
        }
        if hermitian {
            // x H = (H x)^dagger when x is Hermitian.
            for b in 0..d {
                for a in 0..d {
                    let diff = scratch[b * d + a] - scratch[a * d + b].conj();
                    out[b * d + a] = Complex64::new(diff.im, -diff.re);
                }
            }
        } else {
            for (o, s) in out.iter_mut().zip(scratch.iter()) {
                *o = Complex64::new(s.im, -s.re);
            }
            // Column b of x H is sum_k conj(H[b, k]) x[:, k].
            for b in 0..d {
                for k in self.row_ptr[b]..self.row_ptr[b + 1] {
                    let w = h[k].conj() * I;
                    let c = self.cols[k];
                    for a in 0..d {
                        out[b * d + a] += w * x[c * d + a];
                    }
                }
            }
        }
        if self.rate > 0.0 {
            self.add_dissipator(x, out);
        }
    }

    /// Per site: `lambda (sum_j s_j x s_j - 3x)`. Where the row and column
    /// bits agree this is `2 lambda (x[a^m, b^m] - x[a, b])`, otherwise
    /// `-4 lambda x[a, b]`.
    fn add_dissipator(&self, x: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim;
        let n = d.trailing_zeros();
        let two = 2.0 * self.rate;
        for b in 0..d {
            for a in 0..d {
                let differ = (a ^ b) & self.site_masks;
                let n_diff = differ.count_ones();
                let diag = -(2.0 * (n - n_diff) as f64 + 4.0 * n_diff as f64) * self.rate;
                let mut acc = x[b * d + a] * diag;
                let mut same = !differ & self.site_masks;
                while same != 0 {
                    let m = same & same.wrapping_neg();
                    acc += x[(b ^ m) * d + (a ^ m)] * two;
                    same &= same - 1;
                }
                out[b * d + a] += acc;
            }
        }
    }
}

/// A stretch of one schedule segment split into `steps` equal steps.
#[derive(Clone, Copy, Debug)]
struct Interval {
    start: f64,
    end: f64,
    steps: usize,
    segment: Segment,
}

impl Interval {
    fn step(&self) -> f64 {
        (self.end - self.start) / self.steps as f64
    }

    fn coefficients(&self, t: f64) -> (f64, f64) {
        (self.segment.problem.at(t), self.segment.driver.at(t))
    }
}

/// Splits `[t0, t1]` at every schedule kink and the measurement time, then
/// divides each piece into the fewest equal steps no longer than `dt`.
fn step_plan(sched: &Schedule, t0: f64, t1: f64, dt: f64) -> Result<Vec<Interval>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::config(format!("integrator step must be positive, got {dt}")));
    }
    let total = sched.total_duration();
    for t in [t0, t1] {
        if !(0.0..=total).contains(&t) {
            return Err(Error::Domain { t, total });
        }
    }
    if t1 < t0 {
        return Err(Error::config(format!("propagation end {t1} precedes start {t0}")));
    }
    let mut cuts = vec![t0];
    cuts.extend(sched.breakpoints().into_iter().filter(|&b| b > t0 && b < t1));
    cuts.push(t1);
    let mut plan = Vec::new();
    for w in cuts.windows(2) {
        let (start, end) = (w[0], w[1]);
        if end <= start {
            continue;
        }
        let mid = 0.5 * (start + end);
        let segment = *sched
            .segments()
            .iter()
            .find(|s| mid >= s.start && mid <= s.end)
            .expect("midpoint lies inside the schedule");
        let steps = ((end - start) / dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        plan.push(Interval { start, end, steps, segment });
    }
    Ok(plan)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Direction {
    /// Schroedinger picture, `t0 -> t1`.
    Forward,
    /// Adjoint (Heisenberg) picture, `t1 -> t0`.
    Dual,
}

/// Fixed-step RK4 integrator for one model, schedule and noise level.
#[derive(Clone, Debug)]
pub struct Propagator<'a> {
    sched: &'a Schedule,
    dt: f64,
    generator: Generator,
}

impl<'a> Propagator<'a> {
    pub fn new(model: &AnnealingModel, sched: &'a Schedule, noise: NoiseParams, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::config(format!("integrator step must be positive, got {dt}")));
        }
        Ok(Self { sched, dt, generator: Generator::new(model, &noise) })
    }

    pub fn schedule(&self) -> &Schedule {
        self.sched
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Evolves a (possibly sub-normalized) state from `t0` to `t1`.
    pub fn propagate(&self, rho0: &DensityMatrix, t0: f64, t1: f64) -> Result<DensityMatrix> {
        self.check_dim(rho0.matrix())?;
        let out = self.integrate(rho0.matrix(), t0, t1, Direction::Forward, true)?;
        Ok(DensityMatrix { matrix: out })
    }

    /// Evolves an arbitrary operator; no Hermitian symmetrization, so the map
    /// stays exactly linear.
    pub fn propagate_operator(&self, x: &DenseOperator, t0: f64, t1: f64) -> Result<DenseOperator> {
        self.check_dim(x)?;
        self.integrate(x, t0, t1, Direction::Forward, false)
    }

    /// Applies the adjoint of the `t0 -> t1` channel to a Hermitian operator
    /// by integrating the Heisenberg-picture equation from `t1` back to `t0`.
    pub fn propagate_dual(&self, x: &DenseOperator, t0: f64, t1: f64) -> Result<DenseOperator> {
        self.check_dim(x)?;
        let hermitian = hermiticity_defect(x) <= STATE_TOL;
        self.integrate(x, t0, t1, Direction::Dual, hermitian)
    }

    fn check_dim(&self, x: &DenseOperator) -> Result<()> {
        let d = self.generator.dim;
        if x.shape() != (d, d) {
            return Err(Error::config(format!("operator {:?} does not match model dimension {d}", x.shape())));
        }
        Ok(())
    }

    fn integrate(&self, x0: &DenseOperator, t0: f64, t1: f64, dir: Direction, hermitian: bool) -> Result<DenseOperator> {
        let mut plan = step_plan(self.sched, t0, t1, self.dt)?;
        let d = self.generator.dim;
        let gen = &self.generator;
        let nnz = gen.cols.len();
        let mut x = x0.clone();
        let trace_in = x.trace();

        let mut acc = vec![ZERO; d * d];
        let mut stage = vec![ZERO; d * d];
        let mut k = vec![ZERO; d * d];
        let mut scratch = vec![ZERO; d * d];
        let (mut h0, mut hm, mut h1) = (vec![ZERO; nnz], vec![ZERO; nnz], vec![ZERO; nnz]);

        // The dual equation runs the same generator backwards with -H.
        let sign = match dir {
            Direction::Forward => 1.0,
            Direction::Dual => {
                plan.reverse();
                -1.0
            }
        };
        let mut steps_done = 0usize;
        for iv in &plan {
            let h = iv.step();
            for s in 0..iv.steps {
                let (ta, tm, tb) = match dir {
                    Direction::Forward => {
                        let t = iv.start + s as f64 * h;
                        (t, t + 0.5 * h, t + h)
                    }
                    Direction::Dual => {
                        let t = iv.end - s as f64 * h;
                        (t, t - 0.5 * h, t - h)
                    }
                };
                for (buf, t) in [(&mut h0, ta), (&mut hm, tm), (&mut h1, tb)] {
                    let (a, b) = iv.coefficients(t);
                    gen.hamiltonian(sign * a, sign * b, buf);
                }
                let xs = x.as_mut_slice();
                acc.copy_from_slice(xs);

                gen.apply(&h0, xs, &mut k, &mut scratch, hermitian);
                rk_stage(&mut acc, &mut stage, xs, &k, h / 6.0, 0.5 * h);
                gen.apply(&hm, &stage, &mut k, &mut scratch, hermitian);
                rk_stage(&mut acc, &mut stage, xs, &k, h / 3.0, 0.5 * h);
                gen.apply(&hm, &stage, &mut k, &mut scratch, hermitian);
                rk_stage(&mut acc, &mut stage, xs, &k, h / 3.0, h);
                gen.apply(&h1, &stage, &mut k, &mut scratch, hermitian);
                for (a, kv) in acc.iter_mut().zip(&k) {
                    *a += kv * (h / 6.0);
                }
                xs.copy_from_slice(&acc);

                steps_done += 1;
                if hermitian && steps_done % RESYMMETRIZE_EVERY == 0 {
                    symmetrize(&mut x);
                }
            }
        }
        if hermitian {
            symmetrize(&mut x);
        }
        let trace_out = x.trace();
        let drift = (trace_out - trace_in).norm();
        if !drift.is_finite() || drift > TRACE_FAILURE_TOL {
            return Err(Error::Integration(format!(
                "trace drifted by {drift:e} over [{t0}, {t1}] with dt = {}; reduce the step",
                self.dt
            )));
        }
        Ok(x)
    }
}

/// `acc += w k; stage = x + c k`.
#[inline]
fn rk_stage(acc: &mut [Complex64], stage: &mut [Complex64], x: &[Complex64], k: &[Complex64], w: f64, c: f64) {
    for i in 0..x.len() {
        acc[i] += k[i] * w;
        stage[i] = x[i] + k[i] * c;
    }
}

/// RK4 integration of the master equation from `t0` to `t1`.
pub fn propagate(
    rho0: &DensityMatrix,
    sched: &Schedule,
    t0: f64,
    t1: f64,
    model: &AnnealingModel,
    noise: NoiseParams,
    dt: f64,
) -> Result<DensityMatrix> {
    Propagator::new(model, sched, noise, dt)?.propagate(rho0, t0, t1)
}

/// Time-ordered `exp(-i int H dt)` as a product of exact exponentials of the
/// midpoint Hamiltonian of each step.
pub fn unitary_propagator(sched: &Schedule, t0: f64, t1: f64, model: &AnnealingModel, dt: f64) -> Result<DenseOperator> {
    let plan = step_plan(sched, t0, t1, dt)?;
    let dim = model.dim();
    let mut u = DenseOperator::identity(dim, dim);
    for iv in &plan {
        let h = iv.step();
        for s in 0..iv.steps {
            let (a, b) = iv.coefficients(iv.start + (s as f64 + 0.5) * h);
            let eig = herm_eigensystem(&model.combine(a, b))?;
            let phases = eig.values.map(|e| Complex64::from_polar(1.0, -e * h));
            let mut scaled = eig.vectors.clone();
            for (j, mut col) in scaled.column_iter_mut().enumerate() {
                col *= phases[j];
            }
            u = scaled * eig.vectors.adjoint() * u;
        }
    }
    let defect = (u.adjoint() * &u - DenseOperator::identity(dim, dim)).norm();
    if !(defect <= UNITARITY_FAILURE_TOL) {
        return Err(Error::Integration(format!("propagator lost unitarity ({defect:e})")));
    }
    Ok(u)
}

/// The `t0 -> t1` channel as a superoperator, built column by column from
/// propagated matrix units.
pub fn channel_superoperator(
    sched: &Schedule,
    t0: f64,
    t1: f64,
    model: &AnnealingModel,
    noise: NoiseParams,
    dt: f64,
) -> Result<Superoperator> {
    if model.n_qubits() > SUPEROPERATOR_MAX_QUBITS {
        return Err(Error::Resource(format!(
            "superoperator for {} qubits exceeds the {SUPEROPERATOR_MAX_QUBITS}-qubit guard",
            model.n_qubits()
        )));
    }
    let prop = Propagator::new(model, sched, noise, dt)?;
    let d = model.dim();
    let mut m = DMatrix::zeros(d * d, d * d);
    for col in 0..d * d {
        let mut unit = DenseOperator::zeros(d, d);
        unit[(col % d, col / d)] = ONE;
        let out = prop.propagate_operator(&unit, t0, t1)?;
        m.set_column(col, &vectorize(&out));
    }
    Superoperator::from_matrix(m)
}

/// The dual map `X -> sum_k G_k^dagger X G_k`, realized as the adjoint of the
/// superoperator matrix.
pub fn apply_dual_channel(s: &Superoperator, x: &DenseOperator) -> Result<DenseOperator> {
    s.check_dim(x)?;
    unvectorize(&(s.matrix.adjoint() * vectorize(x)))
}

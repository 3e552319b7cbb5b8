//! Single-qubit closed forms for the reverse anneal with trigonometric ramps,
//! plus a numerical check of the inverse-map property of a schedule.
//!
//! The forward half runs `H(t) = -sin(pi t / 2T) Z - cos(pi t / 2T) X` on
//! `[0, T]`, the return half `H(t) = -cos(pi (t - T) / 2T) Z - sin(pi (t - T) / 2T) X`
//! on `[T, 2T]`. All functions take `T >= 0`; `T = 0` yields the limiting values.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::Serialize;

use crate::evolve::unitary_propagator;
use crate::model::AnnealingModel;
use crate::pauli_algebra::{frobenius_distance, herm_eigensystem, DenseOperator};
use crate::schedule::Schedule;
use crate::{Error, Result};

pub type Spinor = Vector2<Complex64>;

/// Steps per unit time used by the numerical propagation oracle.
const ORACLE_STEPS_PER_UNIT: f64 = 2000.0;

/// `sqrt(pi^2 + 16 T^2)`.
fn omega(t: f64) -> f64 {
    (PI * PI + 16.0 * t * t).sqrt()
}

fn closed_form(t: f64, sign: f64) -> Spinor {
    let w = omega(t);
    let (s, c) = (w / 4.0).sin_cos();
    Spinor::new(Complex64::new(c, sign * 4.0 * t * s / w), Complex64::from(PI * s / w))
}

/// State after the forward half, started from `|+>`.
pub fn psi_t(t: f64) -> Spinor {
    closed_form(t, 1.0)
}

/// Adjoint of the return-half propagator applied to `|+>`.
pub fn phi_t(t: f64) -> Spinor {
    closed_form(t, -1.0)
}

/// Population of `|1>` after the forward half.
pub fn transition_rate(t: f64) -> f64 {
    let w = omega(t);
    (PI * (w / 4.0).sin() / w).powi(2)
}

/// Smallest eigenvalue of `rho rho_bar + rho_bar rho` with `rho = |psi><psi|`
/// and `rho_bar = |phi><phi|`.
pub fn lambda_min(t: f64) -> f64 {
    let w2 = PI * PI + 16.0 * t * t;
    let w = w2.sqrt();
    let (pi2, t2) = (PI * PI, t * t);
    let a = pi2 * pi2 + 8.0 * pi2 * t2 + 256.0 * t2 * t2 + 32.0 * pi2 * t2 * (w / 2.0).cos()
        - 8.0 * pi2 * t2 * w.cos();
    (a - w2 * a.max(0.0).sqrt()) / (w2 * w2)
}

/// The same eigenvalue expressed through the transition rate.
pub fn lambda_min_via_rate(t: f64) -> Result<f64> {
    let p = transition_rate(t);
    let radicand = 1.0 - 64.0 * t * t * p * p / (PI * PI);
    if radicand < -1e-12 {
        return Err(Error::Contract(format!("negative radicand {radicand:e} at T = {t}")));
    }
    Ok((radicand.max(0.0).sqrt() - 0.5).powi(2) - 0.25)
}

fn outer(v: &Spinor) -> Matrix2<Complex64> {
    v * v.adjoint()
}

/// `rho rho_bar + rho_bar rho` built from the closed-form states.
pub fn virtual_operator(t: f64) -> DenseOperator {
    let (r, rb) = (outer(&psi_t(t)), outer(&phi_t(t)));
    let m = r * rb + rb * r;
    DenseOperator::from_fn(2, 2, |i, j| m[(i, j)])
}

/// Smallest eigenvalue of [`virtual_operator`] by direct diagonalization.
pub fn lambda_min_numeric(t: f64) -> Result<f64> {
    Ok(herm_eigensystem(&virtual_operator(t))?.lowest())
}

/// Every closed-form quantity at one annealing time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingleQubitRQAResult {
    pub anneal_time: f64,
    pub psi: [Complex64; 2],
    pub phi: [Complex64; 2],
    pub lambda_min: f64,
    pub transition_rate: f64,
}

impl SingleQubitRQAResult {
    pub fn at(t: f64) -> Self {
        let (psi, phi) = (psi_t(t), phi_t(t));
        Self {
            anneal_time: t,
            psi: [psi[0], psi[1]],
            phi: [phi[0], phi[1]],
            lambda_min: lambda_min(t),
            transition_rate: transition_rate(t),
        }
    }
}

/// Which half of the trigonometric anneal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Half {
    Forward,
    Return,
}

fn pauli_x() -> Matrix2<Complex64> {
    Matrix2::new(0.0.into(), 1.0.into(), 1.0.into(), 0.0.into())
}

fn pauli_z() -> Matrix2<Complex64> {
    Matrix2::new(1.0.into(), 0.0.into(), 0.0.into(), (-1.0).into())
}

/// The trigonometric Hamiltonian at time `t` of an anneal of length `T`.
pub fn trigonometric_hamiltonian(half: Half, t: f64, anneal_time: f64) -> Matrix2<Complex64> {
    let (zc, xc) = match half {
        Half::Forward => {
            let a = PI * t / (2.0 * anneal_time);
            (-a.sin(), -a.cos())
        }
        Half::Return => {
            let a = PI * (t - anneal_time) / (2.0 * anneal_time);
            (-a.cos(), -a.sin())
        }
    };
    pauli_z() * Complex64::from(zc) + pauli_x() * Complex64::from(xc)
}

/// Time-ordered propagator of one half, by RK4 on the Schrodinger equation
/// for the 2x2 unitary.
pub fn trigonometric_propagator(half: Half, anneal_time: f64) -> Matrix2<Complex64> {
    if anneal_time <= 0.0 {
        return Matrix2::identity();
    }
    let (t0, t1) = match half {
        Half::Forward => (0.0, anneal_time),
        Half::Return => (anneal_time, 2.0 * anneal_time),
    };
    let steps = ((t1 - t0) * ORACLE_STEPS_PER_UNIT).ceil().max(200.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let mi = Complex64::new(0.0, -1.0);
    let f = |t: f64, u: &Matrix2<Complex64>| trigonometric_hamiltonian(half, t, anneal_time) * u * mi;
    let mut u = Matrix2::identity();
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        let k1 = f(t, &u);
        let k2 = f(t + h / 2.0, &(u + k1 * Complex64::from(h / 2.0)));
        let k3 = f(t + h / 2.0, &(u + k2 * Complex64::from(h / 2.0)));
        let k4 = f(t + h, &(u + k3 * Complex64::from(h)));
        u += (k1 + k2 * Complex64::from(2.0) + k3 * Complex64::from(2.0) + k4) * Complex64::from(h / 6.0);
    }
    u
}

fn plus() -> Spinor {
    Spinor::repeat(Complex64::from(std::f64::consts::FRAC_1_SQRT_2))
}

/// Numerical counterpart of [`psi_t`].
pub fn psi_numeric(t: f64) -> Spinor {
    trigonometric_propagator(Half::Forward, t) * plus()
}

/// Numerical counterpart of [`phi_t`].
pub fn phi_numeric(t: f64) -> Spinor {
    trigonometric_propagator(Half::Return, t).adjoint() * plus()
}

/// Frobenius distance between the return-half unitary and the adjoint of the
/// forward-half unitary, both split at the schedule's measurement time.
pub fn verify_inverse_map(sched: &Schedule, model: &AnnealingModel, dt: f64) -> Result<f64> {
    let tm = sched
        .measurement_time()
        .ok_or_else(|| Error::config(format!("the {} schedule has no measurement time", sched.kind())))?;
    let forward = unitary_propagator(sched, 0.0, tm, model, dt)?;
    let back = unitary_propagator(sched, tm, sched.total_duration(), model, dt)?;
    frobenius_distance(&back, &forward.adjoint())
}

/// One row of the single-qubit table: `(T, P, T^2 P^2, lambda_min, lambda_min_via_rate)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AnalyticRow {
    #[serde(rename = "T")]
    pub anneal_time: f64,
    #[serde(rename = "P")]
    pub transition_rate: f64,
    #[serde(rename = "T2P2")]
    pub t2p2: f64,
    pub lambda_min: f64,
    pub lambda_min_via_rate: f64,
}

pub fn analytic_row(t: f64) -> Result<AnalyticRow> {
    let p = transition_rate(t);
    Ok(AnalyticRow {
        anneal_time: t,
        transition_rate: p,
        t2p2: t * t * p * p,
        lambda_min: lambda_min(t),
        lambda_min_via_rate: lambda_min_via_rate(t)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::schedule::{make_emqa, make_rqa};
    use proptest::prelude::*;

    const ZERO_RATE_T: f64 = PI / 4.0 * 3.872_983_346_207_417; // (pi/4) sqrt(15)

    fn close(a: &Spinor, b: &Spinor) -> f64 {
        (a - b).norm()
    }

    #[test]
    fn zero_time_limits() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for v in [psi_t(0.0), phi_t(0.0)] {
            assert!((v[0] - Complex64::from(h)).norm() < 1e-15);
            assert!((v[1] - Complex64::from(h)).norm() < 1e-15);
        }
        assert!((transition_rate(0.0) - 0.5).abs() < 1e-15);
        assert!(lambda_min_via_rate(0.0).unwrap().abs() < 1e-15);
        assert!(lambda_min(0.0).abs() < 1e-12);
        assert!(close(&psi_numeric(0.0), &plus()) < 1e-15);
    }

    #[test]
    fn phi_is_the_conjugate_top_variant() {
        for t in [0.3, 1.0, 4.2] {
            let (p, q) = (psi_t(t), phi_t(t));
            assert_eq!(p[0].conj(), q[0]);
            assert_eq!(p[1], q[1]);
        }
    }

    #[test]
    fn closed_forms_match_propagation() {
        assert!(close(&psi_t(1.0), &psi_numeric(1.0)) < 1e-6);
        assert!(close(&phi_t(2.0), &phi_numeric(2.0)) < 1e-6);
        for t in [0.25, 3.0, 7.5] {
            assert!(close(&psi_t(t), &psi_numeric(t)) < 1e-6);
            assert!(close(&phi_t(t), &phi_numeric(t)) < 1e-6);
        }
    }

    #[test]
    fn rate_values() {
        assert!(transition_rate(ZERO_RATE_T).abs() < 1e-15);
        assert!((transition_rate(1.0) - 0.348).abs() < 1e-3);
        // Independent path: the |1> amplitude of the propagated state.
        assert!((transition_rate(1.0) - psi_numeric(1.0)[1].norm_sqr()).abs() < 1e-9);
    }

    #[test]
    fn minimum_eigenvalue_values() {
        assert!(lambda_min(ZERO_RATE_T).abs() < 1e-10);
        assert!(lambda_min_via_rate(ZERO_RATE_T).unwrap().abs() < 1e-10);
        let l1 = lambda_min(1.0);
        assert!((l1 - -0.249).abs() < 1e-3, "{l1}");
        assert!((l1 - lambda_min_numeric(1.0).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn identity_holds_on_a_dense_grid() {
        let worst = (0..=1000)
            .map(|k| {
                let t = k as f64 * 0.01;
                (lambda_min(t) - lambda_min_via_rate(t).unwrap()).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn emqa_inverse_map_is_exact() {
        let single = AnnealingModel::single_qubit(1.0, 1.0).unwrap();
        let two = AnnealingModel::heisenberg(&ModelParams::heisenberg(2).unwrap()).unwrap();
        for t in [1.0, 5.0] {
            let s = make_emqa(t, 5.0).unwrap();
            let d1 = verify_inverse_map(&s, &single, 1e-2).unwrap();
            let d2 = verify_inverse_map(&s, &two, 1e-2).unwrap();
            assert!(d1 < 1e-5 && d2 < 1e-5, "T = {t}: {d1:e} {d2:e}");
        }
    }

    #[test]
    fn rqa_inverse_map_fails_when_fast() {
        let single = AnnealingModel::single_qubit(1.0, 1.0).unwrap();
        let d = verify_inverse_map(&make_rqa(1.0).unwrap(), &single, 1e-3).unwrap();
        assert!(d > 1e-2, "{d}");
    }

    #[test]
    fn rqa_mismatch_shrinks_with_slower_anneals() {
        let single = AnnealingModel::single_qubit(1.0, 1.0).unwrap();
        let d: Vec<f64> = [5.0, 20.0, 50.0]
            .iter()
            .map(|&t| verify_inverse_map(&make_rqa(t).unwrap(), &single, 1e-3).unwrap())
            .collect();
        assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    }

    #[test]
    fn conventional_has_no_inverse_to_check() {
        let single = AnnealingModel::single_qubit(1.0, 1.0).unwrap();
        let s = crate::schedule::make_conventional(1.0).unwrap();
        assert!(matches!(verify_inverse_map(&s, &single, 1e-2), Err(Error::Config(_))));
    }

    #[test]
    fn result_bundle_is_consistent() {
        let r = SingleQubitRQAResult::at(1.5);
        let n: f64 = r.psi.iter().map(|z| z.norm_sqr()).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert_eq!(r.transition_rate, transition_rate(1.5));
        let row = analytic_row(1.5).unwrap();
        assert!((row.lambda_min - row.lambda_min_via_rate).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn states_are_normalized(t in 0.0f64..50.0) {
            prop_assert!((psi_t(t).norm() - 1.0).abs() < 1e-12);
            prop_assert!((phi_t(t).norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rate_is_bounded(t in 0.0f64..50.0) {
            let p = transition_rate(t);
            prop_assert!(p >= 0.0 && p <= PI * PI / (PI * PI + 16.0 * t * t) + 1e-15);
            prop_assert!((p - psi_t(t)[1].norm_sqr()).abs() < 1e-12);
        }

        #[test]
        fn eigenvalue_is_bounded_below(t in 0.0f64..50.0) {
            let l = lambda_min(t);
            prop_assert!(l >= -0.25 - 1e-12);
            prop_assert!((l - lambda_min_numeric(t).unwrap()).abs() < 1e-10);
        }
    }
}

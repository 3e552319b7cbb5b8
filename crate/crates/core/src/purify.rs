//! Dual-state purification estimator, the plain estimator and a finite-shot
//! emulation of the population measurements.
//!
//! The mitigating schedules are split at their measurement time into a
//! forward channel `F` (start to measurement) and a return channel `G`
//! (measurement to end). For a bare Pauli string `s` with eigenprojectors
//! `P+`, `P-` the protocol measures
//!
//! ```text
//! p+ = <+| G(P+ rho P+) |+>,   p- = <+| G(P- rho P-) |+>,   p0 = <+| G(rho) |+>
//! ```
//!
//! and reports `<s> = (p+ - p-) / p0`. Writing `rho_bar = G^dagger(|+><+|)` the
//! same numbers are `Tr[P+- rho P+- rho_bar]` and `Tr[rho rho_bar]`, which is
//! what [`PopulationRoute::DualState`] evaluates with a single adjoint run.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evolve::{apply_dual_channel, channel_superoperator, DensityMatrix, NoiseParams, Propagator, DEFAULT_DT};
use crate::model::AnnealingModel;
use crate::pauli_algebra::{projector, to_dense, trace_product, DenseOperator, PauliString, Sign};
use crate::schedule::{Schedule, ScheduleKind};
use crate::{Error, Result};

pub const DEFAULT_DENOMINATOR_FLOOR: f64 = 1e-6;

/// How the three populations of every term are obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationRoute {
    /// Propagate each projected branch through the return channel and read
    /// the `|+>` population, as the hardware protocol would.
    Protocol,
    /// Build the dual state once and take traces against it.
    #[default]
    DualState,
}

impl std::str::FromStr for PopulationRoute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "protocol" => Ok(Self::Protocol),
            "dual_state" | "dual" => Ok(Self::DualState),
            other => Err(Error::config(format!("unknown population route '{other}'"))),
        }
    }
}

/// Everything needed to evaluate one estimator at one annealing time.
#[derive(Clone, Debug)]
pub struct AnnealSetup<'a> {
    pub model: &'a AnnealingModel,
    pub schedule: Schedule,
    pub noise: NoiseParams,
    pub dt: f64,
    pub denominator_floor: f64,
    pub route: PopulationRoute,
}

impl<'a> AnnealSetup<'a> {
    pub fn new(model: &'a AnnealingModel, schedule: Schedule, noise: NoiseParams) -> Self {
        Self {
            model,
            schedule,
            noise,
            dt: DEFAULT_DT,
            denominator_floor: DEFAULT_DENOMINATOR_FLOOR,
            route: PopulationRoute::default(),
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_route(mut self, route: PopulationRoute) -> Self {
        self.route = route;
        self
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.denominator_floor = floor;
        self
    }

    fn propagator(&self) -> Result<Propagator<'_>> {
        Propagator::new(self.model, &self.schedule, self.noise, self.dt)
    }

    fn measurement_time(&self) -> Result<f64> {
        self.schedule.measurement_time().ok_or_else(|| {
            Error::config(format!("the {} schedule has no mid-anneal measurement", self.schedule.kind()))
        })
    }
}

/// The state at the measurement time, tagged with the schedule it came from.
#[derive(Clone, Debug)]
pub struct MidState {
    state: DensityMatrix,
    kind: ScheduleKind,
    measurement_time: f64,
    total_duration: f64,
}

impl MidState {
    pub fn state(&self) -> &DensityMatrix {
        &self.state
    }

    pub fn measurement_time(&self) -> f64 {
        self.measurement_time
    }

    fn check(&self, setup: &AnnealSetup) -> Result<()> {
        let tm = setup.measurement_time()?;
        let same = self.kind == setup.schedule.kind()
            && (self.measurement_time - tm).abs() <= 1e-12
            && (self.total_duration - setup.schedule.total_duration()).abs() <= 1e-12;
        if !same {
            return Err(Error::config(format!(
                "mid-anneal state from {} (t = {}) does not match the {} return half (t = {tm})",
                self.kind,
                self.measurement_time,
                setup.schedule.kind()
            )));
        }
        if self.state.dim() != setup.model.dim() {
            return Err(Error::config("mid-anneal state dimension does not match the model"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EstimateMode {
    Exact,
    Sampled { shots: u64, seed: u64, standard_error: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermExpectation {
    pub term: PauliString,
    pub expectation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub value: f64,
    pub denominator: f64,
    pub per_term: Vec<TermExpectation>,
    pub mode: EstimateMode,
}

impl EnergyEstimate {
    fn from_terms(per_term: Vec<TermExpectation>, denominator: f64, mode: EstimateMode) -> Self {
        let value = per_term.iter().map(|t| t.term.coefficient() * t.expectation).sum();
        Self { value, denominator, per_term, mode }
    }
}

/// `(p+, p-)` for one Pauli term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TermPopulations {
    pub plus: f64,
    pub minus: f64,
}

impl TermPopulations {
    pub fn numerator(&self) -> f64 {
        self.plus - self.minus
    }
}

/// All populations measured for one estimate.
#[derive(Clone, Debug)]
pub struct Populations {
    pub denominator: f64,
    pub terms: Vec<(PauliString, TermPopulations)>,
}

/// Evolves `|+><+|` to the measurement time.
pub fn forward_state(setup: &AnnealSetup) -> Result<MidState> {
    let tm = setup.measurement_time()?;
    let rho0 = DensityMatrix::plus_state(setup.model.n_qubits());
    let state = setup.propagator()?.propagate(&rho0, 0.0, tm)?;
    Ok(MidState {
        state,
        kind: setup.schedule.kind(),
        measurement_time: tm,
        total_duration: setup.schedule.total_duration(),
    })
}

/// `G^dagger(|+><+|)` over the return half.
pub fn dual_state(mid: &MidState, setup: &AnnealSetup) -> Result<DenseOperator> {
    mid.check(setup)?;
    let plus = DensityMatrix::plus_state(setup.model.n_qubits());
    setup.propagator()?.propagate_dual(plus.matrix(), mid.measurement_time, setup.schedule.total_duration())
}

fn return_population(mid: &MidState, setup: &AnnealSetup, branch: &DensityMatrix) -> Result<f64> {
    let out = setup.propagator()?.propagate(branch, mid.measurement_time, setup.schedule.total_duration())?;
    Ok(out.plus_population())
}

/// Protocol-level `(p+ - p-, p+, p-)` for a bare Pauli string: two projected
/// branches sent independently through the return channel.
pub fn dsp_term_expectation(mid: &MidState, term: &PauliString, setup: &AnnealSetup) -> Result<(f64, f64, f64)> {
    mid.check(setup)?;
    let bare = term.bare();
    let plus = return_population(mid, setup, &mid.state.project(&projector(&bare, Sign::Plus)?)?)?;
    let minus = return_population(mid, setup, &mid.state.project(&projector(&bare, Sign::Minus)?)?)?;
    Ok((plus - minus, plus, minus))
}

/// Protocol-level `p0`: the unprojected state through the return channel.
pub fn dsp_denominator(mid: &MidState, setup: &AnnealSetup) -> Result<f64> {
    mid.check(setup)?;
    let value = return_population(mid, setup, &mid.state)?;
    check_floor(value, setup.denominator_floor)?;
    Ok(value)
}

fn check_floor(denominator: f64, floor: f64) -> Result<()> {
    if denominator <= floor || !denominator.is_finite() {
        return Err(Error::Degenerate { denominator, floor });
    }
    Ok(())
}

/// `Re Tr[P rho P rho_bar]` with `P = (I + s sigma) / 2`.
fn branch_overlap(rho: &DenseOperator, rho_bar: &DenseOperator, p: &DenseOperator) -> f64 {
    trace_product(&(p * rho * p), rho_bar).re
}

/// Every population required by the estimator for the problem terms.
pub fn populations(mid: &MidState, setup: &AnnealSetup) -> Result<Populations> {
    mid.check(setup)?;
    let terms = setup.model.problem_terms();
    match setup.route {
        PopulationRoute::Protocol => {
            let denominator = return_population(mid, setup, &mid.state)?;
            let pops = terms
                .par_iter()
                .map(|t| {
                    let (_, plus, minus) = dsp_term_expectation(mid, t, setup)?;
                    Ok((t.clone(), TermPopulations { plus, minus }))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Populations { denominator, terms: pops })
        }
        PopulationRoute::DualState => {
            let rho_bar = dual_state(mid, setup)?;
            let rho = mid.state.matrix();
            let denominator = trace_product(rho, &rho_bar).re;
            let pops = terms
                .iter()
                .map(|t| {
                    let bare = t.bare();
                    let plus = branch_overlap(rho, &rho_bar, &projector(&bare, Sign::Plus)?);
                    let minus = branch_overlap(rho, &rho_bar, &projector(&bare, Sign::Minus)?);
                    Ok((t.clone(), TermPopulations { plus, minus }))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Populations { denominator, terms: pops })
        }
    }
}

fn estimate_from(pops: &Populations, floor: f64) -> Result<EnergyEstimate> {
    check_floor(pops.denominator, floor)?;
    let per_term = pops
        .terms
        .iter()
        .map(|(t, p)| TermExpectation { term: t.clone(), expectation: p.numerator() / pops.denominator })
        .collect();
    Ok(EnergyEstimate::from_terms(per_term, pops.denominator, EstimateMode::Exact))
}

/// Mitigated `<H_P>` in exact (infinite-shot) mode.
pub fn mitigated_energy(setup: &AnnealSetup) -> Result<EnergyEstimate> {
    if !setup.schedule.kind().is_mitigating() {
        return Err(Error::config(format!("the {} schedule cannot be mitigated", setup.schedule.kind())));
    }
    let mid = forward_state(setup)?;
    estimate_from(&populations(&mid, setup)?, setup.denominator_floor)
}

/// `Tr[H_P rho(T)]` at the end of a plain anneal.
pub fn conventional_energy(setup: &AnnealSetup) -> Result<EnergyEstimate> {
    if setup.schedule.kind() != ScheduleKind::Conventional {
        return Err(Error::config(format!(
            "plain estimator expects the conventional schedule, got {}",
            setup.schedule.kind()
        )));
    }
    let n = setup.model.n_qubits();
    let rho = setup.propagator()?.propagate(
        &DensityMatrix::plus_state(n),
        0.0,
        setup.schedule.total_duration(),
    )?;
    let per_term = setup
        .model
        .problem_terms()
        .iter()
        .map(|t| Ok(TermExpectation { term: t.clone(), expectation: rho.expectation(&to_dense(&t.bare(), n)?) }))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnergyEstimate::from_terms(per_term, 1.0, EstimateMode::Exact))
}

/// Dispatches on the schedule kind.
pub fn energy(setup: &AnnealSetup) -> Result<EnergyEstimate> {
    match setup.schedule.kind() {
        ScheduleKind::Conventional => conventional_energy(setup),
        _ => mitigated_energy(setup),
    }
}

/// Binomial-propagated standard error of the sampled estimator around the
/// exact populations.
pub fn sampled_standard_error(pops: &Populations, shots: u64) -> f64 {
    let n = shots as f64;
    let var = |p: f64| {
        let p = p.clamp(0.0, 1.0);
        p * (1.0 - p) / n
    };
    let d = pops.denominator;
    let value: f64 = pops.terms.iter().map(|(t, p)| t.coefficient() * p.numerator()).sum::<f64>() / d;
    let numer: f64 = pops
        .terms
        .iter()
        .map(|(t, p)| t.coefficient().powi(2) * (var(p.plus) + var(p.minus)))
        .sum();
    ((numer + value * value * var(d)) / (d * d)).sqrt()
}

/// One binomial draw per population, each from its own ChaCha stream.
fn draw(p: f64, shots: u64, seed: u64, stream: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let dist = Binomial::new(shots, p.clamp(0.0, 1.0)).expect("probability clamped to [0, 1]");
    dist.sample(&mut rng) as f64 / shots as f64
}

/// Finite-shot version of the mitigated estimate from precomputed populations.
/// `point` separates the random streams of different grid points.
pub fn sample_populations(pops: &Populations, shots: u64, seed: u64, point: u64) -> Result<EnergyEstimate> {
    if shots == 0 {
        return Err(Error::config("shots must be at least 1"));
    }
    let base = point << 32;
    let denominator = draw(pops.denominator, shots, seed, base);
    if denominator <= 0.0 {
        return Err(Error::Degenerate { denominator, floor: 0.0 });
    }
    let per_term = pops
        .terms
        .iter()
        .enumerate()
        .map(|(i, (t, p))| {
            let id = base + 2 * i as u64;
            let plus = draw(p.plus, shots, seed, id + 1);
            let minus = draw(p.minus, shots, seed, id + 2);
            TermExpectation { term: t.clone(), expectation: (plus - minus) / denominator }
        })
        .collect();
    let standard_error = sampled_standard_error(pops, shots);
    Ok(EnergyEstimate::from_terms(per_term, denominator, EstimateMode::Sampled { shots, seed, standard_error }))
}

/// Mitigated `<H_P>` with every population replaced by a binomial sample.
pub fn sampled_energy(setup: &AnnealSetup, shots: u64, seed: u64) -> Result<EnergyEstimate> {
    if !setup.schedule.kind().is_mitigating() {
        return Err(Error::config(format!("the {} schedule cannot be mitigated", setup.schedule.kind())));
    }
    let mid = forward_state(setup)?;
    sample_populations(&populations(&mid, setup)?, shots, seed, 0)
}

/// Matrix-level reference for [`populations`]: the return channel as an
/// explicit superoperator and the dual state from its adjoint. Small `N` only.
pub fn matrix_populations(mid: &MidState, setup: &AnnealSetup) -> Result<Populations> {
    mid.check(setup)?;
    let g = channel_superoperator(
        &setup.schedule,
        mid.measurement_time,
        setup.schedule.total_duration(),
        setup.model,
        setup.noise,
        setup.dt,
    )?;
    let rho_bar = apply_dual_channel(&g, DensityMatrix::plus_state(setup.model.n_qubits()).matrix())?;
    let rho = mid.state.matrix();
    let virt = virtual_state(rho, &rho_bar);
    let n = setup.model.n_qubits();
    let terms = setup
        .model
        .problem_terms()
        .iter()
        .map(|t| {
            let bare = t.bare();
            let sigma = to_dense(&bare, n)?;
            let plus = branch_overlap(rho, &rho_bar, &projector(&bare, Sign::Plus)?);
            let minus = branch_overlap(rho, &rho_bar, &projector(&bare, Sign::Minus)?);
            // Cross-check of the branch split against the symmetrized product.
            let numerator = trace_product(&sigma, &virt).re;
            debug_assert!((plus - minus - numerator).abs() < 1e-9);
            Ok((t.clone(), TermPopulations { plus, minus }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Populations { denominator: trace_product(rho, &rho_bar).re, terms })
}

/// `(rho rho_bar + rho_bar rho) / 2`, the operator the estimator effectively
/// measures (before normalization).
pub fn virtual_state(rho: &DenseOperator, rho_bar: &DenseOperator) -> DenseOperator {
    let prod: DMatrix<Complex64> = rho * rho_bar;
    (&prod + prod.adjoint()) * Complex64::from(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelParams, exact_ground_energy};
    use crate::pauli_algebra::Pauli;
    use crate::schedule::{make, make_conventional, make_emqa, make_rqa};

    const DT: f64 = 5e-3;

    fn heis(n: usize) -> AnnealingModel {
        AnnealingModel::heisenberg(&ModelParams::heisenberg(n).unwrap()).unwrap()
    }

    fn setup<'a>(m: &'a AnnealingModel, sched: Schedule, rate: f64) -> AnnealSetup<'a> {
        AnnealSetup::new(m, sched, NoiseParams::new(rate).unwrap()).with_dt(DT)
    }

    #[test]
    fn forward_state_needs_a_measurement() {
        let m = heis(2);
        let s = setup(&m, make_conventional(1.0).unwrap(), 0.0);
        assert!(matches!(forward_state(&s), Err(Error::Config(_))));
        assert!(matches!(mitigated_energy(&s), Err(Error::Config(_))));
        let s = setup(&m, make_rqa(1.0).unwrap(), 0.0);
        assert!(matches!(conventional_energy(&s), Err(Error::Config(_))));
    }

    #[test]
    fn forward_state_has_unit_trace() {
        let m = heis(3);
        for kind in [ScheduleKind::Rqa, ScheduleKind::Emqa] {
            let s = setup(&m, make(kind, 2.0, 5.0).unwrap(), 0.004);
            let mid = forward_state(&s).unwrap();
            assert!((mid.state().trace() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn noisy_mid_state_is_not_pure_ground() {
        let m = heis(3);
        let s = setup(&m, make_emqa(8.0, 5.0).unwrap(), 0.004);
        let rho = forward_state(&s).unwrap();
        let eig = crate::pauli_algebra::herm_eigensystem(m.problem()).unwrap();
        let e0 = eig.lowest();
        let ground_pop: f64 = (0..eig.values.len())
            .filter(|&k| (eig.values[k] - e0).abs() < 1e-9)
            .map(|k| rho.state().population(&eig.vectors.column(k).into_owned()))
            .sum();
        assert!(ground_pop > 0.5 && ground_pop < 1.0, "{ground_pop}");
    }

    #[test]
    fn mismatched_halves_are_rejected() {
        let m = heis(2);
        let a = setup(&m, make_emqa(2.0, 5.0).unwrap(), 0.0);
        let b = setup(&m, make_emqa(3.0, 5.0).unwrap(), 0.0);
        let mid = forward_state(&a).unwrap();
        assert!(matches!(dsp_denominator(&mid, &b), Err(Error::Config(_))));
        let c = setup(&m, make_rqa(2.0).unwrap(), 0.0);
        let t = PauliString::parse("ZZ").unwrap();
        assert!(matches!(dsp_term_expectation(&mid, &t, &c), Err(Error::Config(_))));
    }

    #[test]
    fn noiseless_emqa_denominator_is_one() {
        let m = heis(3);
        for t in [0.5, 3.0] {
            let s = setup(&m, make_emqa(t, 5.0).unwrap(), 0.0);
            let mid = forward_state(&s).unwrap();
            assert!((dsp_denominator(&mid, &s).unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn noiseless_terms_are_squared_projections() {
        // For a pure mid state and an exact inverse, p+- = Tr[P+- rho]^2.
        let m = heis(2);
        let s = setup(&m, make_emqa(1.5, 5.0).unwrap(), 0.0);
        let mid = forward_state(&s).unwrap();
        for label in ["XI", "ZZ", "YX"] {
            let t = PauliString::parse(label).unwrap();
            let (num, plus, minus) = dsp_term_expectation(&mid, &t, &s).unwrap();
            let pp = mid.state().expectation(&projector(&t, Sign::Plus).unwrap());
            let pm = mid.state().expectation(&projector(&t, Sign::Minus).unwrap());
            assert!((plus - pp * pp).abs() < 1e-6);
            assert!((minus - pm * pm).abs() < 1e-6);
            let direct = mid.state().expectation(&to_dense(&t, 2).unwrap());
            assert!((num - direct).abs() < 1e-6);
        }
    }

    #[test]
    fn identity_term_reproduces_the_denominator() {
        let m = heis(2);
        let s = setup(&m, make_emqa(1.0, 5.0).unwrap(), 0.05);
        let mid = forward_state(&s).unwrap();
        let (num, plus, minus) = dsp_term_expectation(&mid, &PauliString::identity(2), &s).unwrap();
        let den = dsp_denominator(&mid, &s).unwrap();
        assert_eq!(minus, 0.0);
        assert!((plus - den).abs() < 1e-12);
        assert!((num / den - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_emqa_matches_plain_first_half() {
        let m = heis(3);
        for t in [1.0, 4.0] {
            let mit = mitigated_energy(&setup(&m, make_emqa(t, 5.0).unwrap(), 0.0)).unwrap();
            let plain = conventional_energy(&setup(&m, make_conventional(t).unwrap(), 0.0)).unwrap();
            assert!((mit.denominator - 1.0).abs() < 1e-6);
            assert!((mit.value - plain.value).abs() < 1e-6, "{} vs {}", mit.value, plain.value);
        }
    }

    #[test]
    fn routes_agree() {
        let m = heis(3);
        for kind in [ScheduleKind::Rqa, ScheduleKind::Emqa] {
            let base = setup(&m, make(kind, 1.5, 5.0).unwrap(), 0.004);
            let a = mitigated_energy(&base.clone().with_route(PopulationRoute::Protocol)).unwrap();
            let b = mitigated_energy(&base.with_route(PopulationRoute::DualState)).unwrap();
            assert!((a.value - b.value).abs() < 1e-8);
            assert!((a.denominator - b.denominator).abs() < 1e-9);
        }
    }

    #[test]
    fn protocol_matches_superoperator_oracle() {
        let m = heis(2);
        let sched = make_rqa(1.2).unwrap();
        let noise = NoiseParams::new(0.004).unwrap();
        let s = setup(&m, sched.clone(), 0.004);
        let mid = forward_state(&s).unwrap();
        let tm = sched.measurement_time().unwrap();
        let g = channel_superoperator(&sched, tm, sched.total_duration(), &m, noise, DT).unwrap();
        let rho_bar = apply_dual_channel(&g, DensityMatrix::plus_state(2).matrix()).unwrap();
        let rho = mid.state().matrix();
        let den = trace_product(rho, &rho_bar).re;
        assert!((dsp_denominator(&mid, &s).unwrap() - den).abs() < 1e-6);
        let virt = virtual_state(rho, &rho_bar);
        for label in ["XX", "ZI", "IY"] {
            let t = PauliString::parse(label).unwrap();
            let want = trace_product(&to_dense(&t, 2).unwrap(), &virt).re;
            let (num, plus, minus) = dsp_term_expectation(&mid, &t, &s).unwrap();
            assert!((num - want).abs() < 1e-6);
            assert!(plus + minus <= 1.0 + 1e-8 && plus >= 0.0 && minus >= 0.0);
        }
    }

    #[test]
    fn per_term_expectations_are_bounded() {
        let m = heis(3);
        let e = mitigated_energy(&setup(&m, make_emqa(2.0, 5.0).unwrap(), 0.004)).unwrap();
        assert_eq!(e.per_term.len(), 9);
        let total: f64 = e.per_term.iter().map(|t| t.term.coefficient() * t.expectation).sum();
        assert_eq!(total, e.value);
        assert!(e.per_term.iter().all(|t| t.expectation.abs() <= 1.0 + 1e-8));
        let eg = exact_ground_energy(&ModelParams::heisenberg(3).unwrap()).unwrap().energy;
        assert!(e.value >= eg - 1e-6);
    }

    #[test]
    fn degenerate_denominator_is_an_error() {
        let m = heis(2);
        let s = setup(&m, make_emqa(1.0, 5.0).unwrap(), 0.004).with_floor(2.0);
        assert!(matches!(mitigated_energy(&s), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn sampling_is_deterministic_and_seed_dependent() {
        let m = heis(2);
        let s = setup(&m, make_emqa(1.0, 5.0).unwrap(), 0.004);
        let a = sampled_energy(&s, 1, 7);
        let b = sampled_energy(&s, 1, 7);
        match (a, b) {
            (Ok(a), Ok(b)) => assert_eq!(a, b),
            (Err(Error::Degenerate { .. }), Err(Error::Degenerate { .. })) => {}
            other => panic!("non-deterministic outcome {other:?}"),
        }
        let x = sampled_energy(&s, 1000, 1).unwrap();
        let y = sampled_energy(&s, 1000, 2).unwrap();
        assert_ne!(x.value, y.value);
        assert!(matches!(x.mode, EstimateMode::Sampled { shots: 1000, seed: 1, .. }));
    }

    #[test]
    fn many_shots_converge_to_exact() {
        let m = heis(2);
        let s = setup(&m, make_emqa(1.0, 5.0).unwrap(), 0.004);
        let mid = forward_state(&s).unwrap();
        let pops = populations(&mid, &s).unwrap();
        let exact = estimate_from(&pops, s.denominator_floor).unwrap();
        let sampled = sample_populations(&pops, 1_000_000, 11, 0).unwrap();
        let se = sampled_standard_error(&pops, 1_000_000);
        assert!((sampled.value - exact.value).abs() < 5.0 * se);
    }

    #[test]
    fn spread_tracks_the_propagated_variance() {
        // Empirical variance over seeds agrees with the binomial prediction,
        // whose 1/denominator^2 factor drives the growth at stronger noise.
        let m = heis(2);
        let shots = 2000;
        let mut ratios = Vec::new();
        let mut scaled = Vec::new();
        for rate in [0.004, 0.1] {
            let s = setup(&m, make_emqa(1.0, 5.0).unwrap(), rate);
            let mid = forward_state(&s).unwrap();
            let pops = populations(&mid, &s).unwrap();
            let vals: Vec<f64> = (0..400).map(|seed| sample_populations(&pops, shots, seed, 0).unwrap().value).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
            let predicted = sampled_standard_error(&pops, shots).powi(2);
            ratios.push(var / predicted);
            scaled.push((pops.denominator, predicted * pops.denominator.powi(2)));
        }
        for r in &ratios {
            assert!((0.75..1.33).contains(r), "{ratios:?}");
        }
        assert!(scaled[1].0 < scaled[0].0);
    }

    #[test]
    fn route_parses() {
        assert_eq!("protocol".parse::<PopulationRoute>().unwrap(), PopulationRoute::Protocol);
        assert_eq!("dual-state".parse::<PopulationRoute>().unwrap(), PopulationRoute::DualState);
        assert!("x".parse::<PopulationRoute>().is_err());
    }

    #[test]
    fn single_qubit_toy_matches_oracle() {
        let m = AnnealingModel::single_qubit(1.0, 1.0).unwrap();
        let sched = make_emqa(0.7, 5.0).unwrap();
        let s = setup(&m, sched.clone(), 0.004);
        let mid = forward_state(&s).unwrap();
        let tm = sched.measurement_time().unwrap();
        let g = channel_superoperator(&sched, tm, sched.total_duration(), &m, NoiseParams::new(0.004).unwrap(), DT)
            .unwrap();
        let rho_bar = apply_dual_channel(&g, DensityMatrix::plus_state(1).matrix()).unwrap();
        let virt = virtual_state(mid.state().matrix(), &rho_bar);
        for axis in [Pauli::X, Pauli::Y, Pauli::Z] {
            let t = PauliString::new(vec![axis], 1.0).unwrap();
            let want = trace_product(&to_dense(&t, 1).unwrap(), &virt).re;
            let (num, _, _) = dsp_term_expectation(&mid, &t, &s).unwrap();
            assert!((num - want).abs() < 1e-6);
        }
        let den = dsp_denominator(&mid, &s).unwrap();
        assert!((den - trace_product(mid.state().matrix(), &rho_bar).re).abs() < 1e-6);
    }
}

//! Annealing-time sweeps, minimum extraction, verification checks and the
//! CSV/JSON artifacts written by the command-line front end.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analytic::verify_inverse_map;
use crate::evolve::{NoiseParams, DEFAULT_DT};
use crate::model::{AnnealingModel, ModelParams};
use crate::purify::{
    energy, forward_state, matrix_populations, populations, sample_populations, AnnealSetup, PopulationRoute,
    DEFAULT_DENOMINATOR_FLOOR,
};
use crate::schedule::{make, make_emqa, make_rqa, ScheduleKind};
use crate::{Error, Result};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "EMQA_SIM_THREADS";

/// Golden-section stopping width in `T`.
pub const REFINE_TOL: f64 = 1e-3;

/// Annealing sizes of the reference table.
pub const TABLE_SIZES: [usize; 4] = [3, 4, 5, 6];

/// Noise rates of the reference table.
pub const TABLE_RATES: [f64; 2] = [0.0, 0.004];

/// One sweep: model, noise, schedule family, `T` grid and numerics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_qubits: usize,
    pub coupling: f64,
    pub anisotropy: f64,
    pub driver: f64,
    pub lambda: f64,
    pub flip_time: f64,
    pub schedule: ScheduleKind,
    pub t_start: f64,
    pub t_stop: f64,
    pub t_step: f64,
    pub dt: f64,
    pub denominator_floor: f64,
    pub seed: Option<u64>,
    pub shots: Option<u64>,
    pub route: PopulationRoute,
    pub refine: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_qubits: 3,
            coupling: 1.0,
            anisotropy: -1.0,
            driver: 1.0,
            lambda: 0.004,
            flip_time: 5.0,
            schedule: ScheduleKind::Emqa,
            t_start: 0.5,
            t_stop: 30.0,
            t_step: 0.5,
            dt: DEFAULT_DT,
            denominator_floor: DEFAULT_DENOMINATOR_FLOOR,
            seed: None,
            shots: None,
            route: PopulationRoute::DualState,
            refine: true,
        }
    }
}

impl SimulationConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Format { path: path.into(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Replaces one field by name. The value is read as JSON when it parses
    /// (numbers, `null`, booleans) and as a bare string otherwise.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim_start_matches('-').replace('-', "_");
        let mut map = match serde_json::to_value(&*self) {
            Ok(Value::Object(map)) => map,
            _ => unreachable!("config serializes to an object"),
        };
        if !map.contains_key(&key) {
            return Err(Error::config(format!("unknown config field '{key}'")));
        }
        let parsed = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
        map.insert(key.clone(), parsed);
        *self = serde_json::from_value(Value::Object(map))
            .map_err(|e| Error::config(format!("bad value '{value}' for {key}: {e}")))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model_params()?;
        let positive = [("flip_time", self.flip_time), ("t_step", self.t_step), ("dt", self.dt)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.t_start > 0.0 && self.t_stop >= self.t_start && self.t_stop.is_finite()) {
            return Err(Error::config(format!(
                "grid needs 0 < t_start <= t_stop, got [{}, {}]",
                self.t_start, self.t_stop
            )));
        }
        NoiseParams::new(self.lambda)?;
        if !(self.denominator_floor >= 0.0) {
            return Err(Error::config("denominator_floor must be non-negative"));
        }
        if let Some(shots) = self.shots {
            if shots == 0 {
                return Err(Error::config("shots must be at least 1"));
            }
            if self.seed.is_none() {
                return Err(Error::config("sampled mode needs an explicit seed"));
            }
            if !self.schedule.is_mitigating() {
                return Err(Error::config("sampled mode applies to the mitigated estimators only"));
            }
        }
        Ok(())
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        ModelParams::new(self.n_qubits, self.coupling, self.anisotropy, self.driver)
    }

    /// `t_start, t_start + t_step, ...` up to `t_stop` inclusive.
    pub fn grid(&self) -> Vec<f64> {
        let count = ((self.t_stop - self.t_start) / self.t_step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| self.t_start + k as f64 * self.t_step).collect()
    }

    fn setup<'a>(&self, model: &'a AnnealingModel, anneal_time: f64) -> Result<AnnealSetup<'a>> {
        let sched = make(self.schedule, anneal_time, self.flip_time)?;
        Ok(AnnealSetup::new(model, sched, NoiseParams::new(self.lambda)?)
            .with_dt(self.dt)
            .with_floor(self.denominator_floor)
            .with_route(self.route))
    }
}

/// One grid point of a sweep. Degenerate points carry no estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub schedule: ScheduleKind,
    #[serde(rename = "N")]
    pub n_qubits: usize,
    pub lambda: f64,
    #[serde(rename = "T")]
    pub anneal_time: f64,
    pub estimate: Option<f64>,
    pub exact: f64,
    pub relative_error: Option<f64>,
    pub denominator: f64,
    pub degenerate: bool,
    #[serde(skip)]
    pub wall_time: f64,
}

pub fn relative_error(estimate: f64, exact: f64) -> f64 {
    (estimate - exact) / exact.abs()
}

/// Evaluates one estimator at one annealing time. `Ok(None)` marks a
/// degenerate denominator; `point` keys the sampling streams.
fn evaluate_point(
    cfg: &SimulationConfig,
    model: &AnnealingModel,
    anneal_time: f64,
    point: u64,
) -> Result<(Option<f64>, f64)> {
    let setup = cfg.setup(model, anneal_time)?;
    let outcome = match (cfg.shots, cfg.seed) {
        (Some(shots), Some(seed)) => {
            let mid = forward_state(&setup)?;
            let pops = populations(&mid, &setup)?;
            sample_populations(&pops, shots, seed, point).map(|e| (e.value, pops.denominator))
        }
        _ => energy(&setup).map(|e| (e.value, e.denominator)),
    };
    match outcome {
        Ok((value, den)) => Ok((Some(value), den)),
        Err(Error::Degenerate { denominator, .. }) => Ok((None, denominator)),
        Err(e) => Err(e),
    }
}

fn with_pool<T: Send>(job: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::config(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Resource(e.to_string()))?;
    Ok(pool.install(job))
}

/// One record per grid time, ascending in `T`.
pub fn run_sweep(cfg: &SimulationConfig) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let params = cfg.model_params()?;
    let model = AnnealingModel::heisenberg(&params)?;
    let exact = model.ground_level()?.energy;
    let grid = cfg.grid();
    info!(
        "sweep {} N={} lambda={} over {} points (dt = {})",
        cfg.schedule,
        cfg.n_qubits,
        cfg.lambda,
        grid.len(),
        cfg.dt
    );
    let records = with_pool(|| {
        grid.par_iter()
            .enumerate()
            .map(|(k, &t)| {
                let clock = Instant::now();
                let (estimate, denominator) = evaluate_point(cfg, &model, t, k as u64)?;
                let wall_time = clock.elapsed().as_secs_f64();
                debug!("{} N={} T={t}: {estimate:?} ({wall_time:.2}s)", cfg.schedule, cfg.n_qubits);
                Ok(SweepRecord {
                    schedule: cfg.schedule,
                    n_qubits: cfg.n_qubits,
                    lambda: cfg.lambda,
                    anneal_time: t,
                    estimate,
                    exact,
                    relative_error: estimate.map(|e| relative_error(e, exact)),
                    denominator,
                    degenerate: estimate.is_none(),
                    wall_time,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(records)
}

/// The smallest estimate of a sweep, optionally sharpened between the grid
/// neighbours of the discrete argmin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub schedule: ScheduleKind,
    #[serde(rename = "N")]
    pub n_qubits: usize,
    pub lambda: f64,
    #[serde(rename = "T")]
    pub anneal_time: f64,
    pub estimate: f64,
    pub exact: f64,
    pub relative_error: f64,
    pub refined: bool,
}

/// Golden-section search for a minimum of `f` on `[a, b]`. Returns the best
/// point visited.
pub fn golden_section(f: &dyn Fn(f64) -> Result<Option<f64>>, mut a: f64, mut b: f64, tol: f64) -> Result<Option<(f64, f64)>> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let score = |v: Option<f64>| v.unwrap_or(f64::INFINITY);
    let mut best: Option<(f64, f64)> = None;
    let mut keep = |t: f64, v: Option<f64>| {
        if let Some(v) = v {
            if best.map_or(true, |(bt, bv)| v < bv || (v == bv && t < bt)) {
                best = Some((t, v));
            }
        }
    };
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    keep(c, fc);
    keep(d, fd);
    while b - a > tol {
        if score(fc) <= score(fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
            keep(c, fc);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
            keep(d, fd);
        }
    }
    Ok(best)
}

/// Grid argmin (ties to the smaller `T`), then optional refinement with
/// `objective` between the neighbouring grid times.
pub fn find_minimum(
    records: &[SweepRecord],
    objective: Option<&dyn Fn(f64) -> Result<Option<f64>>>,
) -> Result<Minimum> {
    let mut sorted: Vec<&SweepRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.anneal_time.total_cmp(&b.anneal_time));
    let (idx, best, value) = sorted
        .iter()
        .enumerate()
        .filter_map(|(k, r)| r.estimate.map(|e| (k, *r, e)))
        .fold(None, |acc: Option<(usize, &SweepRecord, f64)>, cur| match acc {
            Some(a) if a.2 <= cur.2 => Some(a),
            _ => Some(cur),
        })
        .ok_or_else(|| Error::NoMinimum("every grid point is degenerate or the sweep is empty".into()))?;

    let mut min = Minimum {
        schedule: best.schedule,
        n_qubits: best.n_qubits,
        lambda: best.lambda,
        anneal_time: best.anneal_time,
        estimate: value,
        exact: best.exact,
        relative_error: relative_error(value, best.exact),
        refined: false,
    };
    if let Some(f) = objective {
        let lo = sorted[idx.saturating_sub(1)].anneal_time;
        let hi = sorted[(idx + 1).min(sorted.len() - 1)].anneal_time;
        if hi > lo {
            if let Some((t, v)) = golden_section(f, lo, hi, REFINE_TOL)? {
                if v < min.estimate {
                    min.anneal_time = t;
                    min.estimate = v;
                    min.relative_error = relative_error(v, min.exact);
                    min.refined = true;
                }
            }
        }
    }
    Ok(min)
}

/// Sweep followed by the (refined, if configured) minimum.
pub fn sweep_and_minimize(cfg: &SimulationConfig) -> Result<(Vec<SweepRecord>, Minimum)> {
    let records = run_sweep(cfg)?;
    let model = AnnealingModel::heisenberg(&cfg.model_params()?)?;
    let objective = |t: f64| evaluate_point(cfg, &model, t, u32::MAX as u64).map(|(e, _)| e);
    let min = find_minimum(&records, cfg.refine.then_some(&objective as &dyn Fn(f64) -> Result<Option<f64>>))?;
    info!(
        "minimum {} N={} lambda={}: {:.6} at T = {:.4} (relative error {:.4})",
        min.schedule, min.n_qubits, min.lambda, min.estimate, min.anneal_time, min.relative_error
    );
    Ok((records, min))
}

/// Every (schedule, N, lambda) combination of the reference table, sharing
/// the grid and numerics of `base`.
pub fn table_configs(base: &SimulationConfig) -> Vec<SimulationConfig> {
    let mut out = Vec::new();
    for &lambda in &TABLE_RATES {
        for &n in &TABLE_SIZES {
            for kind in ScheduleKind::ALL {
                out.push(SimulationConfig { n_qubits: n, lambda, schedule: kind, ..base.clone() });
            }
        }
    }
    out
}

/// Output format of [`emit`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::config(format!("unknown output format '{other}'"))),
        }
    }
}

pub const RECORD_HEADER: [&str; 9] =
    ["schedule", "N", "lambda", "T", "estimate", "exact", "relative_error", "denominator", "degenerate"];

pub const MINIMUM_HEADER: [&str; 8] =
    ["schedule", "N", "lambda", "T", "estimate", "exact", "relative_error", "refined"];

/// Rounds to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

fn fmt_num(x: f64) -> String {
    format!("{}", round_sig(x))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

fn rounded_record(r: &SweepRecord) -> SweepRecord {
    SweepRecord {
        lambda: round_sig(r.lambda),
        anneal_time: round_sig(r.anneal_time),
        estimate: r.estimate.map(round_sig),
        exact: round_sig(r.exact),
        relative_error: r.relative_error.map(round_sig),
        denominator: round_sig(r.denominator),
        ..r.clone()
    }
}

fn rounded_minimum(m: &Minimum) -> Minimum {
    Minimum {
        lambda: round_sig(m.lambda),
        anneal_time: round_sig(m.anneal_time),
        estimate: round_sig(m.estimate),
        exact: round_sig(m.exact),
        relative_error: round_sig(m.relative_error),
        ..m.clone()
    }
}

fn sorted_records(records: &[SweepRecord]) -> Vec<SweepRecord> {
    let mut v: Vec<SweepRecord> = records.iter().map(rounded_record).collect();
    v.sort_by(|a, b| {
        (a.schedule.as_str(), a.n_qubits)
            .cmp(&(b.schedule.as_str(), b.n_qubits))
            .then(a.lambda.total_cmp(&b.lambda))
            .then(a.anneal_time.total_cmp(&b.anneal_time))
    });
    v
}

fn sorted_minima(minima: &[Minimum]) -> Vec<Minimum> {
    let mut v: Vec<Minimum> = minima.iter().map(rounded_minimum).collect();
    v.sort_by(|a, b| {
        (a.schedule.as_str(), a.n_qubits).cmp(&(b.schedule.as_str(), b.n_qubits)).then(a.lambda.total_cmp(&b.lambda))
    });
    v
}

fn csv_error(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    }
}

/// Writes sweep records, rows sorted by (schedule, N, lambda, T).
pub fn write_records<W: Write>(records: &[SweepRecord], format: Format, out: W) -> std::io::Result<()> {
    let rows = sorted_records(records);
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(RECORD_HEADER).map_err(csv_error)?;
            for r in &rows {
                w.write_record([
                    r.schedule.as_str().to_string(),
                    r.n_qubits.to_string(),
                    fmt_num(r.lambda),
                    fmt_num(r.anneal_time),
                    fmt_opt(r.estimate),
                    fmt_num(r.exact),
                    fmt_opt(r.relative_error),
                    fmt_num(r.denominator),
                    r.degenerate.to_string(),
                ])
                .map_err(csv_error)?;
            }
            w.flush()
        }
        Format::Json => write_json(&rows, out),
    }
}

/// Writes minima, sorted by (schedule, N, lambda).
pub fn write_minima<W: Write>(minima: &[Minimum], format: Format, out: W) -> std::io::Result<()> {
    let rows = sorted_minima(minima);
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(MINIMUM_HEADER).map_err(csv_error)?;
            for m in &rows {
                w.write_record([
                    m.schedule.as_str().to_string(),
                    m.n_qubits.to_string(),
                    fmt_num(m.lambda),
                    fmt_num(m.anneal_time),
                    fmt_num(m.estimate),
                    fmt_num(m.exact),
                    fmt_num(m.relative_error),
                    m.refined.to_string(),
                ])
                .map_err(csv_error)?;
            }
            w.flush()
        }
        Format::Json => write_json(&rows, out),
    }
}

fn write_json<T: Serialize, W: Write>(rows: &T, mut out: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, rows)?;
    writeln!(out)?;
    out.flush()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|source| Error::Io { path: path.into(), source })
}

/// `records.csv` plus `records_minima.csv` (same stem, same format) when
/// minima are given.
pub fn minima_path(path: &Path) -> std::path::PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}_minima{ext}"))
}

/// Writes records to `path` and, if any, minima next to it.
pub fn emit(records: &[SweepRecord], minima: &[Minimum], format: Format, path: &Path) -> Result<()> {
    let io = |source| Error::Io { path: path.into(), source };
    write_records(records, format, create(path)?).map_err(io)?;
    if !minima.is_empty() {
        let mpath = minima_path(path);
        write_minima(minima, format, create(&mpath)?).map_err(|source| Error::Io { path: mpath.clone(), source })?;
    }
    Ok(())
}

/// Outcome of one numerical property check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    /// `true` when the value must stay below the bound, `false` when above.
    pub upper: bool,
}

impl Check {
    pub fn below(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, upper: true }
    }

    pub fn above(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self { name: name.into(), value, bound, upper: false }
    }

    pub fn passed(&self) -> bool {
        if self.upper {
            self.value <= self.bound
        } else {
            self.value > self.bound
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (verdict, rel) = match (self.passed(), self.upper) {
            (true, true) => ("pass", "<="),
            (true, false) => ("pass", ">"),
            (false, true) => ("FAIL", "<="),
            (false, false) => ("FAIL", ">"),
        };
        write!(f, "{verdict} {}: {:.3e} (want {rel} {:.1e})", self.name, self.value, self.bound)
    }
}

fn small_model(n: usize) -> Result<AnnealingModel> {
    if n == 1 {
        AnnealingModel::single_qubit(1.0, 1.0)
    } else {
        AnnealingModel::heisenberg(&ModelParams::heisenberg(n)?)
    }
}

/// Unitary inverse-map distances: EMQA must invert exactly, the fast RQA
/// schedule must not.
pub fn inverse_map_checks(dt: f64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for n in 1..=3 {
        let model = small_model(n)?;
        for t in [1.0, 5.0, 20.0] {
            let d = verify_inverse_map(&make_emqa(t, 5.0)?, &model, dt)?;
            out.push(Check::below(format!("emqa inverse N={n} T={t}"), d, 1e-5));
        }
    }
    let d = verify_inverse_map(&make_rqa(1.0)?, &small_model(1)?, dt)?;
    out.push(Check::above("rqa mismatch N=1 T=1", d, 1e-2));
    Ok(out)
}

/// Protocol-level populations against the superoperator reference.
pub fn oracle_checks(anneal_time: f64, dt: f64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for n in 1..=3 {
        let model = small_model(n)?;
        for rate in [0.0, 0.004] {
            for kind in [ScheduleKind::Rqa, ScheduleKind::Emqa] {
                let setup = AnnealSetup::new(&model, make(kind, anneal_time, 5.0)?, NoiseParams::new(rate)?)
                    .with_dt(dt)
                    .with_route(PopulationRoute::Protocol);
                let mid = forward_state(&setup)?;
                let proto = populations(&mid, &setup)?;
                let matrix = matrix_populations(&mid, &setup)?;
                let mut worst = (proto.denominator - matrix.denominator).abs();
                for ((_, a), (_, b)) in proto.terms.iter().zip(&matrix.terms) {
                    worst = worst.max((a.plus - b.plus).abs()).max((a.minus - b.minus).abs());
                }
                out.push(Check::below(format!("protocol vs matrix {kind} N={n} lambda={rate}"), worst, 1e-6));
            }
        }
    }
    Ok(out)
}

/// Fails with a verification error listing every failed check.
pub fn require(checks: &[Check]) -> Result<()> {
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed()).map(|c| c.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Verification(failed.join("; ")))
    }
}

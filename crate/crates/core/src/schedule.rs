//! Piecewise-linear annealing schedules `H(t) = A_t H_P + B_t H_D`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuity tolerance between adjacent segments.
const CONTINUITY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Conventional,
    Rqa,
    Emqa,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 3] = [ScheduleKind::Emqa, ScheduleKind::Rqa, ScheduleKind::Conventional];

    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleKind::Conventional => "conventional",
            ScheduleKind::Rqa => "rqa",
            ScheduleKind::Emqa => "emqa",
        }
    }

    /// Whether the schedule has a mid-anneal measurement and can drive the
    /// mitigated estimator.
    pub fn is_mitigating(self) -> bool {
        !matches!(self, ScheduleKind::Conventional)
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "conventional" | "qa" => Ok(ScheduleKind::Conventional),
            "rqa" => Ok(ScheduleKind::Rqa),
            "emqa" => Ok(ScheduleKind::Emqa),
            other => Err(Error::config(format!("unknown schedule kind {other:?}"))),
        }
    }
}

/// `slope * t + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub slope: f64,
    pub intercept: f64,
}

impl Affine {
    pub const ZERO: Affine = Affine { slope: 0.0, intercept: 0.0 };

    pub fn new(slope: f64, intercept: f64) -> Self {
        Self { slope, intercept }
    }

    pub fn at(&self, t: f64) -> f64 {
        self.slope * t + self.intercept
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    /// Problem-Hamiltonian coefficient `A_t`.
    pub problem: Affine,
    /// Driver-Hamiltonian coefficient `B_t`.
    pub driver: Affine,
}

/// The pair `(A_t, B_t)` at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficients {
    pub problem: f64,
    pub driver: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    kind: ScheduleKind,
    segments: Vec<Segment>,
    measurement_time: Option<f64>,
}

impl Schedule {
    /// Validates contiguity, continuity and the measurement time.
    pub fn from_segments(kind: ScheduleKind, segments: Vec<Segment>, measurement_time: Option<f64>) -> Result<Self> {
        let first = segments.first().ok_or_else(|| Error::config("schedule has no segments"))?;
        if first.start != 0.0 {
            return Err(Error::config(format!("schedule starts at {} instead of 0", first.start)));
        }
        for seg in &segments {
            if !(seg.end > seg.start) || !seg.end.is_finite() {
                return Err(Error::config(format!("empty or invalid segment [{}, {}]", seg.start, seg.end)));
            }
        }
        for pair in segments.windows(2) {
            let (l, r) = (&pair[0], &pair[1]);
            if l.end != r.start {
                return Err(Error::config(format!("segments not contiguous at {} / {}", l.end, r.start)));
            }
            let t = l.end;
            if (l.problem.at(t) - r.problem.at(t)).abs() > CONTINUITY_TOL
                || (l.driver.at(t) - r.driver.at(t)).abs() > CONTINUITY_TOL
            {
                return Err(Error::config(format!("coefficients discontinuous at t = {t}")));
            }
        }
        let total = segments.last().map(|s| s.end).unwrap_or(0.0);
        if let Some(tm) = measurement_time {
            if !(tm > 0.0 && tm < total) {
                return Err(Error::config(format!("measurement time {tm} not inside (0, {total})")));
            }
        }
        Ok(Self { kind, segments, measurement_time })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.last().map(|s| s.end).unwrap_or(0.0)
    }

    pub fn measurement_time(&self) -> Option<f64> {
        self.measurement_time
    }

    /// Interior kinks plus the measurement time, ascending. Integrators must
    /// place step endpoints on each of these.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self.segments.iter().skip(1).map(|s| s.start).collect();
        if let Some(tm) = self.measurement_time {
            pts.push(tm);
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// `(A_t, B_t)`. A boundary instant belongs to the later segment.
    pub fn evaluate(&self, t: f64) -> Result<Coefficients> {
        let total = self.total_duration();
        if !(0.0..=total).contains(&t) {
            return Err(Error::Domain { t, total });
        }
        let seg = self
            .segments
            .iter()
            .rev()
            .find(|s| t >= s.start)
            .expect("t >= 0 always lands in a segment");
        Ok(Coefficients { problem: seg.problem.at(t), driver: seg.driver.at(t) })
    }
}

fn positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be positive and finite, got {value}")))
    }
}

/// `A = t/T`, `B = 1 - t/T` on `[0, T]`.
pub fn make_conventional(anneal_time: f64) -> Result<Schedule> {
    positive("annealing time T", anneal_time)?;
    let t = anneal_time;
    Schedule::from_segments(
        ScheduleKind::Conventional,
        vec![Segment {
            start: 0.0,
            end: t,
            problem: Affine::new(1.0 / t, 0.0),
            driver: Affine::new(-1.0 / t, 1.0),
        }],
        None,
    )
}

/// Forward ramp on `[0, T]`, retraced on `[T, 2T]`; measured at `T`.
pub fn make_rqa(anneal_time: f64) -> Result<Schedule> {
    positive("annealing time T", anneal_time)?;
    let t = anneal_time;
    Schedule::from_segments(
        ScheduleKind::Rqa,
        vec![
            Segment { start: 0.0, end: t, problem: Affine::new(1.0 / t, 0.0), driver: Affine::new(-1.0 / t, 1.0) },
            Segment { start: t, end: 2.0 * t, problem: Affine::new(-1.0 / t, 2.0), driver: Affine::new(1.0 / t, -1.0) },
        ],
        Some(t),
    )
}

/// Forward ramp on `[0, T]`; sign flip of the problem term with the driver
/// off on `[T, T + T']`; ramp to `-H_D` on `[T + T', 2T + T']`. Measured at
/// `T + T'/2`, where the Hamiltonian vanishes.
pub fn make_emqa(anneal_time: f64, flip_time: f64) -> Result<Schedule> {
    positive("annealing time T", anneal_time)?;
    positive("sign-flip time T'", flip_time)?;
    let (t, tp) = (anneal_time, flip_time);
    Schedule::from_segments(
        ScheduleKind::Emqa,
        vec![
            Segment { start: 0.0, end: t, problem: Affine::new(1.0 / t, 0.0), driver: Affine::new(-1.0 / t, 1.0) },
            Segment {
                start: t,
                end: t + tp,
                problem: Affine::new(-2.0 / tp, 2.0 * t / tp + 1.0),
                driver: Affine::ZERO,
            },
            Segment {
                start: t + tp,
                end: 2.0 * t + tp,
                problem: Affine::new(1.0 / t, -tp / t - 2.0),
                driver: Affine::new(-1.0 / t, tp / t + 1.0),
            },
        ],
        Some(t + tp / 2.0),
    )
}

/// Builds the schedule of `kind` for annealing time `T` (and `T'` for EMQA).
pub fn make(kind: ScheduleKind, anneal_time: f64, flip_time: f64) -> Result<Schedule> {
    match kind {
        ScheduleKind::Conventional => make_conventional(anneal_time),
        ScheduleKind::Rqa => make_rqa(anneal_time),
        ScheduleKind::Emqa => make_emqa(anneal_time, flip_time),
    }
}

//! Drive cycles: the exogenous velocity/grade signal consumed by the
//! powertrain and the environment.
//!
//! Cycles are 1 Hz by default (standard chassis-dynamometer traces are
//! published at 1 Hz) but any uniform time step is accepted; resampling is
//! deliberately out of scope.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

const MPH_TO_MPS: f64 = 0.44704;
const KPH_TO_MPS: f64 = 1.0 / 3.6;

/// Time-step uniformity tolerance when inferring `dt` from a file, in seconds.
const DT_TOLERANCE_S: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CycleError {
    #[error("io error reading cycle: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("validation error: {0}")]
    Validation(String),
}

/// Velocity unit of a cycle file's second column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityUnit {
    Mps,
    Mph,
    Kph,
}

impl VelocityUnit {
    fn to_mps(self, v: f64) -> f64 {
        match self {
            VelocityUnit::Mps => v,
            VelocityUnit::Mph => v * MPH_TO_MPS,
            VelocityUnit::Kph => v * KPH_TO_MPS,
        }
    }
}

impl std::str::FromStr for VelocityUnit {
    type Err = CycleError;
    fn from_str(s: &str) -> Result<Self, CycleError> {
        match s.to_ascii_lowercase().as_str() {
            "mps" | "m/s" => Ok(VelocityUnit::Mps),
            "mph" => Ok(VelocityUnit::Mph),
            "kph" | "km/h" | "kmh" => Ok(VelocityUnit::Kph),
            other => Err(CycleError::Validation(format!(
                "unknown velocity unit `{other}` (expected mps, mph, or kph)"
            ))),
        }
    }
}

/// Synthetic cycle shapes for desk-scale experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    Trapezoid,
    Sinusoid,
    Constant,
}

impl std::str::FromStr for SynthKind {
    type Err = CycleError;
    fn from_str(s: &str) -> Result<Self, CycleError> {
        match s.to_ascii_lowercase().as_str() {
            "trapezoid" => Ok(SynthKind::Trapezoid),
            "sinusoid" => Ok(SynthKind::Sinusoid),
            "constant" => Ok(SynthKind::Constant),
            other => Err(CycleError::Validation(format!(
                "unknown synthetic cycle kind `{other}`"
            ))),
        }
    }
}

/// A uniform-step velocity/grade trace.
///
/// Immutable after construction; shared freely across readers.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveCycle {
    dt: f64,
    velocity: Vec<f64>,
    grade: Vec<f64>,
    name: String,
    repetitions: u32,
}

impl DriveCycle {
    /// Build a cycle with all-zero grade.
    pub fn new(name: impl Into<String>, dt: f64, velocity: Vec<f64>) -> Result<Self, CycleError> {
        let grade = vec![0.0; velocity.len()];
        Self::with_grade(name, dt, velocity, grade)
    }

    pub fn with_grade(
        name: impl Into<String>,
        dt: f64,
        velocity: Vec<f64>,
        grade: Vec<f64>,
    ) -> Result<Self, CycleError> {
        if !(dt > 0.0) {
            return Err(CycleError::Validation(format!("dt must be > 0, got {dt}")));
        }
        if velocity.len() < 2 {
            return Err(CycleError::Validation(format!(
                "cycle must have at least 2 samples, got {}",
                velocity.len()
            )));
        }
        if velocity.len() != grade.len() {
            return Err(CycleError::Validation(format!(
                "velocity and grade lengths differ: {} vs {}",
                velocity.len(),
                grade.len()
            )));
        }
        if let Some((i, v)) = velocity
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(CycleError::Validation(format!(
                "velocity[{i}] = {v} must be finite and >= 0"
            )));
        }
        Ok(Self {
            dt,
            velocity,
            grade,
            name: name.into(),
            repetitions: 1,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn grade(&self) -> &[f64] {
        &self.grade
    }

    pub fn len(&self) -> usize {
        self.velocity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocity.is_empty()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Repetition count applied at construction (1 for an unrepeated trace).
    pub fn repetitions(&self) -> u32 {
        self.repetitions
    }

    /// Backward-difference acceleration over the step ending at `i`, m/s².
    ///
    /// The first sample uses the step from standstill convention: traces start
    /// from their own first value, so `accel(0)` is defined as 0.
    pub fn accel(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            (self.velocity[i] - self.velocity[i - 1]) / self.dt
        }
    }

    /// Serialize as the two-column `t_s,v` format, velocity in m/s.
    ///
    /// Values print in shortest round-trip decimal form, so a write/reload
    /// pair reproduces the stored values exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(16 * self.len() + 16);
        out.push_str("t_s,v\n");
        for (i, v) in self.velocity.iter().enumerate() {
            let t = i as f64 * self.dt;
            let _ = writeln!(out, "{t},{v}");
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), CycleError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Parse a two-column `time,velocity` table from `path`.
///
/// The header row `t_s,v` is optional. Time must be strictly increasing at a
/// uniform step; `dt` is inferred from the time column.
pub fn load_cycle(path: impl AsRef<Path>, unit: VelocityUnit) -> Result<DriveCycle, CycleError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cycle".to_string());
    parse_cycle(&text, unit, name)
}

fn parse_cycle(text: &str, unit: VelocityUnit, name: String) -> Result<DriveCycle, CycleError> {
    let mut times = Vec::new();
    let mut vels = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        // Optional header.
        if idx == 0 && line.chars().any(|c| c.is_ascii_alphabetic()) {
            continue;
        }
        let mut cols = line.split(',');
        let t_str = cols.next().unwrap_or("").trim();
        let v_str = cols
            .next()
            .ok_or_else(|| CycleError::Parse {
                line: line_no,
                msg: "expected two comma-separated columns".into(),
            })?
            .trim();
        let t: f64 = t_str.parse().map_err(|_| CycleError::Parse {
            line: line_no,
            msg: format!("malformed time value `{t_str}`"),
        })?;
        let v: f64 = v_str.parse().map_err(|_| CycleError::Parse {
            line: line_no,
            msg: format!("malformed velocity value `{v_str}`"),
        })?;
        if v < 0.0 {
            return Err(CycleError::Validation(format!(
                "line {line_no}: negative velocity {v}"
            )));
        }
        times.push(t);
        vels.push(unit.to_mps(v));
    }
    if times.len() < 2 {
        return Err(CycleError::Format(format!(
            "cycle needs at least 2 rows, found {}",
            times.len()
        )));
    }
    let dt = times[1] - times[0];
    if dt <= 0.0 {
        return Err(CycleError::Format(format!(
            "time column must be strictly increasing (first step {dt})"
        )));
    }
    for i in 1..times.len() {
        let step = times[i] - times[i - 1];
        if (step - dt).abs() > DT_TOLERANCE_S {
            return Err(CycleError::Format(format!(
                "non-uniform time step at row {}: {} vs inferred dt {}",
                i + 1,
                step,
                dt
            )));
        }
    }
    DriveCycle::new(name, dt, vels)
}

/// Concatenate `n` copies of `cycle` end-to-end.
pub fn repeat_cycle(cycle: &DriveCycle, n: u32) -> Result<DriveCycle, CycleError> {
    if n == 0 {
        return Err(CycleError::Validation("repetition count must be >= 1".into()));
    }
    let mut velocity = Vec::with_capacity(cycle.len() * n as usize);
    let mut grade = Vec::with_capacity(cycle.len() * n as usize);
    for _ in 0..n {
        velocity.extend_from_slice(&cycle.velocity);
        grade.extend_from_slice(&cycle.grade);
    }
    let mut out = DriveCycle::with_grade(
        format!("{}x{}", cycle.name, n * cycle.repetitions),
        cycle.dt,
        velocity,
        grade,
    )?;
    out.repetitions = cycle.repetitions * n;
    Ok(out)
}

/// Deterministically synthesize a desk-scale cycle.
///
/// All kinds start and end at standstill and reach exactly `v_peak` at the
/// maximum (up to one rescale rounding). The seed shapes the profile — ramp
/// split for the trapezoid, hump count for the sinusoid — never the contract.
pub fn synth_cycle(
    kind: SynthKind,
    duration_s: f64,
    v_peak: f64,
    seed: u64,
) -> Result<DriveCycle, CycleError> {
    if duration_s < 2.0 {
        return Err(CycleError::Validation(format!(
            "duration must be >= 2 s, got {duration_s}"
        )));
    }
    if v_peak < 0.0 {
        return Err(CycleError::Validation(format!(
            "v_peak must be >= 0, got {v_peak}"
        )));
    }
    let n = (duration_s.round() as usize).max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = vec![0.0; n];
    match kind {
        SynthKind::Constant => {
            for x in v.iter_mut().take(n - 1).skip(1) {
                *x = v_peak;
            }
        }
        SynthKind::Trapezoid => {
            // Ramp fractions drawn in [0.15, 0.35] of the trace each.
            let up_frac = rng.gen_range(0.15..0.35);
            let down_frac = rng.gen_range(0.15..0.35);
            let n_up = ((n as f64 * up_frac) as usize).max(1);
            let n_down = ((n as f64 * down_frac) as usize).max(1);
            let flat_end = n - 1 - n_down;
            for (i, x) in v.iter_mut().enumerate() {
                *x = if i <= n_up {
                    v_peak * i as f64 / n_up as f64
                } else if i <= flat_end {
                    v_peak
                } else {
                    v_peak * (n - 1 - i) as f64 / n_down as f64
                };
            }
        }
        SynthKind::Sinusoid => {
            let humps = rng.gen_range(1..=3) as f64;
            for (i, x) in v.iter_mut().enumerate() {
                let phase = i as f64 / (n - 1) as f64;
                *x = v_peak * (std::f64::consts::PI * humps * phase).sin().abs();
            }
            // Guarantee the peak is hit exactly regardless of sampling.
            let max = v.iter().cloned().fold(0.0, f64::max);
            if max > 0.0 {
                let scale = v_peak / max;
                for x in v.iter_mut() {
                    *x *= scale;
                }
            }
        }
    }
    v[0] = 0.0;
    v[n - 1] = 0.0;
    DriveCycle::new(format!("synth-{kind:?}-{seed}").to_lowercase(), 1.0, v)
}

/// Distance covered by the trace: left Riemann sum Σ v[i]·dt, meters.
pub fn cycle_distance(cycle: &DriveCycle) -> f64 {
    cycle.velocity.iter().map(|v| v * cycle.dt).sum()
}

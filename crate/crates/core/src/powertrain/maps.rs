//! Component maps: gridded fuel-rate and efficiency surfaces with a
//! speed-dependent torque limit curve and rated-point metadata.
//!
//! The published vehicle specification carries only component ratings, not
//! map shapes, so default maps are synthesized: a Willans fuel surface for the
//! engine and smooth efficiency bumps for the electric machines, all honoring
//! the rated maxima exactly.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PowertrainError;

const RPM_TO_RAD: f64 = std::f64::consts::PI / 30.0;

pub fn rpm_to_rad(rpm: f64) -> f64 {
    rpm * RPM_TO_RAD
}

pub fn rad_to_rpm(rad: f64) -> f64 {
    rad / RPM_TO_RAD
}

/// What the grid values of a [`ComponentMap`] mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapQuantity {
    /// Fuel mass flow, g/s (engine).
    FuelRate,
    /// Conversion efficiency fraction in (0, 1) (generator, electric machine).
    Efficiency,
}

/// Piecewise-linear torque limit as a function of shaft speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorqueCurve {
    /// (rpm, Nm) breakpoints, speed ascending.
    pub points: Vec<(f64, f64)>,
}

impl TorqueCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, PowertrainError> {
        if points.len() < 2 {
            return Err(PowertrainError::Validation(
                "torque curve needs at least 2 breakpoints".into(),
            ));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(PowertrainError::Validation(
                "torque curve breakpoints must have strictly increasing speed".into(),
            ));
        }
        Ok(Self { points })
    }

    /// Torque limit at `rpm`, clamped to the curve's end values outside it.
    pub fn at(&self, rpm: f64) -> f64 {
        let pts = &self.points;
        if rpm <= pts[0].0 {
            return pts[0].1;
        }
        if rpm >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        let i = pts.partition_point(|p| p.0 <= rpm) - 1;
        let (x0, y0) = pts[i];
        let (x1, y1) = pts[i + 1];
        y0 + (y1 - y0) * (rpm - x0) / (x1 - x0)
    }

    pub fn max_torque(&self) -> f64 {
        self.points.iter().map(|p| p.1).fold(f64::MIN, f64::max)
    }
}

/// A rectangular speed × torque grid of fuel rates or efficiencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentMap {
    pub name: String,
    pub quantity: MapQuantity,
    /// Ascending rpm grid.
    pub speed_axis: Vec<f64>,
    /// Ascending Nm grid.
    pub torque_axis: Vec<f64>,
    /// Row-major `[speed][torque]` values.
    pub values: Vec<Vec<f64>>,
    pub max_torque_curve: TorqueCurve,
    /// Rated speed limit, rpm.
    pub speed_max: f64,
    /// Rated power limit, W.
    pub power_max: f64,
}

impl ComponentMap {
    pub fn validate(&self) -> Result<(), PowertrainError> {
        let ascending = |axis: &[f64]| axis.windows(2).all(|w| w[1] > w[0]);
        if self.speed_axis.len() < 2 || self.torque_axis.len() < 2 {
            return Err(PowertrainError::Validation(format!(
                "map `{}`: axes need at least 2 points",
                self.name
            )));
        }
        if !ascending(&self.speed_axis) || !ascending(&self.torque_axis) {
            return Err(PowertrainError::Validation(format!(
                "map `{}`: axes must be strictly increasing",
                self.name
            )));
        }
        if self.values.len() != self.speed_axis.len()
            || self.values.iter().any(|r| r.len() != self.torque_axis.len())
        {
            return Err(PowertrainError::Validation(format!(
                "map `{}`: value grid shape does not match axes",
                self.name
            )));
        }
        for row in &self.values {
            for &v in row {
                match self.quantity {
                    MapQuantity::FuelRate if !(v >= 0.0) => {
                        return Err(PowertrainError::Validation(format!(
                            "map `{}`: fuel rate {v} < 0",
                            self.name
                        )))
                    }
                    MapQuantity::Efficiency if !(v > 0.0 && v < 1.0) => {
                        return Err(PowertrainError::Validation(format!(
                            "map `{}`: efficiency {v} outside (0, 1)",
                            self.name
                        )))
                    }
                    _ => {}
                }
            }
        }
        let t_grid_max = *self.torque_axis.last().unwrap();
        for &omega in &self.speed_axis {
            if self.max_torque_curve.at(omega) > t_grid_max + 1e-9 {
                return Err(PowertrainError::Validation(format!(
                    "map `{}`: torque curve exceeds grid at {omega} rpm",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Bilinear interpolation at `(rpm, torque)`, clamped to the grid hull.
    pub fn interp(&self, rpm: f64, torque: f64) -> f64 {
        let (i, u) = bracket(&self.speed_axis, rpm);
        let (j, w) = bracket(&self.torque_axis, torque);
        let v00 = self.values[i][j];
        let v01 = self.values[i][j + 1];
        let v10 = self.values[i + 1][j];
        let v11 = self.values[i + 1][j + 1];
        v00 * (1.0 - u) * (1.0 - w) + v10 * u * (1.0 - w) + v01 * (1.0 - u) * w + v11 * u * w
    }

    /// True when `(rpm, torque)` lies inside the gridded region.
    pub fn in_grid(&self, rpm: f64, torque: f64) -> bool {
        rpm >= self.speed_axis[0] - 1e-9
            && rpm <= self.speed_axis[self.speed_axis.len() - 1] + 1e-9
            && torque >= self.torque_axis[0] - 1e-9
            && torque <= self.torque_axis[self.torque_axis.len() - 1] + 1e-9
    }

    /// Serialize the grid: first row torque axis, first column speed axis.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("rpm\\Nm");
        for t in &self.torque_axis {
            let _ = write!(out, ",{t}");
        }
        out.push('\n');
        for (i, s) in self.speed_axis.iter().enumerate() {
            let _ = write!(out, "{s}");
            for v in &self.values[i] {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Write the grid CSV plus a JSON sidecar with curve and ratings.
    pub fn emit(&self, dir: impl AsRef<Path>) -> Result<(), PowertrainError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(io_err)?;
        std::fs::write(dir.join(format!("{}.csv", self.name)), self.to_csv()).map_err(io_err)?;
        let sidecar = MapSidecar {
            name: self.name.clone(),
            quantity: self.quantity,
            max_torque_curve: self.max_torque_curve.clone(),
            speed_max: self.speed_max,
            power_max: self.power_max,
        };
        let json = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| PowertrainError::Validation(e.to_string()))?;
        std::fs::write(dir.join(format!("{}.meta.json", self.name)), json).map_err(io_err)?;
        Ok(())
    }

    /// Load a map back from a grid CSV and its sidecar.
    pub fn load(dir: impl AsRef<Path>, name: &str) -> Result<Self, PowertrainError> {
        let dir = dir.as_ref();
        let grid = std::fs::read_to_string(dir.join(format!("{name}.csv"))).map_err(io_err)?;
        let meta = std::fs::read_to_string(dir.join(format!("{name}.meta.json"))).map_err(io_err)?;
        let sidecar: MapSidecar = serde_json::from_str(&meta)
            .map_err(|e| PowertrainError::Validation(format!("sidecar parse: {e}")))?;
        let mut lines = grid.lines();
        let header = lines
            .next()
            .ok_or_else(|| PowertrainError::Validation("empty map file".into()))?;
        let torque_axis = header
            .split(',')
            .skip(1)
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| PowertrainError::Validation(format!("torque axis parse: {e}")))?;
        let mut speed_axis = Vec::new();
        let mut values = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let s = cols
                .next()
                .unwrap()
                .trim()
                .parse::<f64>()
                .map_err(|e| PowertrainError::Validation(format!("speed axis parse: {e}")))?;
            let row = cols
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| PowertrainError::Validation(format!("grid value parse: {e}")))?;
            speed_axis.push(s);
            values.push(row);
        }
        let map = ComponentMap {
            name: sidecar.name,
            quantity: sidecar.quantity,
            speed_axis,
            torque_axis,
            values,
            max_torque_curve: sidecar.max_torque_curve,
            speed_max: sidecar.speed_max,
            power_max: sidecar.power_max,
        };
        map.validate()?;
        Ok(map)
    }
}

fn io_err(e: std::io::Error) -> PowertrainError {
    PowertrainError::Validation(format!("io: {e}"))
}

#[derive(Serialize, Deserialize)]
struct MapSidecar {
    name: String,
    quantity: MapQuantity,
    max_torque_curve: TorqueCurve,
    speed_max: f64,
    power_max: f64,
}

/// Locate `x` in `axis`: returns (lower index, fractional position), clamped.
fn bracket(axis: &[f64], x: f64) -> (usize, f64) {
    let n = axis.len();
    if x <= axis[0] {
        return (0, 0.0);
    }
    if x >= axis[n - 1] {
        return (n - 2, 1.0);
    }
    let i = (axis.partition_point(|&a| a <= x) - 1).min(n - 2);
    let u = (x - axis[i]) / (axis[i + 1] - axis[i]);
    (i, u)
}

/// Published component ratings used to synthesize the default maps.
pub mod ratings {
    /// Engine: 270 kW @ 2300 rpm, 1500 Nm flat on 1120–1480 rpm.
    pub const ENGINE_POWER_MAX_W: f64 = 270e3;
    pub const ENGINE_SPEED_RATED_RPM: f64 = 2300.0;
    pub const ENGINE_TORQUE_MAX_NM: f64 = 1500.0;
    pub const ENGINE_TORQUE_FLAT_LO_RPM: f64 = 1120.0;
    pub const ENGINE_TORQUE_FLAT_HI_RPM: f64 = 1480.0;
    /// Generator: 240 kW @ 2200 rpm, 1410 Nm @ 1300 rpm, 2517 rpm max.
    pub const GEN_POWER_MAX_W: f64 = 240e3;
    pub const GEN_SPEED_RATED_RPM: f64 = 2200.0;
    pub const GEN_TORQUE_MAX_NM: f64 = 1410.0;
    pub const GEN_TORQUE_RATED_RPM: f64 = 1300.0;
    pub const GEN_SPEED_MAX_RPM: f64 = 2517.0;
    /// Electric machine: 400 kW @ 2000 rpm, 3500 Nm @ 1100 rpm, 3900 rpm max.
    pub const EM_POWER_MAX_W: f64 = 400e3;
    pub const EM_SPEED_RATED_RPM: f64 = 2000.0;
    pub const EM_TORQUE_MAX_NM: f64 = 3500.0;
    pub const EM_SPEED_MAX_RPM: f64 = 3900.0;

    pub const ENGINE_PEAK_EFF: f64 = 0.42;
    pub const GEN_PEAK_EFF: f64 = 0.95;
    pub const EM_PEAK_EFF: f64 = 0.93;
}

/// Smooth concave efficiency bump peaking at `peak` at `(rpm0, t0)`.
fn eff_bump(
    rpm: f64,
    torque: f64,
    rpm0: f64,
    t0: f64,
    rpm_span: f64,
    t_span: f64,
    peak: f64,
    floor: f64,
    drop: f64,
) -> f64 {
    let du = (rpm - rpm0) / rpm_span;
    let dw = (torque - t0) / t_span;
    (peak * (1.0 - drop * (du * du + dw * dw))).max(floor)
}

fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut x = lo;
    while x < hi - 1e-9 {
        out.push(x);
        x += step;
    }
    out.push(hi);
    out
}

/// Engine fuel map via the Willans construction: fuel = T·ω / (η(ω,T)·LHV).
pub fn default_engine_map(fuel_lhv_j_per_kg: f64) -> ComponentMap {
    use ratings::*;
    let taper_torque = ENGINE_POWER_MAX_W / rpm_to_rad(ENGINE_SPEED_RATED_RPM);
    let curve = TorqueCurve::new(vec![
        (0.0, 0.6 * ENGINE_TORQUE_MAX_NM),
        (ENGINE_TORQUE_FLAT_LO_RPM, ENGINE_TORQUE_MAX_NM),
        (ENGINE_TORQUE_FLAT_HI_RPM, ENGINE_TORQUE_MAX_NM),
        (ENGINE_SPEED_RATED_RPM, taper_torque),
    ])
    .expect("static curve");
    let speed_axis = axis(0.0, ENGINE_SPEED_RATED_RPM, 100.0);
    let torque_axis = axis(0.0, ENGINE_TORQUE_MAX_NM, 100.0);
    let values = speed_axis
        .iter()
        .map(|&s| {
            torque_axis
                .iter()
                .map(|&t| {
                    let eta = engine_efficiency(s, t);
                    // g/s: mechanical W / (eta * J/kg) gives kg/s.
                    t * rpm_to_rad(s) / (eta * fuel_lhv_j_per_kg) * 1000.0
                })
                .collect()
        })
        .collect();
    ComponentMap {
        name: "engine_fuel".into(),
        quantity: MapQuantity::FuelRate,
        speed_axis,
        torque_axis,
        values,
        max_torque_curve: curve,
        speed_max: ENGINE_SPEED_RATED_RPM,
        power_max: ENGINE_POWER_MAX_W,
    }
}

/// Synthesized engine brake efficiency, peaking at 0.42 at (1300 rpm, 1200 Nm).
pub fn engine_efficiency(rpm: f64, torque: f64) -> f64 {
    eff_bump(
        rpm,
        torque,
        1300.0,
        1200.0,
        ratings::ENGINE_SPEED_RATED_RPM,
        ratings::ENGINE_TORQUE_MAX_NM,
        ratings::ENGINE_PEAK_EFF,
        0.25,
        0.35,
    )
}

pub fn default_generator_map() -> ComponentMap {
    use ratings::*;
    let t_rated_speed = GEN_POWER_MAX_W / rpm_to_rad(GEN_SPEED_RATED_RPM);
    let t_max_speed = GEN_POWER_MAX_W / rpm_to_rad(GEN_SPEED_MAX_RPM);
    let curve = TorqueCurve::new(vec![
        (0.0, GEN_TORQUE_MAX_NM),
        (GEN_TORQUE_RATED_RPM, GEN_TORQUE_MAX_NM),
        (GEN_SPEED_RATED_RPM, t_rated_speed),
        (GEN_SPEED_MAX_RPM, t_max_speed),
    ])
    .expect("static curve");
    let mut speed_axis = axis(0.0, 2500.0, 100.0);
    speed_axis.push(GEN_SPEED_MAX_RPM);
    let mut torque_axis = axis(0.0, 1400.0, 100.0);
    torque_axis.push(GEN_TORQUE_MAX_NM);
    let values = grid_eff(&speed_axis, &torque_axis, |s, t| {
        eff_bump(
            s,
            t,
            GEN_TORQUE_RATED_RPM,
            GEN_TORQUE_MAX_NM,
            GEN_SPEED_MAX_RPM,
            GEN_TORQUE_MAX_NM,
            GEN_PEAK_EFF,
            0.75,
            0.3,
        )
    });
    ComponentMap {
        name: "generator_eff".into(),
        quantity: MapQuantity::Efficiency,
        speed_axis,
        torque_axis,
        values,
        max_torque_curve: curve,
        speed_max: GEN_SPEED_MAX_RPM,
        power_max: GEN_POWER_MAX_W,
    }
}

pub fn default_em_map() -> ComponentMap {
    use ratings::*;
    // Base speed where the 3500 Nm flat region meets the 400 kW envelope.
    // The constant-power branch is sampled every 100 rpm so the
    // piecewise-linear chords stay within the rating tolerance.
    let base_rpm = rad_to_rpm(EM_POWER_MAX_W / EM_TORQUE_MAX_NM);
    let mut points = vec![(0.0, EM_TORQUE_MAX_NM), (base_rpm, EM_TORQUE_MAX_NM)];
    let mut rpm = (base_rpm / 100.0).ceil() * 100.0;
    while rpm < EM_SPEED_MAX_RPM - 1e-9 {
        points.push((rpm, EM_POWER_MAX_W / rpm_to_rad(rpm)));
        rpm += 100.0;
    }
    points.push((EM_SPEED_MAX_RPM, EM_POWER_MAX_W / rpm_to_rad(EM_SPEED_MAX_RPM)));
    let curve = TorqueCurve::new(points).expect("static curve");
    let speed_axis = axis(0.0, EM_SPEED_MAX_RPM, 100.0);
    let torque_axis = axis(0.0, EM_TORQUE_MAX_NM, 100.0);
    let values = grid_eff(&speed_axis, &torque_axis, |s, t| {
        eff_bump(
            s,
            t,
            EM_SPEED_RATED_RPM,
            1900.0,
            EM_SPEED_MAX_RPM,
            EM_TORQUE_MAX_NM,
            EM_PEAK_EFF,
            0.75,
            0.3,
        )
    });
    ComponentMap {
        name: "em_eff".into(),
        quantity: MapQuantity::Efficiency,
        speed_axis,
        torque_axis,
        values,
        max_torque_curve: curve,
        speed_max: EM_SPEED_MAX_RPM,
        power_max: EM_POWER_MAX_W,
    }
}

fn grid_eff(speed: &[f64], torque: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<Vec<f64>> {
    speed
        .iter()
        .map(|&s| torque.iter().map(|&t| f(s, t)).collect())
        .collect()
}

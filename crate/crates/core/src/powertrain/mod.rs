//! Series-HEV physics: road load, traction-motor electrical demand, genset
//! electrical supply and fuel rate, battery dynamics, and the component
//! constraint set.
//!
//! All operations are pure functions of their arguments; a built
//! [`PowertrainModel`] is immutable and safe to share across threads.

pub mod battery;
pub mod maps;

pub use battery::{BatteryPack, BatteryStep};
pub use maps::{ComponentMap, MapQuantity, TorqueCurve};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PowertrainError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("map query outside grid: {0}")]
    OutOfGrid(String),
}

/// Diesel density, kg/L.
pub const FUEL_DENSITY_KG_PER_L: f64 = 0.85;
/// Diesel lower heating value, J/kg.
pub const FUEL_LHV_J_PER_KG: f64 = 42.5e6;
pub const LITERS_PER_GALLON: f64 = 3.78541;
pub const METERS_PER_MILE: f64 = 1609.344;

/// Chassis-level constants.
///
/// Published values: curb weight 36287 kg, wheel radius 0.507 m, frontal area
/// 8.48 m². The remaining coefficients are typical class-8 tractor values and
/// are configurable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub mass_kg: f64,
    pub wheel_radius_m: f64,
    pub frontal_area_m2: f64,
    pub drag_coeff: f64,
    pub rolling_coeff: f64,
    pub air_density: f64,
    pub gravity: f64,
    pub final_drive_ratio: f64,
    pub driveline_eff: f64,
    /// Constant hotel/auxiliary electrical load, W.
    pub aux_power_w: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass_kg: 36287.0,
            wheel_radius_m: 0.507,
            frontal_area_m2: 8.48,
            drag_coeff: 0.60,
            rolling_coeff: 0.007,
            air_density: 1.225,
            gravity: 9.81,
            final_drive_ratio: 5.0,
            driveline_eff: 0.97,
            aux_power_w: 5000.0,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), PowertrainError> {
        let positive = [
            ("mass", self.mass_kg),
            ("wheel_radius", self.wheel_radius_m),
            ("frontal_area", self.frontal_area_m2),
            ("drag_coeff", self.drag_coeff),
            ("rolling_coeff", self.rolling_coeff),
            ("air_density", self.air_density),
            ("gravity", self.gravity),
            ("final_drive_ratio", self.final_drive_ratio),
            ("driveline_eff", self.driveline_eff),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(PowertrainError::Validation(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.aux_power_w < 0.0 {
            return Err(PowertrainError::Validation("aux_power must be >= 0".into()));
        }
        if self.rolling_coeff >= 0.1 {
            return Err(PowertrainError::Validation(format!(
                "rolling_coeff {} implausibly large",
                self.rolling_coeff
            )));
        }
        if self.driveline_eff > 1.0 {
            return Err(PowertrainError::Validation("driveline_eff must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// The complete series-HEV plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowertrainModel {
    pub vehicle: VehicleParams,
    pub engine_fuel: ComponentMap,
    pub generator_eff: ComponentMap,
    pub em_eff: ComponentMap,
    pub battery: BatteryPack,
    pub fuel_density_kg_per_l: f64,
    pub fuel_lhv_j_per_kg: f64,
}

/// Electrical demand of the traction machine at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmDemand {
    /// Electrical power at the bus, W; positive draws, negative regenerates.
    pub p_elec_w: f64,
    /// False when the point exceeds the machine's speed or torque limits.
    pub feasible: bool,
}

/// Genset (engine + generator) output at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GensetOutput {
    pub p_elec_w: f64,
    pub fuel_g_per_s: f64,
}

impl PowertrainModel {
    /// Build the default model from the published ratings with synthesized
    /// map shapes.
    pub fn default_model() -> Self {
        Self {
            vehicle: VehicleParams::default(),
            engine_fuel: maps::default_engine_map(FUEL_LHV_J_PER_KG),
            generator_eff: maps::default_generator_map(),
            em_eff: maps::default_em_map(),
            battery: BatteryPack::default(),
            fuel_density_kg_per_l: FUEL_DENSITY_KG_PER_L,
            fuel_lhv_j_per_kg: FUEL_LHV_J_PER_KG,
        }
    }

    pub fn validate(&self) -> Result<(), PowertrainError> {
        self.vehicle.validate()?;
        self.engine_fuel.validate()?;
        self.generator_eff.validate()?;
        self.em_eff.validate()?;
        self.battery.validate()?;
        // Genset shares a shaft: the generator must cover the engine's range.
        if self.generator_eff.speed_max < self.engine_fuel.speed_max {
            return Err(PowertrainError::Validation(format!(
                "generator speed limit {} rpm below engine operating range {} rpm",
                self.generator_eff.speed_max, self.engine_fuel.speed_max
            )));
        }
        Ok(())
    }

    /// Genset torque limit at `rpm`: the tighter of engine and generator.
    pub fn genset_torque_limit(&self, rpm: f64) -> f64 {
        self.engine_fuel
            .max_torque_curve
            .at(rpm)
            .min(self.generator_eff.max_torque_curve.at(rpm))
    }
}

/// Longitudinal road-load force, N.
///
/// `m·a + m·g·(c_rr·cosθ + sinθ)·[v > 0] + ½·ρ·Cd·A·v²` — the rolling term is
/// suppressed at standstill.
pub fn road_load_force(v: f64, accel: f64, grade: f64, p: &VehicleParams) -> f64 {
    debug_assert!(v >= 0.0);
    let inertial = p.mass_kg * accel;
    let road = if v > 0.0 {
        p.mass_kg * p.gravity * (p.rolling_coeff * grade.cos() + grade.sin())
    } else {
        0.0
    };
    let drag = 0.5 * p.air_density * p.drag_coeff * p.frontal_area_m2 * v * v;
    inertial + road + drag
}

/// Electrical power the traction machine needs from the bus to follow the
/// trace point `(v, accel, grade)`.
///
/// Positive wheel power passes through the driveline and machine losses;
/// negative wheel power (braking) regenerates through the same chain with the
/// efficiencies applied in the favorable direction. Limits are reported via
/// the `feasible` flag rather than an error so whole cycles can be screened.
pub fn em_power_demand(v: f64, accel: f64, grade: f64, model: &PowertrainModel) -> EmDemand {
    let p_wheel = road_load_force(v, accel, grade, &model.vehicle) * v;
    if p_wheel == 0.0 {
        return EmDemand {
            p_elec_w: 0.0,
            feasible: true,
        };
    }
    let d_eff = model.vehicle.driveline_eff;
    let p_mech = if p_wheel > 0.0 {
        p_wheel / d_eff
    } else {
        p_wheel * d_eff
    };
    let omega_rad = v / model.vehicle.wheel_radius_m * model.vehicle.final_drive_ratio;
    let omega_rpm = maps::rad_to_rpm(omega_rad);
    let torque = if omega_rad > 0.0 { p_mech / omega_rad } else { 0.0 };
    let torque_limit = model.em_eff.max_torque_curve.at(omega_rpm);
    let feasible = omega_rpm <= model.em_eff.speed_max + 1e-9 && torque.abs() <= torque_limit + 1e-9;
    let eta = model.em_eff.interp(omega_rpm, torque.abs());
    let p_elec = if p_mech > 0.0 { p_mech / eta } else { p_mech * eta };
    EmDemand {
        p_elec_w: p_elec,
        feasible,
    }
}

/// Electrical output and fuel burn of the genset at a clipped operating point.
///
/// Out-of-grid queries are a contract violation: callers must clip first.
pub fn genset_output(
    omega_rpm: f64,
    torque_nm: f64,
    model: &PowertrainModel,
) -> Result<GensetOutput, PowertrainError> {
    if omega_rpm == 0.0 || torque_nm == 0.0 {
        // Engine off or unloaded: the map's first row carries any idle burn.
        let fuel = if omega_rpm == 0.0 {
            0.0
        } else {
            model.engine_fuel.interp(omega_rpm, 0.0)
        };
        return Ok(GensetOutput {
            p_elec_w: 0.0,
            fuel_g_per_s: fuel,
        });
    }
    if !model.engine_fuel.in_grid(omega_rpm, torque_nm) {
        return Err(PowertrainError::OutOfGrid(format!(
            "engine point ({omega_rpm} rpm, {torque_nm} Nm)"
        )));
    }
    let p_mech = torque_nm * maps::rpm_to_rad(omega_rpm);
    let eta_gen = model.generator_eff.interp(omega_rpm, torque_nm);
    let fuel = model.engine_fuel.interp(omega_rpm, torque_nm);
    Ok(GensetOutput {
        p_elec_w: p_mech * eta_gen,
        fuel_g_per_s: fuel,
    })
}

/// Clamp a raw engine command into the feasible genset region.
///
/// Speed clamps to the engine range (which sits inside the generator's limit);
/// torque clamps to the tighter of the two machines' limit curves at the
/// clamped speed. Idempotent by construction.
pub fn clip_action(omega_rpm: f64, torque_nm: f64, model: &PowertrainModel) -> (f64, f64) {
    let omega = omega_rpm.clamp(0.0, model.engine_fuel.speed_max);
    let torque = torque_nm.clamp(0.0, model.genset_torque_limit(omega));
    (omega, torque)
}

/// Bus power balance: the battery closes it exactly.
///
/// Positive result = battery discharging.
pub fn power_balance(p_em_elec: f64, p_aux: f64, p_genset: f64) -> f64 {
    p_em_elec + p_aux - p_genset
}

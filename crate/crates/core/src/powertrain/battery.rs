//! Zeroth-order equivalent-circuit battery: per-cell open-circuit voltage plus
//! a series resistance, scaled by the series/parallel pack layout.

use serde::{Deserialize, Serialize};

use super::PowertrainError;

/// Battery pack parameters.
///
/// Defaults reproduce the published pack: 160s/115p NMC cells, 4.85 Ah and
/// 3.63 V rated per cell, 323.94 kWh nominal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryPack {
    pub cells_series: u32,
    pub cells_parallel: u32,
    /// Ah per cell.
    pub cell_capacity: f64,
    /// V per cell at the rated point.
    pub cell_rated_voltage: f64,
    /// Ohm per cell.
    pub cell_resistance: f64,
    /// Affine open-circuit voltage: `ocv = ocv_base + ocv_slope * soc`, per cell.
    pub ocv_base: f64,
    pub ocv_slope: f64,
    pub soc_min: f64,
    pub soc_max: f64,
}

impl Default for BatteryPack {
    fn default() -> Self {
        Self {
            cells_series: 160,
            cells_parallel: 115,
            cell_capacity: 4.85,
            cell_rated_voltage: 3.63,
            cell_resistance: 0.0015,
            // Anchored so ocv(0.5) = 3.63 V, mildly increasing in SOC.
            ocv_base: 3.45,
            ocv_slope: 0.36,
            soc_min: 0.0,
            soc_max: 1.0,
        }
    }
}

/// One battery integration step result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryStep {
    pub soc_next: f64,
    /// Pack current, A; positive discharging.
    pub current: f64,
    /// True when the requested power exceeded the deliverable limit
    /// (the current was computed at the limit power instead).
    pub p_limit_violation: bool,
}

impl BatteryPack {
    pub fn validate(&self) -> Result<(), PowertrainError> {
        if self.cells_series == 0 || self.cells_parallel == 0 {
            return Err(PowertrainError::Validation("cell counts must be > 0".into()));
        }
        if !(self.cell_capacity > 0.0 && self.cell_rated_voltage > 0.0) {
            return Err(PowertrainError::Validation(
                "cell capacity and voltage must be > 0".into(),
            ));
        }
        if !(self.cell_resistance > 0.0) {
            return Err(PowertrainError::Validation("cell resistance must be > 0".into()));
        }
        if self.ocv_slope < 0.0 {
            return Err(PowertrainError::Validation(
                "open-circuit voltage must be non-decreasing in SOC".into(),
            ));
        }
        Ok(())
    }

    /// Per-cell open-circuit voltage at `soc`.
    pub fn cell_ocv(&self, soc: f64) -> f64 {
        self.ocv_base + self.ocv_slope * soc
    }

    /// Pack open-circuit voltage at `soc`.
    pub fn pack_ocv(&self, soc: f64) -> f64 {
        self.cells_series as f64 * self.cell_ocv(soc)
    }

    /// Pack series resistance, Ohm.
    pub fn pack_resistance(&self) -> f64 {
        self.cell_resistance * self.cells_series as f64 / self.cells_parallel as f64
    }

    /// Pack capacity, Ah.
    pub fn pack_capacity_ah(&self) -> f64 {
        self.cell_capacity * self.cells_parallel as f64
    }

    /// Nominal pack energy, Wh.
    pub fn nominal_energy_wh(&self) -> f64 {
        self.cells_series as f64
            * self.cells_parallel as f64
            * self.cell_rated_voltage
            * self.cell_capacity
    }

    /// Maximum deliverable terminal power at `soc`, W (discharge).
    pub fn power_limit(&self, soc: f64) -> f64 {
        let voc = self.pack_ocv(soc);
        voc * voc / (4.0 * self.pack_resistance())
    }

    /// Integrate the pack over `dt` seconds at terminal power `p_batt`
    /// (positive = discharging).
    ///
    /// Solves `p = Voc·i − i²R` for the physical (smaller) current root. When
    /// the discriminant goes negative the requested power is undeliverable;
    /// the current is evaluated at the limit power and the violation flagged.
    pub fn step(&self, soc: f64, p_batt: f64, dt: f64) -> Result<BatteryStep, PowertrainError> {
        if !(0.0..=1.0).contains(&soc) {
            return Err(PowertrainError::Precondition(format!(
                "soc {soc} outside [0, 1]"
            )));
        }
        let voc = self.pack_ocv(soc);
        let r = self.pack_resistance();
        let disc = voc * voc - 4.0 * r * p_batt;
        let (current, violated) = if disc < 0.0 {
            (voc / (2.0 * r), true)
        } else if p_batt == 0.0 {
            (0.0, false)
        } else {
            ((voc - disc.sqrt()) / (2.0 * r), false)
        };
        let soc_next = soc - current * dt / (3600.0 * self.pack_capacity_ah());
        Ok(BatteryStep {
            soc_next,
            current,
            p_limit_violation: violated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_energy_matches_published_pack() {
        let b = BatteryPack::default();
        let wh = b.nominal_energy_wh();
        assert!(
            (wh - 323.94e3).abs() / 323.94e3 < 0.001,
            "pack energy {wh} Wh vs 323.94 kWh"
        );
    }

    #[test]
    fn idle_step_is_exact_identity() {
        let b = BatteryPack::default();
        let s = b.step(0.37, 0.0, 1.0).unwrap();
        assert_eq!(s.soc_next, 0.37);
        assert_eq!(s.current, 0.0);
        assert!(!s.p_limit_violation);
    }

    #[test]
    fn discharge_100kw_hand_values() {
        let b = BatteryPack::default();
        // Voc = 160·3.63 = 580.8 V, R = 0.0015·160/115 ≈ 2.087 mΩ.
        let voc = b.pack_ocv(0.5);
        assert!((voc - 580.8).abs() < 1e-9);
        let r = b.pack_resistance();
        assert!((r - 0.0015 * 160.0 / 115.0).abs() < 1e-15);
        let s = b.step(0.5, 100e3, 1.0).unwrap();
        let i_hand = (voc - (voc * voc - 4.0 * r * 100e3).sqrt()) / (2.0 * r);
        assert_eq!(s.current, i_hand);
        assert!((s.current - 172.3).abs() < 0.5, "current {}", s.current);
        let dsoc = s.soc_next - 0.5;
        assert!((dsoc + i_hand / (3600.0 * 557.75)).abs() < 1e-12, "dsoc {dsoc}");
    }

    #[test]
    fn charging_raises_soc() {
        let b = BatteryPack::default();
        let s = b.step(0.5, -100e3, 1.0).unwrap();
        assert!(s.soc_next > 0.5);
        assert!(s.current < 0.0);
    }

    #[test]
    fn over_limit_power_flags_violation() {
        let b = BatteryPack::default();
        let limit = b.power_limit(0.5);
        let s = b.step(0.5, limit * 1.01, 1.0).unwrap();
        assert!(s.p_limit_violation);
        let voc = b.pack_ocv(0.5);
        assert_eq!(s.current, voc / (2.0 * b.pack_resistance()));
    }

    #[test]
    fn round_trip_never_gains_charge() {
        let b = BatteryPack::default();
        for p in [10e3, 50e3, 150e3] {
            let a = b.step(0.5, p, 1.0).unwrap();
            let back = b.step(a.soc_next, -p, 1.0).unwrap();
            assert!(
                back.soc_next <= 0.5 + 1e-15,
                "p {p}: round trip soc {}",
                back.soc_next
            );
        }
    }

    #[test]
    fn soc_precondition_enforced() {
        let b = BatteryPack::default();
        assert!(b.step(1.2, 0.0, 1.0).is_err());
        assert!(b.step(-0.1, 0.0, 1.0).is_err());
    }
}

//! Comparison reports: final SOC and fuel economy of agent runs against the
//! dynamic-programming baseline, with relative-percent deltas and their
//! signed sum, in both aligned-text and machine-readable renderings.
//!
//! Every number in a report is recomputed from the referenced trace files;
//! reports carry no free-floating values.

use crate::env::StepRecord;
use crate::powertrain::PowertrainModel;

use super::HarnessError;

/// Metrics recomputed from one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub name: String,
    pub soc_f_pct: f64,
    pub mpg: f64,
    pub fuel_g: f64,
    pub distance_m: f64,
    pub steps: usize,
}

/// Recompute run metrics from trace rows (row 0 is the reset snapshot).
pub fn metrics_from_trace(
    name: impl Into<String>,
    records: &[StepRecord],
    dt_s: f64,
    model: &PowertrainModel,
) -> Result<RunMetrics, HarnessError> {
    if records.len() < 2 {
        return Err(HarnessError::Config(format!(
            "trace has {} rows; need a snapshot plus at least one step",
            records.len()
        )));
    }
    let steps = &records[1..];
    let fuel_g: f64 = steps.iter().map(|r| r.fuel_g).sum();
    let distance_m: f64 = steps.iter().map(|r| r.v_mps * dt_s).sum();
    let soc_f = steps.last().unwrap().soc;
    let mpg = crate::dp::mpg_of(distance_m, fuel_g, model)
        .map_err(|e| HarnessError::Config(e.to_string()))?
        .mpg;
    Ok(RunMetrics {
        name: name.into(),
        soc_f_pct: soc_f * 100.0,
        mpg,
        fuel_g,
        distance_m,
        steps: steps.len(),
    })
}

/// Relative percent difference `100·(agent − dp)/dp`.
pub fn delta_pct(agent: f64, dp: f64) -> f64 {
    100.0 * (agent - dp) / dp
}

/// Signed sum of the two printed deltas.
pub fn total_pct(dsoc_pct: f64, dmpg_pct: f64) -> f64 {
    dsoc_pct + dmpg_pct
}

/// Round to two printed decimals (ties away from zero), matching the report
/// rendering so printed totals equal the sum of printed deltas.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

#[derive(Debug, Clone)]
pub struct CompareRow {
    pub metrics: RunMetrics,
    pub dsoc_pct: f64,
    pub dmpg_pct: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub dp: RunMetrics,
    pub rows: Vec<CompareRow>,
}

/// Build the comparison. All runs must cover the same cycle from the same
/// initial SOC as the baseline.
pub fn compare(dp: RunMetrics, runs: Vec<RunMetrics>) -> Result<CompareReport, HarnessError> {
    for r in &runs {
        if r.steps != dp.steps || (r.distance_m - dp.distance_m).abs() > 1e-6 * dp.distance_m.max(1.0)
        {
            return Err(HarnessError::Config(format!(
                "run `{}` is not on the baseline's cycle ({} steps / {:.1} m vs {} steps / {:.1} m)",
                r.name, r.steps, r.distance_m, dp.steps, dp.distance_m
            )));
        }
    }
    let rows = runs
        .into_iter()
        .map(|m| {
            let dsoc = delta_pct(m.soc_f_pct, dp.soc_f_pct);
            let dmpg = delta_pct(m.mpg, dp.mpg);
            // Printed totals sum the printed (rounded) deltas.
            let total = total_pct(round2(dsoc), round2(dmpg));
            CompareRow {
                metrics: m,
                dsoc_pct: dsoc,
                dmpg_pct: dmpg,
                total,
            }
        })
        .collect();
    Ok(CompareReport { dp, rows })
}

impl CompareReport {
    pub fn text_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<10}{:>12}{:>12}\n", "", "SoC_f (%)", "MPG"));
        out.push_str(&format!(
            "{:<10}{:>12.2}{:>12.2}\n",
            "DP", self.dp.soc_f_pct, self.dp.mpg
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<10}{:>12.2}{:>12.2}\n",
                row.metrics.name, row.metrics.soc_f_pct, row.metrics.mpg
            ));
            out.push_str(&format!(
                "{:<10}{:>12}{:>12}\n",
                "Δ (%)",
                format!("{:+.2}", row.dsoc_pct),
                format!("{:+.2}", row.dmpg_pct)
            ));
            out.push_str(&format!(
                "{:<10}{:>24}\n",
                "Total (%)",
                format!("{:+.2}", row.total)
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,soc_f_pct,mpg,dsoc_pct,dmpg_pct,total_pct\n");
        out.push_str(&format!(
            "DP,{},{},0,0,0\n",
            self.dp.soc_f_pct, self.dp.mpg
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.metrics.name,
                row.metrics.soc_f_pct,
                row.metrics.mpg,
                row.dsoc_pct,
                row.dmpg_pct,
                row.total
            ));
        }
        out
    }
}

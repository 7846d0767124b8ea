//! Dynamic-programming baseline: backward value iteration over a time × SOC
//! grid with a genset operating-point action grid, a terminal
//! charge-sustaining window, and an exhaustive brute-force oracle for tiny
//! snapped instances.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cycles::DriveCycle;
use crate::env::{reward_fn, RewardWeights, StepRecord};
use crate::powertrain::{
    clip_action, em_power_demand, genset_output, power_balance, PowertrainError, PowertrainModel,
    LITERS_PER_GALLON, METERS_PER_MILE,
};

#[derive(Debug, Error)]
pub enum DpError {
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no feasible terminal path from the initial SOC; first stranded time index {first_stranded_step}")]
    Infeasible { first_stranded_step: usize },
    #[error("cycle exceeds traction-machine limits at step {step}")]
    EmInfeasible { step: usize },
    #[error("instance too large to enumerate: {count:.3e} action sequences")]
    TooLarge { count: f64 },
    #[error(transparent)]
    Powertrain(#[from] PowertrainError),
}

/// Solver discretization and constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    pub soc_grid: Vec<f64>,
    pub omega_grid: Vec<f64>,
    pub torque_grid: Vec<f64>,
    /// Terminal SOC window `[lo, hi]`; outside it the terminal cost is the
    /// infeasible sentinel.
    pub terminal_soc: (f64, f64),
    /// Large finite cost marking infeasible transitions; keeps the linear
    /// value interpolation defined everywhere.
    pub infeasible_cost: f64,
    /// Project the post-step SOC onto the nearest grid node. Used by the
    /// brute-force comparison harness so both solvers share one transition
    /// function; production solves interpolate instead.
    pub snap_dynamics: bool,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            soc_grid: uniform_grid(0.0, 1.0, 401),
            omega_grid: uniform_grid(0.0, 2300.0, 13),
            torque_grid: uniform_grid(0.0, 1500.0, 13),
            terminal_soc: (0.15, 0.18),
            infeasible_cost: 1e9,
            snap_dynamics: false,
        }
    }
}

pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

impl DpConfig {
    pub fn validate(&self) -> Result<(), DpError> {
        let ascending = |g: &[f64]| g.windows(2).all(|w| w[1] > w[0]);
        if self.soc_grid.len() < 2 || !ascending(&self.soc_grid) {
            return Err(DpError::Precondition("soc grid must be ascending, len >= 2".into()));
        }
        if self.omega_grid.is_empty() || self.torque_grid.is_empty() {
            return Err(DpError::Precondition("action grids must be non-empty".into()));
        }
        if !ascending(&self.omega_grid) || !ascending(&self.torque_grid) {
            return Err(DpError::Precondition("action grids must be ascending".into()));
        }
        let (lo, hi) = self.terminal_soc;
        if !(lo > 0.0 && hi < 1.0 && hi >= lo) {
            return Err(DpError::Precondition(format!(
                "terminal window [{lo}, {hi}] must sit inside (0, 1)"
            )));
        }
        if !(self.infeasible_cost > 0.0) {
            return Err(DpError::Precondition("infeasible cost must be positive".into()));
        }
        Ok(())
    }

    fn threshold(&self) -> f64 {
        0.5 * self.infeasible_cost
    }
}

/// Solver output. Fuel is in grams throughout.
#[derive(Debug, Clone)]
pub struct DpSolution {
    /// Cost-to-go per `(time, soc-node)`, `(steps + 1) × soc_grid.len()`.
    pub value: Vec<Vec<f64>>,
    /// Argmin action index per `(time, soc-node)`.
    pub policy: Vec<Vec<u32>>,
    /// Forward-simulated optimal trajectory in the shared trace format.
    pub trace: Vec<StepRecord>,
    /// Executed action index per step of the forward simulation.
    pub action_sequence: Vec<u32>,
    pub total_fuel_g: f64,
    pub mpg: f64,
    pub soc_final: f64,
}

/// One precomputed genset operating point.
#[derive(Debug, Clone, Copy)]
struct ActionPoint {
    omega: f64,
    torque: f64,
    p_elec: f64,
    fuel_g_per_s: f64,
}

fn action_points(model: &PowertrainModel, cfg: &DpConfig) -> Result<Vec<ActionPoint>, DpError> {
    let mut out = Vec::with_capacity(cfg.omega_grid.len() * cfg.torque_grid.len());
    for &o in &cfg.omega_grid {
        for &t in &cfg.torque_grid {
            let (omega, torque) = clip_action(o, t, model);
            let gs = genset_output(omega, torque, model)?;
            out.push(ActionPoint {
                omega,
                torque,
                p_elec: gs.p_elec_w,
                fuel_g_per_s: gs.fuel_g_per_s,
            });
        }
    }
    Ok(out)
}

/// Electrical demand trace (EM + auxiliaries handled separately).
fn demand_trace(cycle: &DriveCycle, model: &PowertrainModel) -> Result<Vec<f64>, DpError> {
    let mut demand = Vec::with_capacity(cycle.len());
    for i in 0..cycle.len() {
        let d = em_power_demand(cycle.velocity()[i], cycle.accel(i), cycle.grade()[i], model);
        if !d.feasible {
            return Err(DpError::EmInfeasible { step: i });
        }
        demand.push(d.p_elec_w);
    }
    Ok(demand)
}

/// Shared one-step transition: returns `(soc_next, fuel_g)` or `None` when
/// the step is infeasible (battery power limit or SOC bounds).
fn transition(
    model: &PowertrainModel,
    cfg: &DpConfig,
    soc: f64,
    a: &ActionPoint,
    p_em: f64,
    dt: f64,
) -> Option<(f64, f64)> {
    let p_batt = power_balance(p_em, model.vehicle.aux_power_w, a.p_elec);
    let step = model.battery.step(soc, p_batt, dt).ok()?;
    if step.p_limit_violation {
        return None;
    }
    if !(0.0..=1.0).contains(&step.soc_next) {
        return None;
    }
    let soc_next = if cfg.snap_dynamics {
        snap(&cfg.soc_grid, step.soc_next)
    } else {
        step.soc_next
    };
    Some((soc_next, a.fuel_g_per_s * dt))
}

fn snap(grid: &[f64], soc: f64) -> f64 {
    let mut best = grid[0];
    let mut dist = (soc - grid[0]).abs();
    for &g in &grid[1..] {
        let d = (soc - g).abs();
        if d < dist {
            dist = d;
            best = g;
        }
    }
    best
}

/// Piecewise-linear read of a value row at an arbitrary SOC.
fn interp_value(grid: &[f64], values: &[f64], soc: f64) -> f64 {
    let n = grid.len();
    if soc <= grid[0] {
        return values[0];
    }
    if soc >= grid[n - 1] {
        return values[n - 1];
    }
    let i = (grid.partition_point(|&g| g <= soc) - 1).min(n - 2);
    let u = (soc - grid[i]) / (grid[i + 1] - grid[i]);
    values[i] * (1.0 - u) + values[i + 1] * u
}

/// Solve the minimum-fuel control problem by backward value iteration and a
/// forward re-optimizing simulation.
pub fn dp_solve(
    cycle: &DriveCycle,
    model: &PowertrainModel,
    cfg: &DpConfig,
    initial_soc: f64,
) -> Result<DpSolution, DpError> {
    cfg.validate()?;
    if !(0.0..=1.0).contains(&initial_soc) {
        return Err(DpError::Precondition(format!(
            "initial soc {initial_soc} outside [0, 1]"
        )));
    }
    let demand = demand_trace(cycle, model)?;
    let actions = action_points(model, cfg)?;
    let steps = cycle.len();
    let dt = cycle.dt();
    let n_soc = cfg.soc_grid.len();
    let threshold = cfg.threshold();

    // Terminal cost: zero inside the charge-sustaining window.
    let mut value = vec![vec![cfg.infeasible_cost; n_soc]; steps + 1];
    let mut policy = vec![vec![0u32; n_soc]; steps];
    let (term_lo, term_hi) = cfg.terminal_soc;
    for (s, &soc) in cfg.soc_grid.iter().enumerate() {
        if soc >= term_lo - 1e-12 && soc <= term_hi + 1e-12 {
            value[steps][s] = 0.0;
        }
    }

    for t in (0..steps).rev() {
        for (s, &soc) in cfg.soc_grid.iter().enumerate() {
            let mut best = cfg.infeasible_cost;
            let mut best_a = 0u32;
            for (ai, a) in actions.iter().enumerate() {
                let Some((soc_next, fuel)) = transition(model, cfg, soc, a, demand[t], dt) else {
                    continue;
                };
                let next = interp_value(&cfg.soc_grid, &value[t + 1], soc_next);
                if next >= threshold {
                    continue;
                }
                let cost = fuel + next;
                if cost < best {
                    best = cost;
                    best_a = ai as u32;
                }
            }
            value[t][s] = best.min(cfg.infeasible_cost);
            policy[t][s] = best_a;
        }
    }

    // Forward simulation with interpolation-consistent re-optimization.
    let weights = RewardWeights::default();
    let mut soc = initial_soc;
    let mut total_fuel = 0.0;
    let mut distance = 0.0;
    let mut action_sequence = Vec::with_capacity(steps);
    let mut trace = Vec::with_capacity(steps + 1);
    trace.push(StepRecord {
        step: 0,
        v_mps: cycle.velocity()[0],
        soc,
        p_em_w: demand[0],
        omega_rpm: 0.0,
        torque_nm: 0.0,
        fuel_g: 0.0,
        p_batt_w: 0.0,
        reward: 0.0,
        done: false,
    });
    for t in 0..steps {
        let mut best_cost = f64::INFINITY;
        let mut chosen: Option<(usize, f64, f64)> = None;
        for (ai, a) in actions.iter().enumerate() {
            let Some((soc_next, fuel)) = transition(model, cfg, soc, a, demand[t], dt) else {
                continue;
            };
            let next = interp_value(&cfg.soc_grid, &value[t + 1], soc_next);
            if next >= threshold {
                continue;
            }
            let cost = fuel + next;
            if cost < best_cost {
                best_cost = cost;
                chosen = Some((ai, soc_next, fuel));
            }
        }
        let Some((ai, soc_next, fuel)) = chosen else {
            return Err(DpError::Infeasible {
                first_stranded_step: t,
            });
        };
        let a = &actions[ai];
        let p_batt = power_balance(demand[t], model.vehicle.aux_power_w, a.p_elec);
        total_fuel += fuel;
        distance += cycle.velocity()[t] * dt;
        soc = soc_next;
        action_sequence.push(ai as u32);
        trace.push(StepRecord {
            step: t as i64 + 1,
            v_mps: cycle.velocity()[t],
            soc,
            p_em_w: demand[t],
            omega_rpm: a.omega,
            torque_nm: a.torque,
            fuel_g: fuel,
            p_batt_w: p_batt,
            reward: reward_fn(fuel, soc, initial_soc, &weights),
            done: t + 1 == steps,
        });
    }
    if soc < term_lo - 1e-9 || soc > term_hi + 1e-9 {
        // The interpolated plan drifted out of the window; the instance is
        // not solvable within this discretization.
        return Err(DpError::Infeasible {
            first_stranded_step: steps - 1,
        });
    }

    let mpg = trace_mpg(distance, total_fuel, model);
    Ok(DpSolution {
        value,
        policy,
        trace,
        action_sequence,
        total_fuel_g: total_fuel,
        mpg,
        soc_final: soc,
    })
}

/// Exhaustively enumerate all action sequences on the snapped dynamics.
///
/// Demands `snap_dynamics` (so the oracle and the solver share one
/// transition function) and a sequence count within the enumeration budget.
pub fn brute_force(
    cycle: &DriveCycle,
    model: &PowertrainModel,
    cfg: &DpConfig,
    initial_soc: f64,
) -> Result<DpSolution, DpError> {
    cfg.validate()?;
    if !cfg.snap_dynamics {
        return Err(DpError::Precondition(
            "brute force requires snapped dynamics".into(),
        ));
    }
    let actions = action_points(model, cfg)?;
    let demand = demand_trace(cycle, model)?;
    let steps = cycle.len();
    let count = (actions.len() as f64).powi(steps as i32);
    if count > 1e7 {
        return Err(DpError::TooLarge { count });
    }
    let dt = cycle.dt();
    let start = snap(&cfg.soc_grid, initial_soc);

    struct Search<'a> {
        model: &'a PowertrainModel,
        cfg: &'a DpConfig,
        actions: &'a [ActionPoint],
        demand: &'a [f64],
        dt: f64,
        steps: usize,
        best_fuel: f64,
        best_seq: Option<Vec<u32>>,
    }

    impl Search<'_> {
        fn go(&mut self, t: usize, soc: f64, fuel: f64, seq: &mut Vec<u32>) {
            if fuel >= self.best_fuel {
                return;
            }
            if t == self.steps {
                let (lo, hi) = self.cfg.terminal_soc;
                if soc >= lo - 1e-12 && soc <= hi + 1e-12 {
                    self.best_fuel = fuel;
                    self.best_seq = Some(seq.clone());
                }
                return;
            }
            for (ai, a) in self.actions.iter().enumerate() {
                if let Some((soc_next, f)) =
                    transition(self.model, self.cfg, soc, a, self.demand[t], self.dt)
                {
                    seq.push(ai as u32);
                    self.go(t + 1, soc_next, fuel + f, seq);
                    seq.pop();
                }
            }
        }
    }

    let mut search = Search {
        model,
        cfg,
        actions: &actions,
        demand: &demand,
        dt,
        steps,
        best_fuel: f64::INFINITY,
        best_seq: None,
    };
    let mut seq = Vec::with_capacity(steps);
    search.go(0, start, 0.0, &mut seq);

    let Some(best_seq) = search.best_seq else {
        return Err(DpError::Infeasible {
            first_stranded_step: 0,
        });
    };

    // Replay the winning sequence for the trace.
    let weights = RewardWeights::default();
    let mut soc = start;
    let mut total_fuel = 0.0;
    let mut distance = 0.0;
    let mut trace = Vec::with_capacity(steps + 1);
    trace.push(StepRecord {
        step: 0,
        v_mps: cycle.velocity()[0],
        soc,
        p_em_w: demand[0],
        omega_rpm: 0.0,
        torque_nm: 0.0,
        fuel_g: 0.0,
        p_batt_w: 0.0,
        reward: 0.0,
        done: false,
    });
    for (t, &ai) in best_seq.iter().enumerate() {
        let a = &actions[ai as usize];
        let (soc_next, fuel) = transition(model, cfg, soc, a, demand[t], dt)
            .expect("winning sequence replays feasibly");
        soc = soc_next;
        total_fuel += fuel;
        distance += cycle.velocity()[t] * dt;
        trace.push(StepRecord {
            step: t as i64 + 1,
            v_mps: cycle.velocity()[t],
            soc,
            p_em_w: demand[t],
            omega_rpm: a.omega,
            torque_nm: a.torque,
            fuel_g: fuel,
            p_batt_w: power_balance(demand[t], model.vehicle.aux_power_w, a.p_elec),
            reward: reward_fn(fuel, soc, initial_soc, &weights),
            done: t + 1 == steps,
        });
    }
    let mpg = trace_mpg(distance, total_fuel, model);
    Ok(DpSolution {
        value: Vec::new(),
        policy: Vec::new(),
        trace,
        action_sequence: best_seq,
        total_fuel_g: total_fuel,
        mpg,
        soc_final: soc,
    })
}

/// MPG for a solver trace; zero-distance stationary instances report NaN.
fn trace_mpg(distance_m: f64, fuel_g: f64, model: &PowertrainModel) -> f64 {
    if distance_m > 0.0 {
        mpg_of(distance_m, fuel_g, model).map(|fe| fe.mpg).unwrap_or(f64::NAN)
    } else {
        f64::NAN
    }
}

/// Miles-per-gallon figure with a zero-fuel sentinel flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuelEconomy {
    pub mpg: f64,
    pub zero_fuel: bool,
}

/// Fuel economy from trace totals: miles over gallons via the configured
/// fuel density.
pub fn mpg_of(
    distance_m: f64,
    fuel_g: f64,
    model: &PowertrainModel,
) -> Result<FuelEconomy, DpError> {
    if !(distance_m > 0.0) {
        return Err(DpError::Precondition(format!(
            "trace distance {distance_m} must be positive"
        )));
    }
    if fuel_g < 0.0 {
        return Err(DpError::Precondition(format!("fuel {fuel_g} g negative")));
    }
    let miles = distance_m / METERS_PER_MILE;
    if fuel_g == 0.0 {
        return Ok(FuelEconomy {
            mpg: f64::INFINITY,
            zero_fuel: true,
        });
    }
    let gallons = fuel_g / 1000.0 / model.fuel_density_kg_per_l / LITERS_PER_GALLON;
    Ok(FuelEconomy {
        mpg: miles / gallons,
        zero_fuel: false,
    })
}

impl DpSolution {
    /// Write value/policy grids and the trace into `dir`.
    pub fn write_artifacts(&self, dir: impl AsRef<std::path::Path>) -> std::io::Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let grid_csv = |grid: &Vec<Vec<f64>>| {
            let mut out = String::new();
            for row in grid {
                let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            out
        };
        std::fs::write(dir.join("value.csv"), grid_csv(&self.value))?;
        let mut pol = String::new();
        for row in &self.policy {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            pol.push_str(&cells.join(","));
            pol.push('\n');
        }
        std::fs::write(dir.join("policy.csv"), pol)?;
        let summary = format!(
            "total_fuel_g = {}\nmpg = {}\nsoc_final = {}\n",
            self.total_fuel_g, self.mpg, self.soc_final
        );
        std::fs::write(dir.join("summary.txt"), summary)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cycles::DriveCycle;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quiet_model() -> PowertrainModel {
        let mut m = PowertrainModel::default_model();
        m.vehicle.aux_power_w = 0.0;
        m
    }

    /// Small battery so desk-scale cycles move the SOC meaningfully.
    fn small_battery_model(aux_w: f64) -> PowertrainModel {
        let mut m = PowertrainModel::default_model();
        m.vehicle.aux_power_w = aux_w;
        m.battery.cells_parallel = 1;
        m.battery.cell_capacity = 1.5;
        m
    }

    fn zero_cycle(n: usize) -> DriveCycle {
        DriveCycle::new("zero", 1.0, vec![0.0; n]).unwrap()
    }

    fn tiny_cfg(actions: usize, soc_nodes: usize) -> DpConfig {
        DpConfig {
            soc_grid: uniform_grid(0.0, 1.0, soc_nodes),
            omega_grid: uniform_grid(0.0, 2300.0, actions),
            torque_grid: vec![300.0],
            terminal_soc: (0.10, 0.35),
            infeasible_cost: 1e9,
            snap_dynamics: true,
        }
    }

    #[test]
    fn zero_demand_in_band_is_free() {
        let cfg = DpConfig {
            terminal_soc: (0.15, 0.18),
            ..DpConfig::default()
        };
        let sol = dp_solve(&zero_cycle(20), &quiet_model(), &cfg, 0.16).unwrap();
        assert_eq!(sol.total_fuel_g, 0.0);
        assert!(sol.trace.iter().all(|r| r.omega_rpm == 0.0 || r.fuel_g == 0.0));
        assert!((sol.soc_final - 0.16).abs() < 1e-9);
        assert!(sol.mpg.is_nan(), "stationary trace has no fuel economy");
    }

    #[test]
    fn zero_demand_from_high_soc_is_infeasible_without_aux() {
        // Nothing can discharge the pack: no demand, no auxiliaries.
        let err = dp_solve(&zero_cycle(20), &quiet_model(), &DpConfig::default(), 0.85)
            .unwrap_err();
        assert!(matches!(err, DpError::Infeasible { .. }), "{err}");
    }

    #[test]
    fn aux_drain_feasibility_depends_on_duration() {
        // 20 kW auxiliary load on a ~0.87 kWh pack: long cycles can drain
        // from 85% into the window, short ones cannot.
        let model = small_battery_model(20e3);
        let cfg = DpConfig {
            soc_grid: uniform_grid(0.0, 1.0, 201),
            omega_grid: uniform_grid(0.0, 2300.0, 5),
            torque_grid: uniform_grid(0.0, 1500.0, 5),
            ..DpConfig::default()
        };
        let short = dp_solve(&zero_cycle(30), &model, &cfg, 0.85);
        assert!(matches!(short, Err(DpError::Infeasible { .. })));
        let long = dp_solve(&zero_cycle(160), &model, &cfg, 0.85).unwrap();
        assert!(long.soc_final >= 0.15 - 1e-9 && long.soc_final <= 0.18 + 1e-9);
    }

    #[test]
    fn one_step_brute_force_is_min_over_single_actions() {
        let model = small_battery_model(15e3);
        let mut cfg = tiny_cfg(4, 21);
        cfg.terminal_soc = (0.0 + 1e-6, 1.0 - 1e-6);
        let cycle = DriveCycle::new("two", 1.0, vec![0.0, 0.0]).unwrap();
        let sol = brute_force(&cycle, &model, &cfg, 0.5).unwrap();
        assert_eq!(sol.action_sequence.len(), 2);
        // Engine off is free and feasible, so the optimum burns nothing.
        assert_eq!(sol.total_fuel_g, 0.0);
    }

    #[test]
    fn brute_force_refuses_oversized_instances() {
        let model = quiet_model();
        let cfg = DpConfig {
            snap_dynamics: true,
            ..DpConfig::default()
        };
        let err = brute_force(&zero_cycle(10), &model, &cfg, 0.5).unwrap_err();
        assert!(matches!(err, DpError::TooLarge { .. }));
    }

    #[test]
    fn dp_matches_brute_force_on_snapped_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut feasible_seen = 0;
        for trial in 0..25 {
            let model = small_battery_model(rng.gen_range(5e3..30e3));
            let steps = rng.gen_range(4..=8);
            let actions = rng.gen_range(2..=5);
            let cfg = DpConfig {
                soc_grid: uniform_grid(0.0, 1.0, 21),
                omega_grid: uniform_grid(0.0, 2300.0, actions),
                torque_grid: vec![rng.gen_range(100.0..900.0)],
                terminal_soc: (0.10, 0.40),
                infeasible_cost: 1e9,
                snap_dynamics: true,
            };
            let mut v = vec![0.0f64];
            for _ in 1..steps {
                let dv = rng.gen_range(-0.3..0.3);
                v.push((v.last().unwrap() + dv).clamp(0.0, 5.0));
            }
            let cycle = DriveCycle::new("rand", 1.0, v).unwrap();
            let soc0 = rng.gen_range(0.25..0.55);
            let dp = dp_solve(&cycle, &model, &cfg, soc0);
            let bf = brute_force(&cycle, &model, &cfg, soc0);
            match (dp, bf) {
                (Ok(d), Ok(b)) => {
                    assert_eq!(
                        d.total_fuel_g, b.total_fuel_g,
                        "trial {trial}: fuel must match exactly"
                    );
                    assert_eq!(
                        d.action_sequence, b.action_sequence,
                        "trial {trial}: action sequences must match"
                    );
                    feasible_seen += 1;
                }
                (Err(DpError::Infeasible { .. }), Err(DpError::Infeasible { .. })) => {}
                (d, b) => panic!(
                    "trial {trial}: solvers disagree on feasibility: dp {:?} bf {:?}",
                    d.map(|s| s.total_fuel_g),
                    b.map(|s| s.total_fuel_g)
                ),
            }
        }
        assert!(feasible_seen >= 5, "only {feasible_seen} feasible trials");
    }

    #[test]
    fn value_non_increasing_in_time_to_go_at_zero_demand() {
        let model = small_battery_model(0.0);
        let cfg = DpConfig {
            soc_grid: uniform_grid(0.0, 1.0, 101),
            omega_grid: uniform_grid(0.0, 2300.0, 7),
            torque_grid: uniform_grid(0.0, 1500.0, 7),
            ..DpConfig::default()
        };
        // Solve from a low SOC so charging to the window is feasible.
        let sol = dp_solve(&zero_cycle(40), &model, &cfg, 0.05).unwrap();
        let threshold = 0.5e9;
        for t in 0..sol.value.len() - 1 {
            for s in 0..cfg.soc_grid.len() {
                let earlier = sol.value[t][s];
                let later = sol.value[t + 1][s];
                if later < threshold {
                    assert!(
                        earlier <= later + 1e-9,
                        "V_{t}({s}) = {earlier} > V_{}({s}) = {later}",
                        t + 1
                    );
                }
            }
        }
    }

    #[test]
    fn grid_refinement_does_not_raise_fuel_beyond_bound() {
        let model = small_battery_model(10e3);
        let cycle = crate::cycles::synth_cycle(crate::cycles::SynthKind::Trapezoid, 60.0, 6.0, 1)
            .unwrap();
        let coarse = DpConfig {
            soc_grid: uniform_grid(0.0, 1.0, 401),
            omega_grid: uniform_grid(0.0, 2300.0, 9),
            torque_grid: uniform_grid(0.0, 1500.0, 9),
            terminal_soc: (0.15, 0.30),
            ..DpConfig::default()
        };
        let fine = DpConfig {
            soc_grid: uniform_grid(0.0, 1.0, 801),
            ..coarse.clone()
        };
        let a = dp_solve(&cycle, &model, &coarse, 0.5).unwrap();
        let b = dp_solve(&cycle, &model, &fine, 0.5).unwrap();
        assert!(
            b.total_fuel_g <= a.total_fuel_g * 1.01 + 1e-9,
            "refined {} vs coarse {}",
            b.total_fuel_g,
            a.total_fuel_g
        );
    }

    #[test]
    fn mpg_hand_chain() {
        let model = quiet_model();
        let fe = mpg_of(1609.344, 3218.0, &model).unwrap();
        let expect = 1.0 / (3.218 / 0.85 / 3.78541);
        assert!((fe.mpg - expect).abs() < 1e-12);
        assert!((fe.mpg - 0.9999).abs() < 1e-3, "mpg {}", fe.mpg);
        // Doubling fuel halves it exactly.
        let half = mpg_of(1609.344, 6436.0, &model).unwrap();
        assert_eq!(half.mpg, fe.mpg / 2.0);
    }

    #[test]
    fn mpg_edge_cases() {
        let model = quiet_model();
        assert!(mpg_of(0.0, 10.0, &model).is_err());
        let fe = mpg_of(100.0, 0.0, &model).unwrap();
        assert!(fe.zero_fuel);
        assert!(fe.mpg.is_infinite());
    }
}

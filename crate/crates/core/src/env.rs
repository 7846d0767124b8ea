//! The sequential decision process wrapping the powertrain: state triple
//! [SOC, distance travelled, EM power demand], engine speed/torque actions,
//! fuel-and-SOC reward shaping, and episode randomization over initial SOC,
//! cycle count, and demand scaling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cycles::{cycle_distance, repeat_cycle, CycleError, DriveCycle};
use crate::powertrain::{
    clip_action, em_power_demand, genset_output, power_balance, PowertrainError, PowertrainModel,
};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("config error: {0}")]
    Config(String),
    #[error("step called on a finished episode")]
    EpisodeDone,
    #[error(transparent)]
    Powertrain(#[from] PowertrainError),
    #[error(transparent)]
    Cycle(#[from] CycleError),
}

/// The agent-visible state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvObservation {
    /// Battery state of charge, fraction.
    pub soc: f64,
    /// Cumulative distance travelled, m.
    pub distance_m: f64,
    /// Current-step EM electrical demand after demand scaling, W.
    pub p_em_w: f64,
}

/// Engine command: the genset is decoupled from the wheels, so speed and
/// torque are free control variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvAction {
    pub omega_rpm: f64,
    pub torque_nm: f64,
}

/// Reward shaping weights. SOC thresholds are percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub w_fuel: f64,
    pub w_soc_low: f64,
    pub w_soc_good: f64,
    pub w_soc_high: f64,
    pub soc_low_pct: f64,
    pub soc_good_hi_pct: f64,
    pub soc_high_pct: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_fuel: 5.0,
            w_soc_low: 15.0,
            w_soc_good: 2.5,
            w_soc_high: 10.0,
            soc_low_pct: 15.0,
            soc_good_hi_pct: 18.0,
            soc_high_pct: 85.0,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), EnvError> {
        if [self.w_fuel, self.w_soc_low, self.w_soc_good, self.w_soc_high]
            .iter()
            .any(|w| !(w > &0.0))
        {
            return Err(EnvError::Config("reward weights must be > 0".into()));
        }
        if !(self.soc_low_pct < self.soc_good_hi_pct && self.soc_good_hi_pct < self.soc_high_pct) {
            return Err(EnvError::Config(
                "SOC thresholds must satisfy low < good_hi < high".into(),
            ));
        }
        Ok(())
    }

    /// SOC shaping term, `soc` as a fraction. Zero in the wide dead band,
    /// a bonus just above the charge-sustaining floor, penalties outside.
    pub fn soc_shaping(&self, soc: f64) -> f64 {
        let pct = soc * 100.0;
        if pct < self.soc_low_pct {
            -self.w_soc_low * (self.soc_low_pct - pct)
        } else if pct <= self.soc_good_hi_pct {
            self.w_soc_good * (pct - self.soc_low_pct)
        } else if pct <= self.soc_high_pct {
            0.0
        } else {
            -self.w_soc_high * (pct - self.soc_high_pct)
        }
    }
}

/// Per-step reward: fuel penalty scaled by the squared initial SOC, plus the
/// SOC shaping term evaluated on the current SOC.
pub fn reward_fn(fuel_g: f64, soc: f64, soc_init: f64, w: &RewardWeights) -> f64 {
    -w.w_fuel * fuel_g * soc_init * soc_init + w.soc_shaping(soc)
}

/// Episode randomization controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// Initial SOC drawn uniformly from this set each episode.
    pub initial_soc_choices: Vec<f64>,
    /// When set, the base cycle is repeated a uniformly-drawn count in this
    /// inclusive range each episode.
    pub randomize_cycles: Option<(u32, u32)>,
    /// Uniform demand-scale range; `None` leaves demand unscaled.
    pub demand_scale_range: Option<(f64, f64)>,
    pub weights: RewardWeights,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            initial_soc_choices: vec![0.85, 0.75, 0.65, 0.55, 0.45],
            randomize_cycles: None,
            demand_scale_range: None,
            weights: RewardWeights::default(),
        }
    }
}

impl EpisodeConfig {
    pub fn fixed_soc(soc: f64) -> Self {
        Self {
            initial_soc_choices: vec![soc],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.initial_soc_choices.is_empty() {
            return Err(EnvError::Config("initial SOC choice list is empty".into()));
        }
        if self
            .initial_soc_choices
            .iter()
            .any(|s| !(*s > 0.0 && *s < 1.0))
        {
            return Err(EnvError::Config("initial SOC choices must lie in (0, 1)".into()));
        }
        if let Some((lo, hi)) = self.randomize_cycles {
            if lo == 0 || hi < lo {
                return Err(EnvError::Config(format!(
                    "cycle repetition range {lo}..={hi} invalid"
                )));
            }
        }
        if let Some((lo, hi)) = self.demand_scale_range {
            if !(lo > 0.0 && hi >= lo) {
                return Err(EnvError::Config(format!(
                    "demand scale range [{lo}, {hi}] invalid"
                )));
            }
        }
        self.weights.validate()
    }
}

/// Affine [-1, 1] normalization bounds for observations and actions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    pub soc: (f64, f64),
    pub distance: (f64, f64),
    pub p_em: (f64, f64),
    pub omega: (f64, f64),
    pub torque: (f64, f64),
}

impl NormBounds {
    /// Bounds for an episode whose total planned distance is known.
    pub fn for_distance(total_distance_m: f64) -> Self {
        Self {
            soc: (0.0, 1.0),
            distance: (0.0, total_distance_m.max(1.0)),
            // EM rating times the maximum demand scale.
            p_em: (-600e3, 600e3),
            omega: (0.0, 2300.0),
            torque: (0.0, 1500.0),
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        for (name, (lo, hi)) in [
            ("soc", self.soc),
            ("distance", self.distance),
            ("p_em", self.p_em),
            ("omega", self.omega),
            ("torque", self.torque),
        ] {
            if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(EnvError::Config(format!(
                    "degenerate normalization bounds for {name}: [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

fn norm(x: f64, (lo, hi): (f64, f64)) -> f64 {
    (2.0 * (x - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
}

fn denorm(u: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + (u.clamp(-1.0, 1.0) + 1.0) * 0.5 * (hi - lo)
}

/// Map an observation into [-1, 1]³.
pub fn normalize_obs(obs: &EnvObservation, b: &NormBounds) -> [f64; 3] {
    [
        norm(obs.soc, b.soc),
        norm(obs.distance_m, b.distance),
        norm(obs.p_em_w, b.p_em),
    ]
}

/// Inverse of the action normalization on the interior of the box.
pub fn denormalize_action(u: [f64; 2], b: &NormBounds) -> EnvAction {
    EnvAction {
        omega_rpm: denorm(u[0], b.omega),
        torque_nm: denorm(u[1], b.torque),
    }
}

pub fn normalize_action(a: &EnvAction, b: &NormBounds) -> [f64; 2] {
    [norm(a.omega_rpm, b.omega), norm(a.torque_nm, b.torque)]
}

/// Per-step trace record; row 0 of a trace file is the reset snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: i64,
    pub v_mps: f64,
    pub soc: f64,
    pub p_em_w: f64,
    pub omega_rpm: f64,
    pub torque_nm: f64,
    pub fuel_g: f64,
    pub p_batt_w: f64,
    pub reward: f64,
    pub done: bool,
}

/// Extra diagnostics carried alongside each step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    pub fuel_g: f64,
    pub p_batt_w: f64,
    pub i_batt_a: f64,
    /// Action actually executed after clipping.
    pub omega_rpm: f64,
    pub torque_nm: f64,
    pub em_infeasible: bool,
    pub batt_limit_violation: bool,
    /// Episode ended by the hard SOC floor/ceiling rather than trace end.
    pub soc_failure: bool,
}

/// Result of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub obs: EnvObservation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Episode summary in the trace sidecar format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub total_fuel_g: f64,
    pub distance_m: f64,
    pub mpg: f64,
    pub final_soc: f64,
    pub mean_step_reward: f64,
    pub steps: usize,
    pub soc_failure: bool,
}

impl EpisodeSummary {
    pub fn to_text(&self) -> String {
        format!(
            "total_fuel_g = {}\ndistance_m = {}\nmpg = {}\nfinal_soc = {}\nmean_step_reward = {}\nsteps = {}\nsoc_failure = {}\n",
            self.total_fuel_g,
            self.distance_m,
            self.mpg,
            self.final_soc,
            self.mean_step_reward,
            self.steps,
            self.soc_failure
        )
    }
}

/// The series-HEV episode simulator.
///
/// One instance runs one episode at a time; instances are independent, so
/// concurrent evaluation uses one environment per worker with its own seed.
pub struct ShevEnv {
    model: PowertrainModel,
    base_cycle: DriveCycle,
    cfg: EpisodeConfig,
    // Per-episode state.
    cycle: DriveCycle,
    demand: Vec<f64>,
    em_feasible: Vec<bool>,
    bounds: NormBounds,
    soc: f64,
    soc_init: f64,
    demand_scale: f64,
    step_idx: usize,
    distance_m: f64,
    total_fuel_g: f64,
    reward_sum: f64,
    done: bool,
    started: bool,
}

impl ShevEnv {
    pub fn new(
        model: PowertrainModel,
        base_cycle: DriveCycle,
        cfg: EpisodeConfig,
    ) -> Result<Self, EnvError> {
        model.validate()?;
        cfg.validate()?;
        let cycle = base_cycle.clone();
        let mut env = Self {
            model,
            base_cycle,
            cfg,
            cycle,
            demand: Vec::new(),
            em_feasible: Vec::new(),
            bounds: NormBounds::for_distance(1.0),
            soc: 0.0,
            soc_init: 0.0,
            demand_scale: 1.0,
            step_idx: 0,
            distance_m: 0.0,
            total_fuel_g: 0.0,
            reward_sum: 0.0,
            done: true,
            started: false,
        };
        env.prepare_cycle()?;
        Ok(env)
    }

    fn prepare_cycle(&mut self) -> Result<(), EnvError> {
        self.demand.clear();
        self.em_feasible.clear();
        for i in 0..self.cycle.len() {
            let d = em_power_demand(
                self.cycle.velocity()[i],
                self.cycle.accel(i),
                self.cycle.grade()[i],
                &self.model,
            );
            self.demand.push(d.p_elec_w);
            self.em_feasible.push(d.feasible);
        }
        self.bounds = NormBounds::for_distance(cycle_distance(&self.cycle));
        Ok(())
    }

    pub fn model(&self) -> &PowertrainModel {
        &self.model
    }

    pub fn bounds(&self) -> &NormBounds {
        &self.bounds
    }

    pub fn cycle(&self) -> &DriveCycle {
        &self.cycle
    }

    pub fn episode_len(&self) -> usize {
        self.cycle.len()
    }

    pub fn weights(&self) -> &RewardWeights {
        &self.cfg.weights
    }

    pub fn soc_init(&self) -> f64 {
        self.soc_init
    }

    pub fn demand_scale(&self) -> f64 {
        self.demand_scale
    }

    /// Scaled EM electrical demand at step `i`.
    pub fn scaled_demand(&self, i: usize) -> f64 {
        self.demand[i] * self.demand_scale
    }

    /// True when every step of the prepared cycle is within EM limits.
    pub fn cycle_em_feasible(&self) -> bool {
        self.em_feasible.iter().all(|&f| f)
    }

    /// Start a new episode. Draw order: initial SOC, repetition count,
    /// demand scale — all from `rng`, so a seeded generator reproduces the
    /// episode exactly.
    pub fn reset(&mut self, rng: &mut ChaCha8Rng) -> Result<EnvObservation, EnvError> {
        let choices = &self.cfg.initial_soc_choices;
        self.soc_init = choices[rng.gen_range(0..choices.len())];
        if let Some((lo, hi)) = self.cfg.randomize_cycles {
            let n = rng.gen_range(lo..=hi);
            self.cycle = repeat_cycle(&self.base_cycle, n)?;
            self.prepare_cycle()?;
        }
        self.demand_scale = match self.cfg.demand_scale_range {
            Some((lo, hi)) if hi > lo => rng.gen_range(lo..hi),
            Some((lo, _)) => lo,
            None => 1.0,
        };
        self.soc = self.soc_init;
        self.step_idx = 0;
        self.distance_m = 0.0;
        self.total_fuel_g = 0.0;
        self.reward_sum = 0.0;
        self.done = false;
        self.started = true;
        Ok(self.observation())
    }

    /// Deterministic reset at a fixed SOC with no randomization draws.
    pub fn reset_with_soc(&mut self, soc_init: f64) -> Result<EnvObservation, EnvError> {
        if !(soc_init > 0.0 && soc_init < 1.0) {
            return Err(EnvError::Config(format!("initial soc {soc_init} outside (0, 1)")));
        }
        self.soc_init = soc_init;
        self.demand_scale = 1.0;
        self.soc = soc_init;
        self.step_idx = 0;
        self.distance_m = 0.0;
        self.total_fuel_g = 0.0;
        self.reward_sum = 0.0;
        self.done = false;
        self.started = true;
        Ok(self.observation())
    }

    pub fn observation(&self) -> EnvObservation {
        let p_em = if self.step_idx < self.cycle.len() {
            self.scaled_demand(self.step_idx)
        } else {
            0.0
        };
        EnvObservation {
            soc: self.soc,
            distance_m: self.distance_m,
            p_em_w: p_em,
        }
    }

    /// Advance one step. The raw action is clipped into the feasible genset
    /// region, the bus balance closed by the battery, and the reward
    /// evaluated on this step's fuel and the post-step SOC.
    pub fn step(&mut self, action: EnvAction) -> Result<StepOutcome, EnvError> {
        if self.done || !self.started {
            return Err(EnvError::EpisodeDone);
        }
        let i = self.step_idx;
        let dt = self.cycle.dt();
        let (omega, torque) = clip_action(action.omega_rpm, action.torque_nm, &self.model);
        let genset = genset_output(omega, torque, &self.model)?;
        let p_em = self.scaled_demand(i);
        let p_batt = power_balance(p_em, self.model.vehicle.aux_power_w, genset.p_elec_w);
        let batt = self.model.battery.step(self.soc, p_batt, dt)?;
        let fuel_g = genset.fuel_g_per_s * dt;

        let mut soc_failure = false;
        let soc_next = if batt.soc_next <= 0.0 || batt.soc_next >= 1.0 {
            soc_failure = true;
            batt.soc_next.clamp(0.0, 1.0)
        } else {
            batt.soc_next
        };

        self.soc = soc_next;
        self.distance_m += self.cycle.velocity()[i] * dt;
        self.total_fuel_g += fuel_g;
        self.step_idx += 1;

        let done = self.step_idx >= self.cycle.len() || soc_failure;
        self.done = done;

        let reward = reward_fn(fuel_g, self.soc, self.soc_init, &self.cfg.weights);
        self.reward_sum += reward;

        Ok(StepOutcome {
            obs: self.observation(),
            reward,
            done,
            info: StepInfo {
                fuel_g,
                p_batt_w: p_batt,
                i_batt_a: batt.current,
                omega_rpm: omega,
                torque_nm: torque,
                em_infeasible: !self.em_feasible[i],
                batt_limit_violation: batt.p_limit_violation,
                soc_failure,
            },
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step_idx
    }

    pub fn total_fuel_g(&self) -> f64 {
        self.total_fuel_g
    }

    pub fn distance_m(&self) -> f64 {
        self.distance_m
    }

    pub fn soc(&self) -> f64 {
        self.soc
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn mean_step_reward(&self) -> f64 {
        if self.step_idx == 0 {
            0.0
        } else {
            self.reward_sum / self.step_idx as f64
        }
    }
}

/// Render trace records in the shared comma-separated format.
pub fn trace_to_csv(records: &[StepRecord]) -> String {
    let mut out = String::from("step,v,soc,p_em,omega,torque,fuel_g,p_batt,reward,done\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.step,
            r.v_mps,
            r.soc,
            r.p_em_w,
            r.omega_rpm,
            r.torque_nm,
            r.fuel_g,
            r.p_batt_w,
            r.reward,
            r.done as u8
        ));
    }
    out
}

/// Parse a trace produced by [`trace_to_csv`].
pub fn trace_from_csv(text: &str) -> Result<Vec<StepRecord>, EnvError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("step") {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 10 {
            return Err(EnvError::Config(format!(
                "trace line {}: expected 10 columns, got {}",
                idx + 1,
                cols.len()
            )));
        }
        let f = |k: usize| -> Result<f64, EnvError> {
            cols[k]
                .parse()
                .map_err(|e| EnvError::Config(format!("trace line {}: {e}", idx + 1)))
        };
        out.push(StepRecord {
            step: cols[0]
                .parse()
                .map_err(|e| EnvError::Config(format!("trace line {}: {e}", idx + 1)))?,
            v_mps: f(1)?,
            soc: f(2)?,
            p_em_w: f(3)?,
            omega_rpm: f(4)?,
            torque_nm: f(5)?,
            fuel_g: f(6)?,
            p_batt_w: f(7)?,
            reward: f(8)?,
            done: cols[9].trim() == "1" || cols[9].trim() == "true",
        });
    }
    Ok(out)
}

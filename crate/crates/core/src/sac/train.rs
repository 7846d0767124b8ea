//! The interleaved rollout/update training loop and greedy evaluation.

use std::collections::VecDeque;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{
    denormalize_action, normalize_obs, EpisodeSummary, ShevEnv, StepRecord,
};

use super::buffer::TrajectoryBuffer;
use super::losses::{update, Optimizers, UpdateStats};
use super::{select_action, ActorState, Agent, EpisodeHistory, SacConfig, SacError};

/// One training-log line. `wall_s` is measured wall time and is excluded
/// from determinism comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub episode: u64,
    pub steps: usize,
    /// Episode return normalized by its step count.
    pub mean_reward: f64,
    pub critic1_loss: f64,
    pub critic2_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub wall_s: f64,
}

impl TrainLogRow {
    pub const CSV_HEADER: &'static str =
        "episode,steps,mean_reward,critic1_loss,critic2_loss,actor_loss,alpha,wall_s";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:.3}",
            self.episode,
            self.steps,
            self.mean_reward,
            self.critic1_loss,
            self.critic2_loss,
            self.actor_loss,
            self.alpha,
            self.wall_s
        )
    }

    /// The row with wall time blanked, for reproducibility comparisons.
    pub fn deterministic_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.episode,
            self.steps,
            self.mean_reward,
            self.critic1_loss,
            self.critic2_loss,
            self.actor_loss,
            self.alpha
        )
    }
}

/// Everything a training run produces.
#[derive(Debug)]
pub struct TrainLog {
    pub rows: Vec<TrainLogRow>,
    /// Snapshot of the agent at its best 10-episode moving average.
    pub best_agent: Option<Agent>,
    pub best_moving_avg: f64,
    /// Final replay buffer (inspectable for reproducibility checks).
    pub buffer: TrajectoryBuffer,
}

/// Train `agent` in `env` for `episodes` episodes.
///
/// All randomness (environment draws, exploration, batch sampling) flows
/// through `rng`, so a seeded generator reproduces the run exactly. Setting
/// `updates_per_round` to zero turns the loop into pure rollout collection.
pub fn train(
    env: &mut ShevEnv,
    agent: &mut Agent,
    cfg: &SacConfig,
    episodes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TrainLog, SacError> {
    cfg.validate()?;
    let mut opts = Optimizers::new(agent, cfg);
    let mut buffer = TrajectoryBuffer::new(cfg.buffer_capacity);
    let mut rows = Vec::with_capacity(episodes);
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(10);
    let mut best_ma = f64::NEG_INFINITY;
    let mut best_agent = None;
    let mut global_step: usize = 0;
    let mut last_stats: Option<UpdateStats> = None;

    for _ in 0..episodes {
        let wall0 = Instant::now();
        let obs0 = env.reset(rng)?;
        let bounds = *env.bounds();
        let target_return = cfg.dt_eval_target_return.unwrap_or(agent.best_return);
        let mut hist = EpisodeHistory::start(normalize_obs(&obs0, &bounds), target_return);
        let mut actor_state = ActorState::default();
        let mut dones = Vec::new();

        loop {
            let a_norm = if global_step < cfg.warmup_steps {
                [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
            } else {
                select_action(agent, cfg, &hist, &mut actor_state, false, rng)?
            };
            let out = env.step(denormalize_action(a_norm, &bounds))?;
            hist.push_step(
                a_norm,
                out.reward * cfg.reward_scale,
                normalize_obs(&out.obs, &bounds),
            );
            dones.push(out.done);
            global_step += 1;

            if cfg.updates_per_round > 0
                && global_step >= cfg.warmup_steps
                && global_step % cfg.train_freq == 0
            {
                for _ in 0..cfg.updates_per_round {
                    if let Some(stats) = update(agent, &buffer, cfg, &mut opts, rng)? {
                        last_stats = Some(stats);
                    }
                }
            }
            if out.done {
                break;
            }
        }

        let steps = hist.rewards.len();
        let scaled_return: f64 = hist.rewards.iter().sum();
        buffer.push_episode(
            hist.states.clone(),
            hist.actions.clone(),
            hist.rewards.clone(),
            dones,
        )?;
        agent.best_return = agent.best_return.max(scaled_return);
        agent.episodes_done += 1;

        // Logged rewards are the raw environment rewards.
        let mean_reward = env.mean_step_reward();
        if recent.len() == 10 {
            recent.pop_front();
        }
        recent.push_back(mean_reward);
        let ma = recent.iter().sum::<f64>() / recent.len() as f64;
        if ma > best_ma {
            best_ma = ma;
            best_agent = Some(agent.clone());
        }

        let stats = last_stats.unwrap_or(UpdateStats {
            critic1_loss: 0.0,
            critic2_loss: 0.0,
            actor_loss: 0.0,
            alpha_loss: 0.0,
            alpha: agent.alpha(),
        });
        rows.push(TrainLogRow {
            episode: agent.episodes_done,
            steps,
            mean_reward,
            critic1_loss: stats.critic1_loss,
            critic2_loss: stats.critic2_loss,
            actor_loss: stats.actor_loss,
            alpha: stats.alpha,
            wall_s: wall0.elapsed().as_secs_f64(),
        });
    }

    Ok(TrainLog {
        rows,
        best_agent,
        best_moving_avg: best_ma,
        buffer,
    })
}

/// Deterministic (mean-action) rollout from a fixed initial SOC.
///
/// Produces the trace rows — row 0 is the reset snapshot — plus the episode
/// summary with an independently useful MPG figure.
pub fn evaluate(
    env: &mut ShevEnv,
    agent: &Agent,
    cfg: &SacConfig,
    initial_soc: f64,
) -> Result<(Vec<StepRecord>, EpisodeSummary), SacError> {
    let obs0 = env.reset_with_soc(initial_soc)?;
    let bounds = *env.bounds();
    let target_return = cfg.dt_eval_target_return.unwrap_or(agent.best_return);
    let mut hist = EpisodeHistory::start(normalize_obs(&obs0, &bounds), target_return);
    let mut actor_state = ActorState::default();
    // Deterministic head: the rng is never consulted.
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);

    let mut records = Vec::with_capacity(env.episode_len() + 1);
    records.push(StepRecord {
        step: 0,
        v_mps: env.cycle().velocity()[0],
        soc: obs0.soc,
        p_em_w: obs0.p_em_w,
        omega_rpm: 0.0,
        torque_nm: 0.0,
        fuel_g: 0.0,
        p_batt_w: 0.0,
        reward: 0.0,
        done: false,
    });

    let mut step_idx = 0i64;
    let soc_failure = loop {
        let a_norm = select_action(agent, cfg, &hist, &mut actor_state, true, &mut rng)?;
        let v = env.cycle().velocity()[step_idx as usize];
        let out = env.step(denormalize_action(a_norm, &bounds))?;
        hist.push_step(
            a_norm,
            out.reward * cfg.reward_scale,
            normalize_obs(&out.obs, &bounds),
        );
        step_idx += 1;
        records.push(StepRecord {
            step: step_idx,
            v_mps: v,
            soc: out.obs.soc,
            p_em_w: out.obs.p_em_w,
            omega_rpm: out.info.omega_rpm,
            torque_nm: out.info.torque_nm,
            fuel_g: out.info.fuel_g,
            p_batt_w: out.info.p_batt_w,
            reward: out.reward,
            done: out.done,
        });
        if out.done {
            break out.info.soc_failure;
        }
    };

    let summary = EpisodeSummary {
        total_fuel_g: env.total_fuel_g(),
        distance_m: env.distance_m(),
        mpg: crate::dp::mpg_of(env.distance_m(), env.total_fuel_g(), env.model())
            .map(|m| m.mpg)
            .unwrap_or(f64::NAN),
        final_soc: env.soc(),
        mean_step_reward: env.mean_step_reward(),
        steps: env.steps_taken(),
        soc_failure,
    };
    Ok((records, summary))
}

/// Stochastic rollout with the sampling head, for spread studies.
pub fn rollout_stochastic(
    env: &mut ShevEnv,
    agent: &Agent,
    cfg: &SacConfig,
    initial_soc: f64,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeSummary, SacError> {
    let obs0 = env.reset_with_soc(initial_soc)?;
    let bounds = *env.bounds();
    let target_return = cfg.dt_eval_target_return.unwrap_or(agent.best_return);
    let mut hist = EpisodeHistory::start(normalize_obs(&obs0, &bounds), target_return);
    let mut actor_state = ActorState::default();
    let soc_failure = loop {
        let a_norm = select_action(agent, cfg, &hist, &mut actor_state, false, rng)?;
        let out = env.step(denormalize_action(a_norm, &bounds))?;
        hist.push_step(
            a_norm,
            out.reward * cfg.reward_scale,
            normalize_obs(&out.obs, &bounds),
        );
        if out.done {
            break out.info.soc_failure;
        }
    };
    Ok(EpisodeSummary {
        total_fuel_g: env.total_fuel_g(),
        distance_m: env.distance_m(),
        mpg: crate::dp::mpg_of(env.distance_m(), env.total_fuel_g(), env.model())
            .map(|m| m.mpg)
            .unwrap_or(f64::NAN),
        final_soc: env.soc(),
        mean_step_reward: env.mean_step_reward(),
        steps: env.steps_taken(),
        soc_failure,
    })
}

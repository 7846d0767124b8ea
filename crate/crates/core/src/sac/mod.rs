//! Sequence-aware soft actor-critic: replay storage, action selection with
//! inference padding, per-family critic losses, actor and temperature
//! updates, and soft target updates.

pub mod adam;
pub mod buffer;
pub mod losses;
pub mod train;

pub use buffer::{TrajectoryBuffer, Transition, Window};
pub use losses::UpdateStats;
pub use train::{train, TrainLog, TrainLogRow};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::EnvError;
use crate::nets::dt::{self, Readout};
use crate::nets::gaussian::{gaussian_head, soft_clamp_log_std, PolicyNodes};
use crate::nets::graph::{Graph, Var};
use crate::nets::params::{ParamDecl, ParamKind, ParamSet};
use crate::nets::tensor::Tensor;
use crate::nets::{ffn, gru, Bound, Family, NetConfig, NetsError};

use buffer::{ACT_DIM, OBS_DIM};

#[derive(Debug, Error)]
pub enum SacError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {msg}")]
    Numeric { msg: String, dump: String },
    #[error(transparent)]
    Nets(#[from] NetsError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Actor/critic family pairing. The return-predicting DT critic exists for
/// the architecture study; the preferred DT agent pairs with a GRU critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pairing {
    FfnFfn,
    GruGru,
    DtGru,
    DtDt,
}

impl Pairing {
    pub fn actor_family(self) -> Family {
        match self {
            Pairing::FfnFfn => Family::Ffn,
            Pairing::GruGru => Family::Gru,
            Pairing::DtGru | Pairing::DtDt => Family::Dt,
        }
    }

    pub fn critic_family(self) -> Family {
        match self {
            Pairing::FfnFfn => Family::Ffn,
            Pairing::GruGru | Pairing::DtGru => Family::Gru,
            Pairing::DtDt => Family::Dt,
        }
    }

    /// True for variants trained on sampled windows rather than transitions.
    pub fn uses_sequences(self) -> bool {
        self != Pairing::FfnFfn
    }
}

impl std::str::FromStr for Pairing {
    type Err = SacError;
    fn from_str(s: &str) -> Result<Self, SacError> {
        match s.to_ascii_lowercase().as_str() {
            "ffn" | "ffn-ffn" => Ok(Pairing::FfnFfn),
            "gru" | "gru-gru" => Ok(Pairing::GruGru),
            "dt" | "dt-gru" => Ok(Pairing::DtGru),
            "dt-dt" => Ok(Pairing::DtDt),
            other => Err(SacError::Config(format!("unknown agent variant `{other}`"))),
        }
    }
}

impl std::fmt::Display for Pairing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Pairing::FfnFfn => write!(f, "ffn-ffn"),
            Pairing::GruGru => write!(f, "gru-gru"),
            Pairing::DtGru => write!(f, "dt-gru"),
            Pairing::DtDt => write!(f, "dt-dt"),
        }
    }
}

/// How the FFN variant draws its training batches (architecture ablation 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleMode {
    Random,
    Sequential,
}

/// Training hyperparameters. The training frequency and gradient clip
/// defaults depend on the actor family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacConfig {
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch: usize,
    pub gamma: f64,
    pub tau: f64,
    /// Auto-tuned temperature target entropy (−action_dim).
    pub target_entropy: f64,
    pub buffer_capacity: usize,
    /// Global-norm gradient clip (the recurrent variant uses 0.25).
    pub grad_clip: Option<f64>,
    /// Environment steps between update rounds.
    pub train_freq: usize,
    pub updates_per_round: usize,
    /// Uniform-random action steps before learning starts.
    pub warmup_steps: usize,
    pub sample_mode: SampleMode,
    /// Keep the GRU actor hidden state across steps within an episode
    /// instead of re-encoding the trailing window each step.
    pub persistent_hidden: bool,
    /// Multiplier applied to rewards as they enter training (replay storage,
    /// targets, return-to-go conditioning). Logs and traces stay raw.
    pub reward_scale: f64,
    /// Divisor applied to return-to-go tokens fed to the DT.
    pub return_scale: f64,
    /// Evaluation-time initial return-to-go for DT actors; `None` uses the
    /// best training return stored in the checkpoint.
    pub dt_eval_target_return: Option<f64>,
}

impl SacConfig {
    pub fn for_pairing(pairing: Pairing) -> Self {
        let (train_freq, grad_clip) = match pairing.actor_family() {
            Family::Ffn => (5, None),
            Family::Gru => (25, Some(0.25)),
            Family::Dt => (50, None),
        };
        Self {
            lr: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch: 64,
            gamma: 0.99,
            tau: 0.005,
            target_entropy: -(ACT_DIM as f64),
            buffer_capacity: 1_000_000,
            grad_clip,
            train_freq,
            updates_per_round: 1,
            warmup_steps: 1000,
            sample_mode: SampleMode::Random,
            persistent_hidden: false,
            reward_scale: 1.0,
            return_scale: 1000.0,
            dt_eval_target_return: None,
        }
    }

    pub fn validate(&self) -> Result<(), SacError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(SacError::Config(format!("gamma {} outside (0, 1)", self.gamma)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(SacError::Config(format!("tau {} outside (0, 1]", self.tau)));
        }
        if self.batch == 0 || self.train_freq == 0 {
            return Err(SacError::Config("batch and train_freq must be >= 1".into()));
        }
        if !(self.return_scale > 0.0) || !(self.reward_scale > 0.0) {
            return Err(SacError::Config("reward_scale and return_scale must be > 0".into()));
        }
        Ok(())
    }
}

/// Complete agent state: actor, twin critics with targets, temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub pairing: Pairing,
    pub context_k: usize,
    pub actor_cfg: NetConfig,
    pub critic_cfg: NetConfig,
    pub actor: ParamSet,
    pub critic1: ParamSet,
    pub critic2: ParamSet,
    pub target1: ParamSet,
    pub target2: ParamSet,
    pub log_alpha: f64,
    /// Best episode return seen in training; default DT conditioning target.
    pub best_return: f64,
    pub episodes_done: u64,
}

pub fn actor_decls(pairing: Pairing, cfg: &NetConfig) -> Vec<ParamDecl> {
    let mut decls = match pairing.actor_family() {
        Family::Ffn => ffn::trunk_decls(cfg),
        Family::Gru => gru::decls(cfg),
        Family::Dt => dt::decls(cfg),
    };
    // Mean / log-std heads on top of the family trunk output.
    let feat = match pairing.actor_family() {
        Family::Ffn | Family::Gru => cfg.hidden,
        Family::Dt => cfg.output_dim,
    };
    decls.push(ParamDecl::new("mean.w", ACT_DIM, feat, ParamKind::Linear));
    decls.push(ParamDecl::new("mean.b", 1, ACT_DIM, ParamKind::Bias));
    decls.push(ParamDecl::new("logstd.w", ACT_DIM, feat, ParamKind::Linear));
    decls.push(ParamDecl::new("logstd.b", 1, ACT_DIM, ParamKind::Bias));
    decls
}

pub fn critic_decls(pairing: Pairing, cfg: &NetConfig) -> Vec<ParamDecl> {
    match pairing.critic_family() {
        Family::Ffn => ffn::decls(cfg),
        Family::Gru => {
            let mut d = gru::decls(cfg);
            d.push(ParamDecl::new("q.w", 1, cfg.hidden, ParamKind::Linear));
            d.push(ParamDecl::new("q.b", 1, 1, ParamKind::Bias));
            d
        }
        Family::Dt => dt::decls(cfg),
    }
}

impl Agent {
    pub fn new(pairing: Pairing, context_k: usize, seed: u64) -> Result<Self, SacError> {
        if pairing.uses_sequences() && context_k == 0 {
            return Err(SacError::Config("context_k must be >= 1".into()));
        }
        let k = if pairing == Pairing::FfnFfn { 1 } else { context_k };
        let actor_cfg = match pairing.actor_family() {
            Family::Ffn => NetConfig::ffn(OBS_DIM, ACT_DIM),
            Family::Gru => NetConfig::gru(OBS_DIM, ACT_DIM, k),
            Family::Dt => NetConfig::dt(OBS_DIM, ACT_DIM, ACT_DIM, k),
        };
        let critic_cfg = match pairing.critic_family() {
            Family::Ffn => NetConfig::ffn(OBS_DIM + ACT_DIM, 1),
            Family::Gru => NetConfig::gru(OBS_DIM + ACT_DIM, 1, k),
            Family::Dt => NetConfig::dt(OBS_DIM, ACT_DIM, 1, k),
        };
        actor_cfg.validate()?;
        critic_cfg.validate()?;
        let actor = ParamSet::init(&actor_decls(pairing, &actor_cfg), seed);
        let critic1 = ParamSet::init(&critic_decls(pairing, &critic_cfg), seed.wrapping_add(1));
        let critic2 = ParamSet::init(&critic_decls(pairing, &critic_cfg), seed.wrapping_add(2));
        Ok(Self {
            pairing,
            context_k: k,
            actor_cfg,
            critic_cfg,
            target1: critic1.clone(),
            target2: critic2.clone(),
            actor,
            critic1,
            critic2,
            log_alpha: 0.0,
            best_return: 0.0,
            episodes_done: 0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }
}

/// Soft target update `target ← τ·online + (1 − τ)·target`.
pub fn soft_update(target: &mut ParamSet, online: &ParamSet, tau: f64) -> Result<(), SacError> {
    target.soft_update_from(online, tau)?;
    Ok(())
}

/// Seeded standard-normal draw (Box–Muller).
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

pub fn normal_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| standard_normal(rng)).collect(),
    )
}

/// Episode-so-far records in normalized units, the input to action selection.
#[derive(Debug, Clone, Default)]
pub struct EpisodeHistory {
    /// Normalized observations `s_0..s_t` (current state last).
    pub states: Vec<[f64; OBS_DIM]>,
    /// Normalized actions `a_0..a_{t−1}`.
    pub actions: Vec<[f64; ACT_DIM]>,
    pub rewards: Vec<f64>,
    /// Running return-to-go per step (`R_0` is the conditioning target).
    pub rtg: Vec<f64>,
}

impl EpisodeHistory {
    pub fn start(obs: [f64; OBS_DIM], target_return: f64) -> Self {
        Self {
            states: vec![obs],
            actions: Vec::new(),
            rewards: Vec::new(),
            rtg: vec![target_return],
        }
    }

    /// Record a finished step: `R_{t+1} = R_t − r_t`.
    pub fn push_step(&mut self, action: [f64; ACT_DIM], reward: f64, next_obs: [f64; OBS_DIM]) {
        let r_next = self.rtg.last().unwrap() - reward;
        self.actions.push(action);
        self.rewards.push(reward);
        self.rtg.push(r_next);
        self.states.push(next_obs);
    }

    pub fn t(&self) -> usize {
        self.actions.len()
    }
}

/// Mutable per-episode actor state (persistent-hidden GRU mode).
#[derive(Default)]
pub struct ActorState {
    gru_hidden: Option<Vec<Tensor>>,
}

impl ActorState {
    pub fn reset(&mut self) {
        self.gru_hidden = None;
    }

    pub fn has_hidden(&self) -> bool {
        self.gru_hidden.is_some()
    }
}

/// FFN actor heads on a feature batch.
pub(crate) fn ffn_actor_heads(
    g: &mut Graph,
    p: &Bound,
    cfg: &NetConfig,
    x: Var,
) -> Result<(Var, Var), NetsError> {
    let h = ffn::trunk(g, p, cfg, x)?;
    let mean = {
        let w = p.var("mean.w")?;
        let b = p.var("mean.b")?;
        g.linear(h, w, b)
    };
    let raw_ls = {
        let w = p.var("logstd.w")?;
        let b = p.var("logstd.b")?;
        g.linear(h, w, b)
    };
    Ok((mean, raw_ls))
}

/// GRU actor heads at every step of a state sequence.
pub(crate) fn gru_actor_heads_seq(
    g: &mut Graph,
    p: &Bound,
    cfg: &NetConfig,
    x_seq: &[Var],
    h0: Option<&[Var]>,
) -> Result<(Vec<(Var, Var)>, Vec<Var>), NetsError> {
    let out = gru::forward(g, p, cfg, x_seq, h0)?;
    let mut heads = Vec::with_capacity(out.y_seq.len());
    for &y in &out.y_seq {
        let mean = {
            let w = p.var("mean.w")?;
            let b = p.var("mean.b")?;
            g.linear(y, w, b)
        };
        let raw_ls = {
            let w = p.var("logstd.w")?;
            let b = p.var("logstd.b")?;
            g.linear(y, w, b)
        };
        heads.push((mean, raw_ls));
    }
    Ok((heads, out.h_final))
}

/// DT actor heads per step: the transformer predicts a pre-action vector at
/// each state token; two linear maps turn it into mean and log-std.
pub(crate) fn dt_actor_heads(
    g: &mut Graph,
    p: &Bound,
    cfg: &NetConfig,
    rtg: Var,
    states: Var,
    actions: Var,
    timesteps: &[usize],
) -> Result<(Var, Var), NetsError> {
    let pred = dt::forward_vars(g, p, cfg, rtg, states, actions, timesteps, Readout::States)?;
    let mean = {
        let w = p.var("mean.w")?;
        let b = p.var("mean.b")?;
        g.linear(pred, w, b)
    };
    let raw_ls = {
        let w = p.var("logstd.w")?;
        let b = p.var("logstd.b")?;
        g.linear(pred, w, b)
    };
    Ok((mean, raw_ls))
}

/// Sample the policy at given head outputs.
pub(crate) fn sample_policy(g: &mut Graph, mean: Var, raw_ls: Var, noise: &Tensor) -> PolicyNodes {
    let log_std = soft_clamp_log_std(g, raw_ls);
    gaussian_head(g, mean, log_std, noise)
}

/// GRU critic Q value at every step of a (state ‖ action) sequence.
pub(crate) fn gru_critic_seq(
    g: &mut Graph,
    p: &Bound,
    cfg: &NetConfig,
    xs: &[Var],
) -> Result<Vec<Var>, NetsError> {
    let out = gru::forward(g, p, cfg, xs, None)?;
    let w = p.var("q.w")?;
    let b = p.var("q.b")?;
    out.y_seq.iter().map(|&y| Ok(g.linear(y, w, b))).collect()
}

fn tensor_from_rows<const N: usize>(rows: &[[f64; N]]) -> Tensor {
    Tensor::from_vec(rows.len(), N, rows.iter().flatten().copied().collect())
}

/// Clamp a (possibly negative) logical index into a history of `len` items.
fn padded_index(t: i64, len: usize) -> usize {
    t.max(0).min(len as i64 - 1) as usize
}

/// Select a normalized action from the episode history.
///
/// FFN acts on the current state alone; GRU re-encodes the trailing `k`
/// states (or carries its hidden state in persistent mode); DT assembles the
/// trailing (return, state, action) trajectory with the current action
/// zero-filled. Histories shorter than `k` are left-padded by repeating the
/// initial record.
pub fn select_action(
    agent: &Agent,
    cfg: &SacConfig,
    history: &EpisodeHistory,
    state: &mut ActorState,
    deterministic: bool,
    rng: &mut ChaCha8Rng,
) -> Result<[f64; ACT_DIM], SacError> {
    if history.states.is_empty() {
        return Err(SacError::Config("action requested on an empty history".into()));
    }
    let k = agent.context_k;
    let t = history.t() as i64;
    let mut g = Graph::new();
    let p = Bound::frozen(&mut g, &agent.actor);
    let noise = if deterministic {
        Tensor::zeros(1, ACT_DIM)
    } else {
        normal_tensor(1, ACT_DIM, rng)
    };

    let (mean, raw_ls) = match agent.pairing.actor_family() {
        Family::Ffn => {
            let x = g.constant(tensor_from_rows(&[history.states[t as usize]]));
            ffn_actor_heads(&mut g, &p, &agent.actor_cfg, x)?
        }
        Family::Gru => {
            if cfg.persistent_hidden {
                let h0: Option<Vec<Var>> = state
                    .gru_hidden
                    .as_ref()
                    .map(|hs| hs.iter().map(|h| g.constant(h.clone())).collect());
                let x = g.constant(tensor_from_rows(&[history.states[t as usize]]));
                let (heads, h_fin) =
                    gru_actor_heads_seq(&mut g, &p, &agent.actor_cfg, &[x], h0.as_deref())?;
                state.gru_hidden = Some(h_fin.iter().map(|&h| g.value(h).clone()).collect());
                heads[0]
            } else {
                let xs: Vec<Var> = (t - k as i64 + 1..=t)
                    .map(|j| {
                        let idx = padded_index(j, history.states.len());
                        g.constant(tensor_from_rows(&[history.states[idx]]))
                    })
                    .collect();
                let (heads, _) = gru_actor_heads_seq(&mut g, &p, &agent.actor_cfg, &xs, None)?;
                *heads.last().unwrap()
            }
        }
        Family::Dt => {
            let mut rtg = Vec::with_capacity(k);
            let mut states = Vec::with_capacity(k);
            let mut actions = Vec::with_capacity(k);
            let mut timesteps = Vec::with_capacity(k);
            for j in t - k as i64 + 1..=t {
                let idx = padded_index(j, history.states.len());
                rtg.push(history.rtg[padded_index(j, history.rtg.len())] / cfg.return_scale);
                states.push(history.states[idx]);
                // The current step's action is unknown; padded steps repeat
                // the initial (empty-action) record.
                if j >= 0 && (j as usize) < history.actions.len() {
                    actions.push(history.actions[j as usize]);
                } else {
                    actions.push([0.0; ACT_DIM]);
                }
                timesteps.push(j.max(0) as usize);
            }
            let rtg_v = g.constant(Tensor::from_vec(k, 1, rtg));
            let st_v = g.constant(tensor_from_rows(&states));
            let ac_v = g.constant(tensor_from_rows(&actions));
            let (mean_all, ls_all) =
                dt_actor_heads(&mut g, &p, &agent.actor_cfg, rtg_v, st_v, ac_v, &timesteps)?;
            // Only the final step's prediction drives the action.
            let mean = g.gather_rows(mean_all, &[k - 1]);
            let ls = g.gather_rows(ls_all, &[k - 1]);
            (mean, ls)
        }
    };

    let action = if deterministic {
        let a = crate::nets::gaussian::deterministic_action(&mut g, mean);
        g.value(a).data.clone()
    } else {
        let nodes = sample_policy(&mut g, mean, raw_ls, &noise);
        g.value(nodes.action).data.clone()
    };
    Ok([action[0], action[1]])
}

/// Checkpoint payload for a full agent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub agent: Agent,
    pub sac: SacConfig,
}

pub const AGENT_CHECKPOINT_KIND: &str = "sac-agent";

pub fn save_agent(
    path: impl AsRef<std::path::Path>,
    agent: &Agent,
    sac: &SacConfig,
) -> Result<(), SacError> {
    let payload = AgentCheckpoint {
        agent: agent.clone(),
        sac: sac.clone(),
    };
    crate::nets::checkpoint::save(path, AGENT_CHECKPOINT_KIND, &payload)?;
    Ok(())
}

pub fn load_agent(path: impl AsRef<std::path::Path>) -> Result<AgentCheckpoint, SacError> {
    Ok(crate::nets::checkpoint::load(path, AGENT_CHECKPOINT_KIND)?)
}

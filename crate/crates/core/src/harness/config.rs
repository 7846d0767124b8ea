//! Flat key-value experiment configuration with dotted section keys.
//!
//! Format: one `key = value` per line, `#` comments, unknown keys rejected
//! with their line numbers. `resolved()` renders the full effective
//! configuration back out, so a snapshot reruns bit-for-bit at the log level.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::cycles::{SynthKind, VelocityUnit};
use crate::sac::{Pairing, SacConfig, SampleMode};

use super::HarnessError;

/// Every recognized key with its documentation line.
pub const KEY_DOCS: &[(&str, &str)] = &[
    ("run.seed", "random seed for the whole run (default 1)"),
    ("run.out", "output directory (default out)"),
    ("run.episodes", "training episode budget (default 50)"),
    ("cycle.source", "cycle origin: synth | file (default synth)"),
    ("cycle.file", "path to a two-column time,velocity table (source=file)"),
    ("cycle.unit", "velocity unit of the file: mps | mph | kph (default mps)"),
    ("cycle.synth.kind", "synthetic shape: trapezoid | sinusoid | constant (default trapezoid)"),
    ("cycle.synth.duration_s", "synthetic cycle duration, seconds (default 60)"),
    ("cycle.synth.v_peak", "synthetic cycle peak velocity, m/s (default 4)"),
    ("cycle.synth.seed", "synthetic cycle shape seed (default 1)"),
    ("cycle.repeat", "repetition count applied at construction (default 1)"),
    ("model.preset", "powertrain preset: default | desk (default desk)"),
    ("model.aux_power_w", "override the constant auxiliary load, W"),
    ("model.cells_parallel", "override battery parallel cell count"),
    ("model.cell_capacity_ah", "override battery cell capacity, Ah"),
    ("agent.variant", "actor-critic pairing: ffn | gru | dt | dt-dt"),
    ("agent.k", "context window length (default 1 ffn, 10 gru, 100 dt)"),
    ("env.soc_init", "initial-SOC choice list, comma separated (default 0.85)"),
    ("env.cycle_repeat_random", "per-episode repetition range lo..hi (default off)"),
    ("env.demand_scale", "demand scale: fixed number or lo..hi range (default 1.0)"),
    ("sac.lr", "Adam learning rate (default 1e-4)"),
    ("sac.batch", "batch size (default 64)"),
    ("sac.gamma", "discount factor (default 0.99)"),
    ("sac.tau", "soft target update rate (default 0.005)"),
    ("sac.buffer_capacity", "replay capacity in timesteps (default 1000000)"),
    ("sac.train_freq", "environment steps per update round (default 5/25/50 by variant)"),
    ("sac.updates_per_round", "gradient updates per round; 0 disables learning (default 1)"),
    ("sac.warmup_steps", "uniform-random warmup steps (default 1000)"),
    ("sac.grad_clip", "global-norm gradient clip: none or a number (default none/0.25 by variant)"),
    ("sac.target_entropy", "temperature target entropy (default -2)"),
    ("sac.sample_mode", "ffn batch sampling: random | sequential (default random)"),
    ("sac.persistent_hidden", "true keeps GRU actor hidden state across steps (default false)"),
    ("sac.reward_scale", "reward multiplier inside training (default 1)"),
    ("sac.return_scale", "divisor for DT return tokens (default 1000)"),
    ("sac.dt_target_return", "DT evaluation return target: auto or a number (default auto)"),
    ("dp.soc_nodes", "SOC grid node count (default 401)"),
    ("dp.omega_nodes", "engine-speed action grid nodes (default 13)"),
    ("dp.torque_nodes", "engine-torque action grid nodes (default 13)"),
    ("dp.terminal", "terminal SOC window lo..hi (default 0.15..0.18)"),
];

/// Parsed, validated experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub episodes: usize,
    pub cycle_source: CycleSource,
    pub cycle_repeat: u32,
    pub model_preset: ModelPreset,
    pub aux_power_w: Option<f64>,
    pub cells_parallel: Option<u32>,
    pub cell_capacity_ah: Option<f64>,
    pub pairing: Pairing,
    pub context_k: usize,
    pub soc_choices: Vec<f64>,
    pub cycle_repeat_random: Option<(u32, u32)>,
    pub demand_scale: Option<(f64, f64)>,
    pub sac: SacConfig,
    pub dp_soc_nodes: usize,
    pub dp_omega_nodes: usize,
    pub dp_torque_nodes: usize,
    pub dp_terminal: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CycleSource {
    Synth {
        kind: SynthKind,
        duration_s: f64,
        v_peak: f64,
        seed: u64,
    },
    File {
        path: PathBuf,
        unit: VelocityUnit,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelPreset {
    /// Published full-scale pack.
    Default,
    /// Desk-scale pack (small battery) for minutes-long experiments.
    Desk,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let pairing = Pairing::FfnFfn;
        Self {
            seed: 1,
            out: PathBuf::from("out"),
            episodes: 50,
            cycle_source: CycleSource::Synth {
                kind: SynthKind::Trapezoid,
                duration_s: 60.0,
                v_peak: 4.0,
                seed: 1,
            },
            cycle_repeat: 1,
            model_preset: ModelPreset::Desk,
            aux_power_w: None,
            cells_parallel: None,
            cell_capacity_ah: None,
            pairing,
            context_k: 1,
            soc_choices: vec![0.85],
            cycle_repeat_random: None,
            demand_scale: None,
            sac: SacConfig::for_pairing(pairing),
            dp_soc_nodes: 401,
            dp_omega_nodes: 13,
            dp_torque_nodes: 13,
            dp_terminal: (0.15, 0.18),
        }
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(format!("line {line}: {}", msg.into()))
}

fn parse_range(v: &str) -> Option<(f64, f64)> {
    let (lo, hi) = v.split_once("..")?;
    Some((lo.trim().parse().ok()?, hi.trim().parse().ok()?))
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_str(&text)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn from_str(text: &str) -> Result<Self, HarnessError> {
        let mut raw: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let n = idx + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(n, "expected `key = value`"))?;
            let key = k.trim().to_string();
            if !KEY_DOCS.iter().any(|(doc_key, _)| *doc_key == key) {
                return Err(parse_err(n, format!("unknown key `{key}`")));
            }
            raw.insert(key, (n, v.trim().to_string()));
        }
        Self::from_raw(&raw)
    }

    fn from_raw(raw: &BTreeMap<String, (usize, String)>) -> Result<Self, HarnessError> {
        let get = |key: &str| raw.get(key).map(|(n, v)| (*n, v.as_str()));
        let parse_t = |key: &str, what: &str| -> Result<Option<f64>, HarnessError> {
            match get(key) {
                None => Ok(None),
                Some((n, v)) => v
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| parse_err(n, format!("{key}: expected {what}, got `{v}`"))),
            }
        };

        // The agent variant drives the per-variant defaults.
        let pairing = match get("agent.variant") {
            Some((n, v)) => v
                .parse::<Pairing>()
                .map_err(|e| parse_err(n, e.to_string()))?,
            None => Pairing::FfnFfn,
        };
        let mut cfg = ExperimentConfig {
            pairing,
            sac: SacConfig::for_pairing(pairing),
            context_k: match pairing {
                Pairing::FfnFfn => 1,
                Pairing::GruGru => 10,
                Pairing::DtGru | Pairing::DtDt => 100,
            },
            ..ExperimentConfig::default()
        };

        if let Some((n, v)) = get("run.seed") {
            cfg.seed = v.parse().map_err(|_| parse_err(n, "run.seed: expected integer"))?;
        }
        if let Some((_, v)) = get("run.out") {
            cfg.out = PathBuf::from(v);
        }
        if let Some((n, v)) = get("run.episodes") {
            cfg.episodes = v
                .parse()
                .map_err(|_| parse_err(n, "run.episodes: expected integer"))?;
        }

        let source = get("cycle.source").map(|(_, v)| v.to_string());
        match source.as_deref().unwrap_or("synth") {
            "synth" => {
                let mut kind = SynthKind::Trapezoid;
                if let Some((n, v)) = get("cycle.synth.kind") {
                    kind = v.parse().map_err(|e| parse_err(n, format!("{e}")))?;
                }
                let duration_s = parse_t("cycle.synth.duration_s", "seconds")?.unwrap_or(60.0);
                let v_peak = parse_t("cycle.synth.v_peak", "m/s")?.unwrap_or(4.0);
                let seed = match get("cycle.synth.seed") {
                    Some((n, v)) => v
                        .parse()
                        .map_err(|_| parse_err(n, "cycle.synth.seed: expected integer"))?,
                    None => 1,
                };
                cfg.cycle_source = CycleSource::Synth {
                    kind,
                    duration_s,
                    v_peak,
                    seed,
                };
            }
            "file" => {
                let (n, path) = get("cycle.file")
                    .ok_or_else(|| HarnessError::Config("cycle.source=file needs cycle.file".into()))?;
                if path.is_empty() {
                    return Err(parse_err(n, "cycle.file: empty path"));
                }
                let unit = match get("cycle.unit") {
                    Some((n, v)) => v
                        .parse::<VelocityUnit>()
                        .map_err(|e| parse_err(n, e.to_string()))?,
                    None => VelocityUnit::Mps,
                };
                cfg.cycle_source = CycleSource::File {
                    path: PathBuf::from(path),
                    unit,
                };
            }
            other => {
                let (n, _) = get("cycle.source").unwrap();
                return Err(parse_err(n, format!("cycle.source: unknown `{other}`")));
            }
        }
        if let Some((n, v)) = get("cycle.repeat") {
            cfg.cycle_repeat = v
                .parse()
                .map_err(|_| parse_err(n, "cycle.repeat: expected integer"))?;
        }

        if let Some((n, v)) = get("model.preset") {
            cfg.model_preset = match v {
                "default" => ModelPreset::Default,
                "desk" => ModelPreset::Desk,
                other => return Err(parse_err(n, format!("model.preset: unknown `{other}`"))),
            };
        }
        cfg.aux_power_w = parse_t("model.aux_power_w", "watts")?;
        if let Some((n, v)) = get("model.cells_parallel") {
            cfg.cells_parallel = Some(
                v.parse()
                    .map_err(|_| parse_err(n, "model.cells_parallel: expected integer"))?,
            );
        }
        cfg.cell_capacity_ah = parse_t("model.cell_capacity_ah", "Ah")?;

        if let Some((n, v)) = get("agent.k") {
            cfg.context_k = v.parse().map_err(|_| parse_err(n, "agent.k: expected integer"))?;
        }

        if let Some((n, v)) = get("env.soc_init") {
            cfg.soc_choices = v
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| parse_err(n, "env.soc_init: expected comma-separated fractions"))?;
        }
        if let Some((n, v)) = get("env.cycle_repeat_random") {
            if v != "off" {
                let (lo, hi) = v
                    .split_once("..")
                    .ok_or_else(|| parse_err(n, "env.cycle_repeat_random: expected lo..hi"))?;
                cfg.cycle_repeat_random = Some((
                    lo.trim()
                        .parse()
                        .map_err(|_| parse_err(n, "env.cycle_repeat_random: bad lo"))?,
                    hi.trim()
                        .parse()
                        .map_err(|_| parse_err(n, "env.cycle_repeat_random: bad hi"))?,
                ));
            }
        }
        if let Some((n, v)) = get("env.demand_scale") {
            cfg.demand_scale = if let Some(r) = parse_range(v) {
                Some(r)
            } else {
                let x: f64 = v
                    .parse()
                    .map_err(|_| parse_err(n, "env.demand_scale: expected number or lo..hi"))?;
                if x == 1.0 {
                    None
                } else {
                    Some((x, x))
                }
            };
        }

        if let Some(x) = parse_t("sac.lr", "number")? {
            cfg.sac.lr = x;
        }
        if let Some((n, v)) = get("sac.batch") {
            cfg.sac.batch = v.parse().map_err(|_| parse_err(n, "sac.batch: expected integer"))?;
        }
        if let Some(x) = parse_t("sac.gamma", "number")? {
            cfg.sac.gamma = x;
        }
        if let Some(x) = parse_t("sac.tau", "number")? {
            cfg.sac.tau = x;
        }
        if let Some((n, v)) = get("sac.buffer_capacity") {
            cfg.sac.buffer_capacity = v
                .parse()
                .map_err(|_| parse_err(n, "sac.buffer_capacity: expected integer"))?;
        }
        if let Some((n, v)) = get("sac.train_freq") {
            cfg.sac.train_freq = v
                .parse()
                .map_err(|_| parse_err(n, "sac.train_freq: expected integer"))?;
        }
        if let Some((n, v)) = get("sac.updates_per_round") {
            cfg.sac.updates_per_round = v
                .parse()
                .map_err(|_| parse_err(n, "sac.updates_per_round: expected integer"))?;
        }
        if let Some((n, v)) = get("sac.warmup_steps") {
            cfg.sac.warmup_steps = v
                .parse()
                .map_err(|_| parse_err(n, "sac.warmup_steps: expected integer"))?;
        }
        if let Some((n, v)) = get("sac.grad_clip") {
            cfg.sac.grad_clip = if v == "none" {
                None
            } else {
                Some(
                    v.parse()
                        .map_err(|_| parse_err(n, "sac.grad_clip: expected `none` or number"))?,
                )
            };
        }
        if let Some(x) = parse_t("sac.target_entropy", "number")? {
            cfg.sac.target_entropy = x;
        }
        if let Some((n, v)) = get("sac.sample_mode") {
            cfg.sac.sample_mode = match v {
                "random" => SampleMode::Random,
                "sequential" => SampleMode::Sequential,
                other => return Err(parse_err(n, format!("sac.sample_mode: unknown `{other}`"))),
            };
        }
        if let Some((n, v)) = get("sac.persistent_hidden") {
            cfg.sac.persistent_hidden = v
                .parse()
                .map_err(|_| parse_err(n, "sac.persistent_hidden: expected true|false"))?;
        }
        if let Some(x) = parse_t("sac.reward_scale", "number")? {
            cfg.sac.reward_scale = x;
        }
        if let Some(x) = parse_t("sac.return_scale", "number")? {
            cfg.sac.return_scale = x;
        }
        if let Some((n, v)) = get("sac.dt_target_return") {
            cfg.sac.dt_eval_target_return = if v == "auto" {
                None
            } else {
                Some(
                    v.parse()
                        .map_err(|_| parse_err(n, "sac.dt_target_return: expected `auto` or number"))?,
                )
            };
        }

        if let Some((n, v)) = get("dp.soc_nodes") {
            cfg.dp_soc_nodes = v
                .parse()
                .map_err(|_| parse_err(n, "dp.soc_nodes: expected integer"))?;
        }
        if let Some((n, v)) = get("dp.omega_nodes") {
            cfg.dp_omega_nodes = v
                .parse()
                .map_err(|_| parse_err(n, "dp.omega_nodes: expected integer"))?;
        }
        if let Some((n, v)) = get("dp.torque_nodes") {
            cfg.dp_torque_nodes = v
                .parse()
                .map_err(|_| parse_err(n, "dp.torque_nodes: expected integer"))?;
        }
        if let Some((n, v)) = get("dp.terminal") {
            cfg.dp_terminal = parse_range(v)
                .ok_or_else(|| parse_err(n, "dp.terminal: expected lo..hi"))?;
        }

        Ok(cfg)
    }

    /// Render the full effective configuration as a reloadable snapshot.
    pub fn resolved(&self) -> String {
        let mut out = String::from("# resolved configuration snapshot\n");
        let mut push = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        push("run.seed", self.seed.to_string());
        push("run.out", self.out.display().to_string());
        push("run.episodes", self.episodes.to_string());
        match &self.cycle_source {
            CycleSource::Synth {
                kind,
                duration_s,
                v_peak,
                seed,
            } => {
                push("cycle.source", "synth".into());
                push("cycle.synth.kind", format!("{kind:?}").to_lowercase());
                push("cycle.synth.duration_s", duration_s.to_string());
                push("cycle.synth.v_peak", v_peak.to_string());
                push("cycle.synth.seed", seed.to_string());
            }
            CycleSource::File { path, unit } => {
                push("cycle.source", "file".into());
                push("cycle.file", path.display().to_string());
                push(
                    "cycle.unit",
                    match unit {
                        VelocityUnit::Mps => "mps".into(),
                        VelocityUnit::Mph => "mph".into(),
                        VelocityUnit::Kph => "kph".into(),
                    },
                );
            }
        }
        push("cycle.repeat", self.cycle_repeat.to_string());
        push(
            "model.preset",
            match self.model_preset {
                ModelPreset::Default => "default".into(),
                ModelPreset::Desk => "desk".into(),
            },
        );
        if let Some(x) = self.aux_power_w {
            push("model.aux_power_w", x.to_string());
        }
        if let Some(x) = self.cells_parallel {
            push("model.cells_parallel", x.to_string());
        }
        if let Some(x) = self.cell_capacity_ah {
            push("model.cell_capacity_ah", x.to_string());
        }
        push("agent.variant", self.pairing.to_string());
        push("agent.k", self.context_k.to_string());
        push(
            "env.soc_init",
            self.soc_choices
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        if let Some((lo, hi)) = self.cycle_repeat_random {
            push("env.cycle_repeat_random", format!("{lo}..{hi}"));
        }
        if let Some((lo, hi)) = self.demand_scale {
            push("env.demand_scale", format!("{lo}..{hi}"));
        }
        push("sac.lr", self.sac.lr.to_string());
        push("sac.batch", self.sac.batch.to_string());
        push("sac.gamma", self.sac.gamma.to_string());
        push("sac.tau", self.sac.tau.to_string());
        push("sac.buffer_capacity", self.sac.buffer_capacity.to_string());
        push("sac.train_freq", self.sac.train_freq.to_string());
        push("sac.updates_per_round", self.sac.updates_per_round.to_string());
        push("sac.warmup_steps", self.sac.warmup_steps.to_string());
        push(
            "sac.grad_clip",
            self.sac
                .grad_clip
                .map(|c| c.to_string())
                .unwrap_or_else(|| "none".into()),
        );
        push("sac.target_entropy", self.sac.target_entropy.to_string());
        push(
            "sac.sample_mode",
            match self.sac.sample_mode {
                SampleMode::Random => "random".into(),
                SampleMode::Sequential => "sequential".into(),
            },
        );
        push("sac.persistent_hidden", self.sac.persistent_hidden.to_string());
        push("sac.reward_scale", self.sac.reward_scale.to_string());
        push("sac.return_scale", self.sac.return_scale.to_string());
        push(
            "sac.dt_target_return",
            self.sac
                .dt_eval_target_return
                .map(|x| x.to_string())
                .unwrap_or_else(|| "auto".into()),
        );
        push("dp.soc_nodes", self.dp_soc_nodes.to_string());
        push("dp.omega_nodes", self.dp_omega_nodes.to_string());
        push("dp.torque_nodes", self.dp_torque_nodes.to_string());
        push("dp.terminal", format!("{}..{}", self.dp_terminal.0, self.dp_terminal.1));
        out
    }

    /// Rendered documentation of every config key.
    pub fn help() -> String {
        let mut out = String::from("configuration keys (key = value per line, # comments):\n");
        for (k, doc) in KEY_DOCS {
            out.push_str(&format!("  {k:<28} {doc}\n"));
        }
        out
    }
}

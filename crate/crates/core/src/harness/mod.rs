//! Experiment driver: configuration, training/evaluation orchestration,
//! DP comparison reports, and trace emission.

pub mod ablate;
pub mod config;
pub mod report;

pub use config::{CycleSource, ExperimentConfig, ModelPreset};
pub use report::{compare, metrics_from_trace, CompareReport, RunMetrics};

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cycles::{load_cycle, repeat_cycle, synth_cycle, CycleError, DriveCycle};
use crate::dp::{dp_solve, uniform_grid, DpConfig, DpError, DpSolution};
use crate::env::{trace_from_csv, trace_to_csv, EnvError, EpisodeConfig, ShevEnv, StepRecord};
use crate::nets::NetsError;
use crate::powertrain::{PowertrainError, PowertrainModel};
use crate::sac::{
    load_agent, save_agent, train::evaluate, Agent, SacError, TrainLog, TrainLogRow,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("io error: {0}")]
    Io(String),
}

impl HarnessError {
    /// Process exit code: 2 config, 3 infeasibility, 4 numeric failure,
    /// 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Infeasible(_) => 3,
            HarnessError::Numeric(_) => 4,
            HarnessError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<CycleError> for HarnessError {
    fn from(e: CycleError) -> Self {
        match e {
            CycleError::Io(e) => HarnessError::Io(e.to_string()),
            other => HarnessError::Config(other.to_string()),
        }
    }
}

impl From<PowertrainError> for HarnessError {
    fn from(e: PowertrainError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<EnvError> for HarnessError {
    fn from(e: EnvError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<NetsError> for HarnessError {
    fn from(e: NetsError) -> Self {
        match e {
            NetsError::NonFinite(m) => HarnessError::Numeric(m),
            other => HarnessError::Config(other.to_string()),
        }
    }
}

impl From<SacError> for HarnessError {
    fn from(e: SacError) -> Self {
        match e {
            SacError::Numeric { msg, .. } => HarnessError::Numeric(msg),
            SacError::Nets(n) => n.into(),
            SacError::Env(v) => v.into(),
            SacError::Config(m) => HarnessError::Config(m),
        }
    }
}

impl From<DpError> for HarnessError {
    fn from(e: DpError) -> Self {
        match e {
            DpError::Infeasible { .. } | DpError::EmInfeasible { .. } => {
                HarnessError::Infeasible(e.to_string())
            }
            other => HarnessError::Config(other.to_string()),
        }
    }
}

/// The desk-scale powertrain: published chassis and genset, but a single
/// parallel battery string sized so one-minute cycles traverse the full SOC
/// range. Used by the synthetic-cycle examples and the acceptance suite.
pub fn desk_model() -> PowertrainModel {
    let mut m = PowertrainModel::default_model();
    m.battery.cells_parallel = 1;
    m.battery.cell_capacity = 0.72;
    m
}

/// The desk-scale reference cycle: 60 s trapezoid, 4 m/s peak, shape seed 1.
pub fn desk_cycle() -> DriveCycle {
    synth_cycle(crate::cycles::SynthKind::Trapezoid, 60.0, 4.0, 1)
        .expect("static desk cycle parameters")
}

pub fn build_model(cfg: &ExperimentConfig) -> Result<PowertrainModel, HarnessError> {
    let mut m = match cfg.model_preset {
        ModelPreset::Default => PowertrainModel::default_model(),
        ModelPreset::Desk => desk_model(),
    };
    if let Some(aux) = cfg.aux_power_w {
        m.vehicle.aux_power_w = aux;
    }
    if let Some(p) = cfg.cells_parallel {
        m.battery.cells_parallel = p;
    }
    if let Some(c) = cfg.cell_capacity_ah {
        m.battery.cell_capacity = c;
    }
    m.validate()?;
    Ok(m)
}

pub fn build_cycle(cfg: &ExperimentConfig) -> Result<DriveCycle, HarnessError> {
    let base = match &cfg.cycle_source {
        CycleSource::Synth {
            kind,
            duration_s,
            v_peak,
            seed,
        } => synth_cycle(*kind, *duration_s, *v_peak, *seed)?,
        CycleSource::File { path, unit } => load_cycle(path, *unit)?,
    };
    Ok(if cfg.cycle_repeat > 1 {
        repeat_cycle(&base, cfg.cycle_repeat)?
    } else {
        base
    })
}

pub fn build_env(cfg: &ExperimentConfig) -> Result<ShevEnv, HarnessError> {
    let model = build_model(cfg)?;
    let cycle = build_cycle(cfg)?;
    let episode = EpisodeConfig {
        initial_soc_choices: cfg.soc_choices.clone(),
        randomize_cycles: cfg.cycle_repeat_random,
        demand_scale_range: cfg.demand_scale,
        ..EpisodeConfig::default()
    };
    Ok(ShevEnv::new(model, cycle, episode)?)
}

pub fn dp_config(cfg: &ExperimentConfig) -> DpConfig {
    DpConfig {
        soc_grid: uniform_grid(0.0, 1.0, cfg.dp_soc_nodes),
        omega_grid: uniform_grid(0.0, 2300.0, cfg.dp_omega_nodes),
        torque_grid: uniform_grid(0.0, 1500.0, cfg.dp_torque_nodes),
        terminal_soc: cfg.dp_terminal,
        ..DpConfig::default()
    }
}

/// Write a trace with its metadata header.
pub fn write_trace(
    path: impl AsRef<Path>,
    records: &[StepRecord],
    dt_s: f64,
    initial_soc: f64,
) -> Result<(), HarnessError> {
    let mut out = format!("# dt_s = {dt_s}\n# initial_soc = {initial_soc}\n");
    out.push_str(&trace_to_csv(records));
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a trace plus its header metadata (defaults: dt 1 s, SOC from row 0).
pub fn read_trace(path: impl AsRef<Path>) -> Result<(Vec<StepRecord>, f64, f64), HarnessError> {
    let text = std::fs::read_to_string(&path)?;
    let mut dt = 1.0;
    let mut initial_soc = f64::NAN;
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        if let Some(v) = line.strip_prefix("# dt_s =") {
            dt = v
                .trim()
                .parse()
                .map_err(|_| HarnessError::Config("bad dt_s header".into()))?;
        }
        if let Some(v) = line.strip_prefix("# initial_soc =") {
            initial_soc = v
                .trim()
                .parse()
                .map_err(|_| HarnessError::Config("bad initial_soc header".into()))?;
        }
    }
    let records = trace_from_csv(&text)?;
    if initial_soc.is_nan() {
        initial_soc = records.first().map(|r| r.soc).unwrap_or(f64::NAN);
    }
    Ok((records, dt, initial_soc))
}

pub struct TrainArtifacts {
    pub log_path: PathBuf,
    pub best_ckpt: Option<PathBuf>,
    pub final_ckpt: PathBuf,
    pub resolved_config: PathBuf,
    pub rows: Vec<TrainLogRow>,
}

/// Train per config; optionally resume from a checkpoint (episode numbering
/// continues; the replay buffer restarts empty).
pub fn cmd_train(
    cfg: &ExperimentConfig,
    resume: Option<&Path>,
) -> Result<TrainArtifacts, HarnessError> {
    std::fs::create_dir_all(&cfg.out)?;
    let mut env = build_env(cfg)?;
    let (mut agent, sac_cfg) = match resume {
        Some(path) => {
            let ck = load_agent(path)?;
            if ck.agent.pairing != cfg.pairing {
                return Err(HarnessError::Config(format!(
                    "checkpoint variant {} does not match configured {}",
                    ck.agent.pairing, cfg.pairing
                )));
            }
            (ck.agent, cfg.sac.clone())
        }
        None => (Agent::new(cfg.pairing, cfg.context_k, cfg.seed)?, cfg.sac.clone()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let log: TrainLog = crate::sac::train(&mut env, &mut agent, &sac_cfg, cfg.episodes, &mut rng)
        .map_err(|e| match e {
            SacError::Numeric { msg, dump } => {
                let dump_path = cfg.out.join("nan_batch_dump.txt");
                let _ = std::fs::write(&dump_path, dump);
                HarnessError::Numeric(format!("{msg}; offending batch dumped to {}", dump_path.display()))
            }
            other => other.into(),
        })?;

    let log_path = cfg.out.join("log.csv");
    let mut text = String::from(TrainLogRow::CSV_HEADER);
    text.push('\n');
    for row in &log.rows {
        text.push_str(&row.to_csv());
        text.push('\n');
    }
    std::fs::write(&log_path, text)?;

    let best_ckpt = match &log.best_agent {
        Some(best) => {
            let p = cfg.out.join("best.ckpt");
            save_agent(&p, best, &sac_cfg)?;
            Some(p)
        }
        None => None,
    };
    let final_ckpt = cfg.out.join("final.ckpt");
    save_agent(&final_ckpt, &agent, &sac_cfg)?;
    let resolved_config = cfg.out.join("config.resolved");
    std::fs::write(&resolved_config, cfg.resolved())?;

    Ok(TrainArtifacts {
        log_path,
        best_ckpt,
        final_ckpt,
        resolved_config,
        rows: log.rows,
    })
}

pub struct EvalArtifacts {
    pub trace_path: PathBuf,
    pub summary_path: PathBuf,
    pub summary: crate::env::EpisodeSummary,
}

/// Deterministic evaluation rollout of a checkpoint on the configured cycle.
pub fn cmd_eval(
    ckpt: &Path,
    cfg: &ExperimentConfig,
    initial_soc: f64,
) -> Result<EvalArtifacts, HarnessError> {
    std::fs::create_dir_all(&cfg.out)?;
    let ck = load_agent(ckpt)?;
    let mut env = build_env(cfg)?;
    if !env.cycle_em_feasible() {
        return Err(HarnessError::Infeasible(
            "cycle exceeds traction-machine limits".into(),
        ));
    }
    let (records, summary) = evaluate(&mut env, &ck.agent, &ck.sac, initial_soc)?;
    let trace_path = cfg.out.join(format!("eval_{}.trace.csv", ck.agent.pairing));
    write_trace(&trace_path, &records, env.cycle().dt(), initial_soc)?;
    let summary_path = cfg.out.join(format!("eval_{}.summary.txt", ck.agent.pairing));
    std::fs::write(&summary_path, summary.to_text())?;
    Ok(EvalArtifacts {
        trace_path,
        summary_path,
        summary,
    })
}

pub struct DpArtifacts {
    pub trace_path: PathBuf,
    pub dir: PathBuf,
    pub solution: DpSolution,
}

/// DP baseline on the configured cycle.
pub fn cmd_dp(cfg: &ExperimentConfig, initial_soc: f64) -> Result<DpArtifacts, HarnessError> {
    std::fs::create_dir_all(&cfg.out)?;
    let model = build_model(cfg)?;
    let cycle = build_cycle(cfg)?;
    let dp_cfg = dp_config(cfg);
    let solution = dp_solve(&cycle, &model, &dp_cfg, initial_soc)?;
    let dir = cfg.out.join("dp");
    solution.write_artifacts(&dir)?;
    let trace_path = dir.join("trace.csv");
    write_trace(&trace_path, &solution.trace, cycle.dt(), initial_soc)?;
    Ok(DpArtifacts {
        trace_path,
        dir,
        solution,
    })
}

pub struct CompareArtifacts {
    pub table_path: PathBuf,
    pub csv_path: PathBuf,
    pub report: CompareReport,
}

/// Compare agent run traces against a DP trace, all recomputed from file.
pub fn cmd_compare(
    cfg: &ExperimentConfig,
    dp_trace: &Path,
    run_traces: &[PathBuf],
) -> Result<CompareArtifacts, HarnessError> {
    std::fs::create_dir_all(&cfg.out)?;
    let model = build_model(cfg)?;
    let (dp_records, dp_dt, _) = read_trace(dp_trace)?;
    let dp_metrics = metrics_from_trace("DP", &dp_records, dp_dt, &model)?;
    let mut runs = Vec::with_capacity(run_traces.len());
    for path in run_traces {
        let (records, dt, _) = read_trace(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        runs.push(metrics_from_trace(name, &records, dt, &model)?);
    }
    let report = compare(dp_metrics, runs)?;
    let table_path = cfg.out.join("compare.txt");
    std::fs::write(&table_path, report.text_table())?;
    let csv_path = cfg.out.join("compare.csv");
    std::fs::write(&csv_path, report.to_csv())?;
    Ok(CompareArtifacts {
        table_path,
        csv_path,
        report,
    })
}

/// Emit the synthesized component maps for inspection.
pub fn cmd_maps(dir: &Path) -> Result<(), HarnessError> {
    let model = PowertrainModel::default_model();
    model.engine_fuel.emit(dir)?;
    model.generator_eff.emit(dir)?;
    model.em_eff.emit(dir)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sac::Pairing;

    fn tiny_cfg(dir: &Path) -> ExperimentConfig {
        let text = format!(
            "run.out = {}\nrun.episodes = 3\nsac.warmup_steps = 20\nsac.batch = 4\nrun.seed = 7\n",
            dir.display()
        );
        ExperimentConfig::from_str(&text).unwrap()
    }

    #[test]
    fn desk_setup_is_em_feasible() {
        let env = ShevEnv::new(desk_model(), desk_cycle(), EpisodeConfig::fixed_soc(0.85)).unwrap();
        assert!(env.cycle_em_feasible());
    }

    #[test]
    fn train_writes_artifacts_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        let a = cmd_train(&cfg, None).unwrap();
        assert!(a.log_path.exists());
        assert!(a.final_ckpt.exists());
        assert!(a.resolved_config.exists());
        assert_eq!(a.rows.len(), 3);
        // Second identical invocation reproduces the log rows exactly
        // (modulo wall time).
        let dir2 = tempfile::tempdir().unwrap();
        let mut cfg2 = cfg.clone();
        cfg2.out = dir2.path().to_path_buf();
        let b = cmd_train(&cfg2, None).unwrap();
        let da: Vec<String> = a.rows.iter().map(|r| r.deterministic_fields()).collect();
        let db: Vec<String> = b.rows.iter().map(|r| r.deterministic_fields()).collect();
        assert_eq!(da, db);
    }

    #[test]
    fn resume_continues_episode_numbering() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        let first = cmd_train(&cfg, None).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let mut cfg2 = cfg.clone();
        cfg2.out = dir2.path().to_path_buf();
        let resumed = cmd_train(&cfg2, Some(&first.final_ckpt)).unwrap();
        assert_eq!(resumed.rows.first().unwrap().episode, 4);
    }

    #[test]
    fn snapshot_rerun_matches_log() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        let a = cmd_train(&cfg, None).unwrap();
        let snapshot = std::fs::read_to_string(&a.resolved_config).unwrap();
        let mut cfg2 = ExperimentConfig::from_str(&snapshot).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        cfg2.out = dir2.path().to_path_buf();
        let b = cmd_train(&cfg2, None).unwrap();
        let da: Vec<String> = a.rows.iter().map(|r| r.deterministic_fields()).collect();
        let db: Vec<String> = b.rows.iter().map(|r| r.deterministic_fields()).collect();
        assert_eq!(da, db);
    }

    #[test]
    fn eval_trace_round_trips_and_mpg_recomputes() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        let art = cmd_train(&cfg, None).unwrap();
        let ev = cmd_eval(&art.final_ckpt, &cfg, 0.85).unwrap();
        let (records, dt, soc0) = read_trace(&ev.trace_path).unwrap();
        assert_eq!(soc0, 0.85);
        assert_eq!(records[0].soc, 0.85, "trace row 0 carries the initial SOC");
        let model = build_model(&cfg).unwrap();
        let metrics = metrics_from_trace("x", &records, dt, &model).unwrap();
        let expect = ev.summary.mpg;
        assert!(
            (metrics.mpg - expect).abs() < 1e-9 * expect.abs().max(1.0),
            "recomputed {} vs summary {}",
            metrics.mpg,
            expect
        );
        // Deterministic evaluation: run twice, identical traces.
        let ev2 = cmd_eval(&art.final_ckpt, &cfg, 0.85).unwrap();
        let t1 = std::fs::read_to_string(&ev.trace_path).unwrap();
        let t2 = std::fs::read_to_string(&ev2.trace_path).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn checkpoint_variant_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        let art = cmd_train(&cfg, None).unwrap();
        let mut gru_cfg = cfg.clone();
        gru_cfg.pairing = Pairing::GruGru;
        assert!(cmd_train(&gru_cfg, Some(&art.final_ckpt)).is_err());
    }

    #[test]
    fn maps_emit_all_three_components() {
        let dir = tempfile::tempdir().unwrap();
        cmd_maps(dir.path()).unwrap();
        for name in ["engine_fuel", "generator_eff", "em_eff"] {
            assert!(dir.path().join(format!("{name}.csv")).exists());
            assert!(dir.path().join(format!("{name}.meta.json")).exists());
        }
    }
}

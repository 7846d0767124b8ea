use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use shev_ems::cycles::VelocityUnit;
use shev_ems::harness::{self, CycleSource, ExperimentConfig, HarnessError};

#[derive(Parser)]
#[command(
    name = "shev-ems",
    version,
    about = "Series hybrid-electric-vehicle energy management workbench: \
             sequence-aware soft actor-critic training, dynamic-programming \
             baseline, and comparison reports"
)]
struct Cli {
    /// Print every configuration key with its documentation, then exit.
    #[arg(long, global = true)]
    help_config: bool,
    #[command(subcommand)]
    cmd: Option<Cmd>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train an agent per the configuration file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from a saved checkpoint (episode numbering continues).
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deterministic evaluation rollout of a checkpoint.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Cycle file override (two-column time,velocity table).
        #[arg(long)]
        cycle: Option<PathBuf>,
        /// Velocity unit of the cycle file: mps | mph | kph.
        #[arg(long)]
        unit: Option<String>,
        /// Repetition count applied to the cycle.
        #[arg(long)]
        repeat: Option<u32>,
        /// Initial state of charge, fraction.
        #[arg(long)]
        soc: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the dynamic-programming baseline on a cycle.
    Dp {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        cycle: Option<PathBuf>,
        #[arg(long)]
        unit: Option<String>,
        #[arg(long)]
        repeat: Option<u32>,
        #[arg(long)]
        soc: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare run traces against a DP trace (all recomputed from file).
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        /// DP baseline trace file.
        #[arg(long)]
        dp: PathBuf,
        /// Agent run trace files.
        #[arg(long, num_args = 1..)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one ablation study (1-6) over a base configuration.
    Ablate {
        #[arg(long)]
        study: u8,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the synthesized component maps for inspection.
    Maps {
        #[arg(long)]
        emit: PathBuf,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig, HarnessError> {
    match path {
        Some(p) => ExperimentConfig::from_file(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn apply_overrides(
    cfg: &mut ExperimentConfig,
    seed: Option<u64>,
    out: Option<PathBuf>,
    cycle: Option<PathBuf>,
    unit: Option<String>,
    repeat: Option<u32>,
) -> Result<(), HarnessError> {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out = o;
    }
    if let Some(path) = cycle {
        let unit = match unit.as_deref() {
            Some(u) => u
                .parse::<VelocityUnit>()
                .map_err(|e| HarnessError::Config(e.to_string()))?,
            None => VelocityUnit::Mps,
        };
        cfg.cycle_source = CycleSource::File { path, unit };
    }
    if let Some(r) = repeat {
        cfg.cycle_repeat = r;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    if cli.help_config {
        print!("{}", ExperimentConfig::help());
        return Ok(());
    }
    let Some(cmd) = cli.cmd else {
        return Err(HarnessError::Config(
            "no command given; see --help or --help-config".into(),
        ));
    };
    match cmd {
        Cmd::Train {
            config,
            resume,
            seed,
            out,
        } => {
            let mut cfg = load_config(Some(&config))?;
            apply_overrides(&mut cfg, seed, out, None, None, None)?;
            let artifacts = harness::cmd_train(&cfg, resume.as_deref())?;
            println!("log: {}", artifacts.log_path.display());
            if let Some(best) = &artifacts.best_ckpt {
                println!("best checkpoint: {}", best.display());
            }
            println!("final checkpoint: {}", artifacts.final_ckpt.display());
            println!("resolved config: {}", artifacts.resolved_config.display());
        }
        Cmd::Eval {
            ckpt,
            config,
            cycle,
            unit,
            repeat,
            soc,
            seed,
            out,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            apply_overrides(&mut cfg, seed, out, cycle, unit, repeat)?;
            let artifacts = harness::cmd_eval(&ckpt, &cfg, soc)?;
            println!("trace: {}", artifacts.trace_path.display());
            print!("{}", artifacts.summary.to_text());
        }
        Cmd::Dp {
            config,
            cycle,
            unit,
            repeat,
            soc,
            seed,
            out,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            apply_overrides(&mut cfg, seed, out, cycle, unit, repeat)?;
            let artifacts = harness::cmd_dp(&cfg, soc)?;
            println!("artifacts: {}", artifacts.dir.display());
            println!(
                "total_fuel_g = {}\nmpg = {}\nsoc_final = {}",
                artifacts.solution.total_fuel_g,
                artifacts.solution.mpg,
                artifacts.solution.soc_final
            );
        }
        Cmd::Compare {
            config,
            dp,
            runs,
            seed,
            out,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            apply_overrides(&mut cfg, seed, out, None, None, None)?;
            let artifacts = harness::cmd_compare(&cfg, &dp, &runs)?;
            print!("{}", artifacts.report.text_table());
            println!("table: {}", artifacts.table_path.display());
            println!("csv: {}", artifacts.csv_path.display());
        }
        Cmd::Ablate {
            study,
            config,
            seed,
            out,
        } => {
            let mut cfg = load_config(Some(&config))?;
            apply_overrides(&mut cfg, seed, out.clone(), None, None, None)?;
            let study_out = out.unwrap_or_else(|| cfg.out.join(format!("study{study}")));
            let outcome = harness::ablate::run_study(study, &cfg, &study_out)?;
            println!("summary: {}", outcome.summary_path.display());
            for dir in &outcome.arm_dirs {
                println!("arm: {}", dir.display());
            }
            for (arm, err) in &outcome.failures {
                eprintln!("arm {arm} failed: {err}");
            }
        }
        Cmd::Maps { emit } => {
            harness::cmd_maps(&emit)?;
            println!("maps written to {}", emit.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Ablation studies: expand a base configuration along one study axis, run
//! every arm, and emit plot-ready reward curves with printed rescale anchors.

use std::path::{Path, PathBuf};

use crate::sac::{Pairing, SampleMode, TrainLogRow};

use super::config::ExperimentConfig;
use super::{cmd_train, HarnessError};

#[derive(Debug, Clone)]
pub struct AblationArm {
    pub name: String,
    pub config: ExperimentConfig,
}

fn arm(base: &ExperimentConfig, name: &str, f: impl FnOnce(&mut ExperimentConfig)) -> AblationArm {
    let mut config = base.clone();
    config.pairing = base.pairing;
    f(&mut config);
    // Re-derive the per-variant training defaults the axis may have changed.
    let keep = config.sac.clone();
    let mut sac = crate::sac::SacConfig::for_pairing(config.pairing);
    sac.batch = keep.batch;
    sac.warmup_steps = keep.warmup_steps;
    sac.updates_per_round = keep.updates_per_round;
    sac.buffer_capacity = keep.buffer_capacity;
    sac.lr = keep.lr;
    sac.sample_mode = keep.sample_mode;
    config.sac = sac;
    AblationArm {
        name: name.to_string(),
        config,
    }
}

/// Expand study `id` (1–6) over `base`.
///
/// 1. FFN sampling: one cycle random, ten cycles random, ten sequential.
/// 2. Actor-critic pairings at a one-step context.
/// 3. Context length k ∈ {10, 100} for the sequence families.
/// 4. Varying initial SOC over the five-choice set.
/// 5. Additionally randomizing the per-episode cycle count 1–10.
/// 6. Additionally scaling the EM demand by U(0.5, 1.5).
pub fn expand_study(id: u8, base: &ExperimentConfig) -> Result<Vec<AblationArm>, HarnessError> {
    let soc_set = vec![0.85, 0.75, 0.65, 0.55, 0.45];
    let arms = match id {
        1 => vec![
            arm(base, "ffn-1cyc-random", |c| {
                c.pairing = Pairing::FfnFfn;
                c.context_k = 1;
                c.cycle_repeat = 1;
            }),
            arm(base, "ffn-10cyc-random", |c| {
                c.pairing = Pairing::FfnFfn;
                c.context_k = 1;
                c.cycle_repeat = 10;
            }),
            arm(base, "ffn-10cyc-sequential", |c| {
                c.pairing = Pairing::FfnFfn;
                c.context_k = 1;
                c.cycle_repeat = 10;
                c.sac.sample_mode = SampleMode::Sequential;
            }),
        ],
        2 => [
            ("ffn-ffn", Pairing::FfnFfn),
            ("gru-gru", Pairing::GruGru),
            ("dt-gru", Pairing::DtGru),
            ("dt-dt", Pairing::DtDt),
        ]
        .into_iter()
        .map(|(name, pairing)| {
            arm(base, name, |c| {
                c.pairing = pairing;
                c.context_k = 1;
            })
        })
        .collect(),
        3 => [
            ("gru-k10", Pairing::GruGru, 10),
            ("gru-k100", Pairing::GruGru, 100),
            ("dt-k10", Pairing::DtGru, 10),
            ("dt-k100", Pairing::DtGru, 100),
        ]
        .into_iter()
        .map(|(name, pairing, k)| {
            arm(base, name, |c| {
                c.pairing = pairing;
                c.context_k = k;
            })
        })
        .collect(),
        4 | 5 | 6 => [
            ("ffn", Pairing::FfnFfn, 1usize),
            ("gru-k10", Pairing::GruGru, 10),
            ("dt-k100", Pairing::DtGru, 100),
        ]
        .into_iter()
        .map(|(name, pairing, k)| {
            let soc_set = soc_set.clone();
            arm(base, name, move |c| {
                c.pairing = pairing;
                c.context_k = k;
                c.soc_choices = soc_set;
                if id >= 5 {
                    c.cycle_repeat_random = Some((1, 10));
                }
                if id >= 6 {
                    c.demand_scale = Some((0.5, 1.5));
                }
            })
        })
        .collect(),
        other => {
            return Err(HarnessError::Config(format!(
                "study id {other} outside 1..=6"
            )))
        }
    };
    Ok(arms)
}

pub struct AblationOutcome {
    pub arm_dirs: Vec<PathBuf>,
    pub summary_path: PathBuf,
    /// Arms that failed, with their error text; the batch continues.
    pub failures: Vec<(String, String)>,
}

/// Run every arm of a study, then write per-arm reward-curve files using
/// study-wide 0–100 rescale anchors, plus a summary grid.
pub fn run_study(id: u8, base: &ExperimentConfig, out: &Path) -> Result<AblationOutcome, HarnessError> {
    let arms = expand_study(id, base)?;
    std::fs::create_dir_all(out)?;

    let mut results: Vec<(String, PathBuf, Vec<TrainLogRow>)> = Vec::new();
    let mut failures = Vec::new();
    let mut manifest = String::from("arm,seed,episodes,dir\n");
    for a in &arms {
        let dir = out.join(&a.name);
        let mut cfg = a.config.clone();
        cfg.out = dir.clone();
        manifest.push_str(&format!(
            "{},{},{},{}\n",
            a.name,
            cfg.seed,
            cfg.episodes,
            dir.display()
        ));
        match cmd_train(&cfg, None) {
            Ok(artifacts) => results.push((a.name.clone(), dir, artifacts.rows)),
            Err(e) => failures.push((a.name.clone(), e.to_string())),
        }
    }
    std::fs::write(out.join("arms.csv"), manifest)?;

    // Study-wide anchors over the 10-episode moving averages.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mas: Vec<Vec<f64>> = results
        .iter()
        .map(|(_, _, rows)| {
            let ma = moving_average(rows, 10);
            for &v in &ma {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            ma
        })
        .collect();
    if !lo.is_finite() || !(hi > lo) {
        hi = lo + 1.0;
    }

    let mut summary = String::from("arm,episodes,final_ma10,best_ma10\n");
    let mut arm_dirs = Vec::new();
    for ((name, dir, rows), ma) in results.iter().zip(&mas) {
        let mut curve = format!(
            "# rescale anchors: 0 = {lo} (study worst ma10), 100 = {hi} (study best ma10)\nepisode,mean_reward,ma10,scaled_0_100\n"
        );
        for (row, m) in rows.iter().zip(ma) {
            let scaled = 100.0 * (m - lo) / (hi - lo);
            curve.push_str(&format!(
                "{},{},{},{}\n",
                row.episode, row.mean_reward, m, scaled
            ));
        }
        std::fs::write(dir.join("curve.csv"), curve)?;
        let best = ma.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        summary.push_str(&format!(
            "{},{},{},{}\n",
            name,
            rows.len(),
            ma.last().copied().unwrap_or(f64::NAN),
            best
        ));
        arm_dirs.push(dir.clone());
    }
    for (name, err) in &failures {
        summary.push_str(&format!("{name},failed: {err},,\n"));
    }
    let summary_path = out.join("summary.csv");
    std::fs::write(&summary_path, summary)?;
    Ok(AblationOutcome {
        arm_dirs,
        summary_path,
        failures,
    })
}

fn moving_average(rows: &[TrainLogRow], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len());
    for i in 0..rows.len() {
        let start = i.saturating_sub(window - 1);
        let slice = &rows[start..=i];
        out.push(slice.iter().map(|r| r.mean_reward).sum::<f64>() / slice.len() as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig::from_str("run.episodes = 2\nsac.warmup_steps = 10\nsac.batch = 4\n")
            .unwrap()
    }

    #[test]
    fn study_axes_expand_as_documented() {
        let b = base();
        let s1 = expand_study(1, &b).unwrap();
        assert_eq!(
            s1.iter().map(|a| a.name.as_str()).collect::<Vec<_>>(),
            vec!["ffn-1cyc-random", "ffn-10cyc-random", "ffn-10cyc-sequential"]
        );
        assert_eq!(s1[2].config.sac.sample_mode, SampleMode::Sequential);

        let s3 = expand_study(3, &b).unwrap();
        assert_eq!(
            s3.iter().map(|a| a.name.as_str()).collect::<Vec<_>>(),
            vec!["gru-k10", "gru-k100", "dt-k10", "dt-k100"]
        );
        assert_eq!(s3[1].config.context_k, 100);

        let s6 = expand_study(6, &b).unwrap();
        for a in &s6 {
            assert_eq!(a.config.demand_scale, Some((0.5, 1.5)));
            assert_eq!(a.config.cycle_repeat_random, Some((1, 10)));
            assert_eq!(a.config.soc_choices.len(), 5);
        }

        assert!(expand_study(7, &b).is_err());
    }

    #[test]
    fn arm_training_frequency_follows_variant() {
        let b = base();
        let s2 = expand_study(2, &b).unwrap();
        let freq: Vec<usize> = s2.iter().map(|a| a.config.sac.train_freq).collect();
        assert_eq!(freq, vec![5, 25, 50, 50]);
    }

    #[test]
    fn moving_average_windows() {
        let rows: Vec<TrainLogRow> = (0..12)
            .map(|i| TrainLogRow {
                episode: i + 1,
                steps: 1,
                mean_reward: i as f64,
                critic1_loss: 0.0,
                critic2_loss: 0.0,
                actor_loss: 0.0,
                alpha: 1.0,
                wall_s: 0.0,
            })
            .collect();
        let ma = moving_average(&rows, 10);
        assert_eq!(ma[0], 0.0);
        assert_eq!(ma[4], 2.0);
        // Window 10 over episodes 3..=12.
        assert_eq!(ma[11], (2..12).sum::<usize>() as f64 / 10.0);
    }
}

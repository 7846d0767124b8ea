//! Critic targets, the per-family critic loss reductions, actor and
//! temperature losses, and the full gradient update step.
//!
//! The recurrent critic emits one Q per window timestep and its loss sums
//! squared errors across the sequence before averaging over the batch; the
//! return-predicting transformer critic regresses its predicted next return
//! on the target network's prediction one step later, with no reward term.
//! Actor and temperature losses always use the final window timestep.

use rand_chacha::ChaCha8Rng;

use crate::nets::dt::{self, Readout};
use crate::nets::graph::{Graph, Var};
use crate::nets::params::ParamSet;
use crate::nets::tensor::Tensor;
use crate::nets::{ffn, Bound, Family};

use super::adam::Adam;
use super::buffer::{TrajectoryBuffer, Transition, Window, ACT_DIM, OBS_DIM};
use super::{
    dt_actor_heads, ffn_actor_heads, gru_actor_heads_seq, gru_critic_seq, normal_tensor,
    sample_policy, soft_update, Agent, SacConfig, SacError, SampleMode,
};

/// One optimizer per parameter set plus the temperature scalar.
pub struct Optimizers {
    pub actor: Adam,
    pub critic1: Adam,
    pub critic2: Adam,
    pub alpha: Adam,
}

impl Optimizers {
    pub fn new(agent: &Agent, cfg: &SacConfig) -> Self {
        let adam = |dim: usize| Adam::new(dim, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
        Self {
            actor: adam(agent.actor.num_scalars()),
            critic1: adam(agent.critic1.num_scalars()),
            critic2: adam(agent.critic2.num_scalars()),
            alpha: adam(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic1_loss: f64,
    pub critic2_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
}

/// Soft Bellman backup for one transition.
pub fn sac_backup(
    reward: f64,
    done: bool,
    gamma: f64,
    min_q_next: f64,
    alpha: f64,
    logp_next: f64,
) -> f64 {
    let mask = if done { 0.0 } else { 1.0 };
    reward + gamma * mask * (min_q_next - alpha * logp_next)
}

/// Single-transition critic reduction: mean squared error over the batch.
pub fn mse_loss(q: &[f64], y: &[f64]) -> f64 {
    assert_eq!(q.len(), y.len());
    q.iter()
        .zip(y)
        .map(|(q, y)| (q - y) * (q - y))
        .sum::<f64>()
        / q.len() as f64
}

/// Sequence critic reduction: squared error summed across each window's
/// timesteps, then averaged over the batch. At `k = 1` this coincides with
/// [`mse_loss`].
pub fn seq_sum_loss(q: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    assert_eq!(q.len(), y.len());
    q.iter()
        .zip(y)
        .map(|(qs, ys)| {
            assert_eq!(qs.len(), ys.len());
            qs.iter()
                .zip(ys)
                .map(|(q, y)| (q - y) * (q - y))
                .sum::<f64>()
        })
        .sum::<f64>()
        / q.len() as f64
}

/// Actor objective `E[α·logπ − Q]`.
pub fn actor_objective(alpha: f64, logp: &[f64], q: &[f64]) -> f64 {
    assert_eq!(logp.len(), q.len());
    logp.iter()
        .zip(q)
        .map(|(lp, q)| alpha * lp - q)
        .sum::<f64>()
        / logp.len() as f64
}

/// Temperature loss `E[−α(logπ + H_target)]`.
pub fn alpha_loss_value(alpha: f64, logp: &[f64], target_entropy: f64) -> f64 {
    logp.iter()
        .map(|lp| -alpha * (lp + target_entropy))
        .sum::<f64>()
        / logp.len() as f64
}

/// d/d(log α) of the temperature loss; the gradient flows only through
/// `log_alpha` (the log-probabilities are treated as constants).
pub fn alpha_grad_log_alpha(alpha: f64, logp: &[f64], target_entropy: f64) -> f64 {
    alpha_loss_value(alpha, logp, target_entropy)
}

fn apply_step(params: &mut ParamSet, grads: &ParamSet, opt: &mut Adam, clip: Option<f64>) {
    let mut flat = params.flat();
    opt.step(&mut flat, &grads.flat(), clip);
    params
        .set_flat(&flat)
        .expect("optimizer output has the parameter layout");
}

fn alpha_step(
    agent: &mut Agent,
    cfg: &SacConfig,
    opts: &mut Optimizers,
    logp: &[f64],
) -> f64 {
    let alpha = agent.alpha();
    let loss = alpha_loss_value(alpha, logp, cfg.target_entropy);
    let grad = alpha_grad_log_alpha(alpha, logp, cfg.target_entropy);
    let mut la = [agent.log_alpha];
    opts.alpha.step(&mut la, &[grad], None);
    agent.log_alpha = la[0];
    loss
}

fn check_finite(stats: &UpdateStats, dump: impl Fn() -> String) -> Result<(), SacError> {
    let vals = [
        stats.critic1_loss,
        stats.critic2_loss,
        stats.actor_loss,
        stats.alpha_loss,
        stats.alpha,
    ];
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(SacError::Numeric {
            msg: format!(
                "non-finite loss: critic1 {}, critic2 {}, actor {}, alpha_loss {}, alpha {}",
                stats.critic1_loss,
                stats.critic2_loss,
                stats.actor_loss,
                stats.alpha_loss,
                stats.alpha
            ),
            dump: dump(),
        });
    }
    Ok(())
}

fn truncate_debug<T: std::fmt::Debug>(value: &T) -> String {
    let mut s = format!("{value:?}");
    s.truncate(4000);
    s
}

fn rows_tensor<const N: usize>(rows: impl Iterator<Item = [f64; N]>, n: usize) -> Tensor {
    let mut data = Vec::with_capacity(n * N);
    let mut count = 0;
    for r in rows {
        data.extend_from_slice(&r);
        count += 1;
    }
    Tensor::from_vec(count, N, data)
}

fn col_tensor(vals: &[f64]) -> Tensor {
    Tensor::from_vec(vals.len(), 1, vals.to_vec())
}

/// Run one gradient update round. Returns `None` when the buffer cannot yet
/// supply a batch of the required shape.
pub fn update(
    agent: &mut Agent,
    buffer: &TrajectoryBuffer,
    cfg: &SacConfig,
    opts: &mut Optimizers,
    rng: &mut ChaCha8Rng,
) -> Result<Option<UpdateStats>, SacError> {
    if agent.pairing.uses_sequences() {
        if !buffer.can_sample_windows(agent.context_k, cfg.batch) {
            return Ok(None);
        }
        let windows = buffer.sample_windows(agent.context_k, cfg.batch, rng);
        let stats = match agent.pairing.critic_family() {
            Family::Gru => update_seq_gru(agent, cfg, &windows, opts, rng)?,
            Family::Dt => update_dt_dt(agent, cfg, &windows, opts, rng)?,
            Family::Ffn => unreachable!("no sequence pairing uses an FFN critic"),
        };
        check_finite(&stats, || truncate_debug(&windows.first()))?;
        Ok(Some(stats))
    } else {
        let batch = match cfg.sample_mode {
            SampleMode::Random => {
                if !buffer.can_sample_transitions(cfg.batch) {
                    return Ok(None);
                }
                buffer.sample_transitions(cfg.batch, rng)
            }
            SampleMode::Sequential => match buffer.sample_contiguous_run(cfg.batch, rng) {
                Some(b) => b,
                None => return Ok(None),
            },
        };
        let stats = update_ffn(agent, cfg, &batch, opts, rng)?;
        check_finite(&stats, || truncate_debug(&batch.first()))?;
        Ok(Some(stats))
    }
}

fn update_ffn(
    agent: &mut Agent,
    cfg: &SacConfig,
    batch: &[Transition],
    opts: &mut Optimizers,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats, SacError> {
    let b = batch.len();
    let alpha = agent.alpha();

    // Targets: fresh next actions from the current policy, clipped double-Q
    // bootstrap from the target critics.
    let mut y = vec![0.0; b];
    {
        let mut g = Graph::new();
        let pa = Bound::frozen(&mut g, &agent.actor);
        let s2 = g.constant(rows_tensor(batch.iter().map(|t| t.next_state), b));
        let (mean, raw) = ffn_actor_heads(&mut g, &pa, &agent.actor_cfg, s2)?;
        let noise = normal_tensor(b, ACT_DIM, rng);
        let pol = sample_policy(&mut g, mean, raw, &noise);
        let pt1 = Bound::frozen(&mut g, &agent.target1);
        let pt2 = Bound::frozen(&mut g, &agent.target2);
        let xq = g.concat_cols(&[s2, pol.action]);
        let q1 = ffn::forward(&mut g, &pt1, &agent.critic_cfg, xq)?;
        let q2 = ffn::forward(&mut g, &pt2, &agent.critic_cfg, xq)?;
        let qmin = g.min_pair(q1, q2);
        for (i, tr) in batch.iter().enumerate() {
            y[i] = sac_backup(
                tr.reward,
                tr.done,
                cfg.gamma,
                g.value(qmin).at(i, 0),
                alpha,
                g.value(pol.log_prob).at(i, 0),
            );
        }
    }

    // Critic regression toward the frozen targets.
    let (l1, l2, grads1, grads2) = {
        let mut g = Graph::new();
        let p1 = Bound::new(&mut g, &agent.critic1);
        let p2 = Bound::new(&mut g, &agent.critic2);
        let mut sa = Vec::with_capacity(b * (OBS_DIM + ACT_DIM));
        for t in batch {
            sa.extend_from_slice(&t.state);
            sa.extend_from_slice(&t.action);
        }
        let x = g.constant(Tensor::from_vec(b, OBS_DIM + ACT_DIM, sa));
        let yc = g.constant(col_tensor(&y));
        let q1 = ffn::forward(&mut g, &p1, &agent.critic_cfg, x)?;
        let q2 = ffn::forward(&mut g, &p2, &agent.critic_cfg, x)?;
        let d1 = g.sub(q1, yc);
        let sq1 = g.square(d1);
        let l1 = g.mean_all(sq1);
        let d2 = g.sub(q2, yc);
        let sq2 = g.square(d2);
        let l2 = g.mean_all(sq2);
        let total = g.add(l1, l2);
        let grads = g.backward(total);
        (
            g.value(l1).scalar_value(),
            g.value(l2).scalar_value(),
            p1.grads(&grads),
            p2.grads(&grads),
        )
    };
    apply_step(&mut agent.critic1, &grads1, &mut opts.critic1, cfg.grad_clip);
    apply_step(&mut agent.critic2, &grads2, &mut opts.critic2, cfg.grad_clip);

    // Actor: reparametrized action through the online critics.
    let (j_pi, logp_vals, actor_grads) = {
        let mut g = Graph::new();
        let pa = Bound::new(&mut g, &agent.actor);
        let s = g.constant(rows_tensor(batch.iter().map(|t| t.state), b));
        let (mean, raw) = ffn_actor_heads(&mut g, &pa, &agent.actor_cfg, s)?;
        let noise = normal_tensor(b, ACT_DIM, rng);
        let pol = sample_policy(&mut g, mean, raw, &noise);
        let pc1 = Bound::frozen(&mut g, &agent.critic1);
        let pc2 = Bound::frozen(&mut g, &agent.critic2);
        let xq = g.concat_cols(&[s, pol.action]);
        let q1 = ffn::forward(&mut g, &pc1, &agent.critic_cfg, xq)?;
        let q2 = ffn::forward(&mut g, &pc2, &agent.critic_cfg, xq)?;
        let qmin = g.min_pair(q1, q2);
        let alp = g.scalar_mul(pol.log_prob, alpha);
        let term = g.sub(alp, qmin);
        let j = g.mean_all(term);
        let grads = g.backward(j);
        (
            g.value(j).scalar_value(),
            g.value(pol.log_prob).data.clone(),
            pa.grads(&grads),
        )
    };
    apply_step(&mut agent.actor, &actor_grads, &mut opts.actor, cfg.grad_clip);

    let alpha_loss = alpha_step(agent, cfg, opts, &logp_vals);
    soft_update(&mut agent.target1, &agent.critic1, cfg.tau)?;
    soft_update(&mut agent.target2, &agent.critic2, cfg.tau)?;

    Ok(UpdateStats {
        critic1_loss: l1,
        critic2_loss: l2,
        actor_loss: j_pi,
        alpha_loss,
        alpha: agent.alpha(),
    })
}

/// Per-step next actions (and log-probs) from the actor on the next-state
/// trajectory of each window. Returns, for every step `j`, a `[b × ACT_DIM]`
/// action var and the log-prob values.
fn next_actions_per_step(
    g: &mut Graph,
    agent: &Agent,
    cfg: &SacConfig,
    windows: &[Window],
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Var>, Vec<Vec<f64>>), SacError> {
    let k = agent.context_k;
    let b = windows.len();
    let pa = Bound::frozen(g, &agent.actor);
    match agent.pairing.actor_family() {
        Family::Gru => {
            let xs: Vec<Var> = (0..k)
                .map(|j| g.constant(rows_tensor(windows.iter().map(|w| w.states[j + 1]), b)))
                .collect();
            let (heads, _) = gru_actor_heads_seq(g, &pa, &agent.actor_cfg, &xs, None)?;
            let mut actions = Vec::with_capacity(k);
            let mut logps = Vec::with_capacity(k);
            for &(mean, raw) in &heads {
                let noise = normal_tensor(b, ACT_DIM, rng);
                let pol = sample_policy(g, mean, raw, &noise);
                actions.push(pol.action);
                logps.push(g.value(pol.log_prob).data.clone());
            }
            Ok((actions, logps))
        }
        Family::Dt => {
            // One trajectory per sample; per-step predictions at state tokens.
            let mut per_sample_actions = Vec::with_capacity(b);
            let mut per_sample_logps = Vec::with_capacity(b);
            for w in windows {
                let (rtg, states, actions, ts) = next_trajectory(w, cfg.return_scale, k);
                let rtg_v = g.constant(rtg);
                let st_v = g.constant(states);
                let ac_v = g.constant(actions);
                let (mean, raw) = dt_actor_heads(g, &pa, &agent.actor_cfg, rtg_v, st_v, ac_v, &ts)?;
                let noise = normal_tensor(k, ACT_DIM, rng);
                let pol = sample_policy(g, mean, raw, &noise);
                per_sample_actions.push(pol.action);
                per_sample_logps.push(g.value(pol.log_prob).data.clone());
            }
            let mut actions = Vec::with_capacity(k);
            let mut logps = Vec::with_capacity(k);
            for j in 0..k {
                let rows: Vec<Var> = per_sample_actions
                    .iter()
                    .map(|&a| g.gather_rows(a, &[j]))
                    .collect();
                actions.push(g.concat_rows(&rows));
                logps.push(per_sample_logps.iter().map(|lp| lp[j]).collect());
            }
            Ok((actions, logps))
        }
        Family::Ffn => unreachable!("sequence targets never use an FFN actor"),
    }
}

/// The shifted (next-state) trajectory of a window for DT inputs.
fn next_trajectory(w: &Window, return_scale: f64, k: usize) -> (Tensor, Tensor, Tensor, Vec<usize>) {
    let mut rtg = Vec::with_capacity(k);
    let mut actions = Vec::with_capacity(k * ACT_DIM);
    for j in 0..k {
        if j + 1 < k {
            rtg.push(w.returns[j + 1] / return_scale);
            actions.extend_from_slice(&w.actions[j + 1]);
        } else {
            rtg.push(w.return_next / return_scale);
            // The action after the window is unknown; it is never attended
            // by any readout row.
            actions.extend_from_slice(&[0.0; ACT_DIM]);
        }
    }
    let states = rows_tensor((1..=k).map(|j| w.states[j]), k);
    let ts = w.timesteps.iter().map(|&t| t + 1).collect();
    (
        Tensor::from_vec(k, 1, rtg),
        states,
        Tensor::from_vec(k, ACT_DIM, actions),
        ts,
    )
}

/// The window's own trajectory for DT inputs.
fn current_trajectory(w: &Window, return_scale: f64, k: usize) -> (Tensor, Tensor, Tensor, Vec<usize>) {
    let rtg: Vec<f64> = w.returns.iter().map(|r| r / return_scale).collect();
    let states = rows_tensor((0..k).map(|j| w.states[j]), k);
    let actions = rows_tensor(w.actions.iter().copied(), k);
    (
        Tensor::from_vec(k, 1, rtg),
        states,
        actions,
        w.timesteps.clone(),
    )
}

/// Per-sample final-step policy sample for the DT actor on its own windows:
/// batched action var `[b × ACT_DIM]` and per-sample log-prob values.
fn dt_actor_final_actions(
    g: &mut Graph,
    agent: &Agent,
    cfg: &SacConfig,
    windows: &[Window],
    rng: &mut ChaCha8Rng,
    pa: &Bound,
) -> Result<(Var, Var), SacError> {
    let k = agent.context_k;
    let mut rows = Vec::with_capacity(windows.len());
    let mut logp_rows = Vec::with_capacity(windows.len());
    for w in windows {
        let (rtg, states, actions, ts) = current_trajectory(w, cfg.return_scale, k);
        let rtg_v = g.constant(rtg);
        let st_v = g.constant(states);
        let ac_v = g.constant(actions);
        let (mean_all, raw_all) = dt_actor_heads(g, pa, &agent.actor_cfg, rtg_v, st_v, ac_v, &ts)?;
        let mean = g.gather_rows(mean_all, &[k - 1]);
        let raw = g.gather_rows(raw_all, &[k - 1]);
        let noise = normal_tensor(1, ACT_DIM, rng);
        let pol = sample_policy(g, mean, raw, &noise);
        rows.push(pol.action);
        logp_rows.push(pol.log_prob);
    }
    Ok((g.concat_rows(&rows), g.concat_rows(&logp_rows)))
}

fn update_seq_gru(
    agent: &mut Agent,
    cfg: &SacConfig,
    windows: &[Window],
    opts: &mut Optimizers,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats, SacError> {
    let k = agent.context_k;
    let b = windows.len();
    let alpha = agent.alpha();

    // Per-timestep backup targets over the next-state sequence.
    let mut y: Vec<Vec<f64>> = vec![vec![0.0; b]; k];
    {
        let mut g = Graph::new();
        let (a2, logp2) = next_actions_per_step(&mut g, agent, cfg, windows, rng)?;
        let pt1 = Bound::frozen(&mut g, &agent.target1);
        let pt2 = Bound::frozen(&mut g, &agent.target2);
        let xs2: Vec<Var> = (0..k)
            .map(|j| {
                let ns = g.constant(rows_tensor(windows.iter().map(|w| w.states[j + 1]), b));
                g.concat_cols(&[ns, a2[j]])
            })
            .collect();
        let q1 = gru_critic_seq(&mut g, &pt1, &agent.critic_cfg, &xs2)?;
        let q2 = gru_critic_seq(&mut g, &pt2, &agent.critic_cfg, &xs2)?;
        for j in 0..k {
            for (i, w) in windows.iter().enumerate() {
                let mq = g.value(q1[j]).at(i, 0).min(g.value(q2[j]).at(i, 0));
                y[j][i] = sac_backup(w.rewards[j], w.dones[j], cfg.gamma, mq, alpha, logp2[j][i]);
            }
        }
    }

    // Critic loss: squared error summed across the window, batch-averaged.
    let (l1, l2, grads1, grads2) = {
        let mut g = Graph::new();
        let p1 = Bound::new(&mut g, &agent.critic1);
        let p2 = Bound::new(&mut g, &agent.critic2);
        let xs: Vec<Var> = (0..k)
            .map(|j| {
                let mut data = Vec::with_capacity(b * (OBS_DIM + ACT_DIM));
                for w in windows {
                    data.extend_from_slice(&w.states[j]);
                    data.extend_from_slice(&w.actions[j]);
                }
                g.constant(Tensor::from_vec(b, OBS_DIM + ACT_DIM, data))
            })
            .collect();
        let q1 = gru_critic_seq(&mut g, &p1, &agent.critic_cfg, &xs)?;
        let q2 = gru_critic_seq(&mut g, &p2, &agent.critic_cfg, &xs)?;
        let mut sum1: Option<Var> = None;
        let mut sum2: Option<Var> = None;
        for j in 0..k {
            let yc = g.constant(col_tensor(&y[j]));
            let d1 = g.sub(q1[j], yc);
            let s1 = g.square(d1);
            let d2 = g.sub(q2[j], yc);
            let s2 = g.square(d2);
            sum1 = Some(match sum1 {
                Some(acc) => g.add(acc, s1),
                None => s1,
            });
            sum2 = Some(match sum2 {
                Some(acc) => g.add(acc, s2),
                None => s2,
            });
        }
        let l1 = g.mean_all(sum1.unwrap());
        let l2 = g.mean_all(sum2.unwrap());
        let total = g.add(l1, l2);
        let grads = g.backward(total);
        (
            g.value(l1).scalar_value(),
            g.value(l2).scalar_value(),
            p1.grads(&grads),
            p2.grads(&grads),
        )
    };
    apply_step(&mut agent.critic1, &grads1, &mut opts.critic1, cfg.grad_clip);
    apply_step(&mut agent.critic2, &grads2, &mut opts.critic2, cfg.grad_clip);

    // Actor and temperature use the final timestep's critic value and logπ.
    let (j_pi, logp_vals, actor_grads) = {
        let mut g = Graph::new();
        let pa = Bound::new(&mut g, &agent.actor);
        let (final_action, logp_node): (Var, Var) = match agent.pairing.actor_family() {
            Family::Gru => {
                let xs: Vec<Var> = (0..k)
                    .map(|j| g.constant(rows_tensor(windows.iter().map(|w| w.states[j]), b)))
                    .collect();
                let (heads, _) = gru_actor_heads_seq(&mut g, &pa, &agent.actor_cfg, &xs, None)?;
                let (mean, raw) = *heads.last().unwrap();
                let noise = normal_tensor(b, ACT_DIM, rng);
                let pol = sample_policy(&mut g, mean, raw, &noise);
                (pol.action, pol.log_prob)
            }
            Family::Dt => dt_actor_final_actions(&mut g, agent, cfg, windows, rng, &pa)?,
            Family::Ffn => unreachable!(),
        };
        let pc1 = Bound::frozen(&mut g, &agent.critic1);
        let pc2 = Bound::frozen(&mut g, &agent.critic2);
        let xs: Vec<Var> = (0..k)
            .map(|j| {
                let s = g.constant(rows_tensor(windows.iter().map(|w| w.states[j]), b));
                if j + 1 < k {
                    let a = g.constant(rows_tensor(windows.iter().map(|w| w.actions[j]), b));
                    g.concat_cols(&[s, a])
                } else {
                    g.concat_cols(&[s, final_action])
                }
            })
            .collect();
        let q1 = gru_critic_seq(&mut g, &pc1, &agent.critic_cfg, &xs)?;
        let q2 = gru_critic_seq(&mut g, &pc2, &agent.critic_cfg, &xs)?;
        let qmin = g.min_pair(*q1.last().unwrap(), *q2.last().unwrap());
        let alp = g.scalar_mul(logp_node, alpha);
        let term = g.sub(alp, qmin);
        let j = g.mean_all(term);
        let grads = g.backward(j);
        (
            g.value(j).scalar_value(),
            g.value(logp_node).data.clone(),
            pa.grads(&grads),
        )
    };
    apply_step(&mut agent.actor, &actor_grads, &mut opts.actor, cfg.grad_clip);

    let alpha_loss = alpha_step(agent, cfg, opts, &logp_vals);
    soft_update(&mut agent.target1, &agent.critic1, cfg.tau)?;
    soft_update(&mut agent.target2, &agent.critic2, cfg.tau)?;

    Ok(UpdateStats {
        critic1_loss: l1,
        critic2_loss: l2,
        actor_loss: j_pi,
        alpha_loss,
        alpha: agent.alpha(),
    })
}

fn update_dt_dt(
    agent: &mut Agent,
    cfg: &SacConfig,
    windows: &[Window],
    opts: &mut Optimizers,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats, SacError> {
    let k = agent.context_k;
    let b = windows.len();
    let alpha = agent.alpha();

    // Targets: each target network's predicted next return on the shifted
    // trajectory (taken literally: no reward term).
    let mut y1 = vec![0.0; b];
    let mut y2 = vec![0.0; b];
    {
        let mut g = Graph::new();
        let pt1 = Bound::frozen(&mut g, &agent.target1);
        let pt2 = Bound::frozen(&mut g, &agent.target2);
        for (i, w) in windows.iter().enumerate() {
            let (rtg, states, actions, ts) = next_trajectory(w, cfg.return_scale, k);
            let rtg_v = g.constant(rtg);
            let st_v = g.constant(states);
            let ac_v = g.constant(actions);
            let p1 = dt::forward_vars(&mut g, &pt1, &agent.critic_cfg, rtg_v, st_v, ac_v, &ts, Readout::Actions)?;
            let p2 = dt::forward_vars(&mut g, &pt2, &agent.critic_cfg, rtg_v, st_v, ac_v, &ts, Readout::Actions)?;
            y1[i] = g.value(p1).at(k - 1, 0);
            y2[i] = g.value(p2).at(k - 1, 0);
        }
    }

    // Critic regression on the final-step predicted next return.
    let (l1, l2, grads1, grads2) = {
        let mut g = Graph::new();
        let p1 = Bound::new(&mut g, &agent.critic1);
        let p2 = Bound::new(&mut g, &agent.critic2);
        let mut rows1 = Vec::with_capacity(b);
        let mut rows2 = Vec::with_capacity(b);
        for w in windows {
            let (rtg, states, actions, ts) = current_trajectory(w, cfg.return_scale, k);
            let rtg_v = g.constant(rtg);
            let st_v = g.constant(states);
            let ac_v = g.constant(actions);
            let o1 = dt::forward_vars(&mut g, &p1, &agent.critic_cfg, rtg_v, st_v, ac_v, &ts, Readout::Actions)?;
            let o2 = dt::forward_vars(&mut g, &p2, &agent.critic_cfg, rtg_v, st_v, ac_v, &ts, Readout::Actions)?;
            rows1.push(g.gather_rows(o1, &[k - 1]));
            rows2.push(g.gather_rows(o2, &[k - 1]));
        }
        let q1 = g.concat_rows(&rows1);
        let q2 = g.concat_rows(&rows2);
        let yc1 = g.constant(col_tensor(&y1));
        let yc2 = g.constant(col_tensor(&y2));
        let d1 = g.sub(q1, yc1);
        let sq1 = g.square(d1);
        let l1 = g.mean_all(sq1);
        let d2 = g.sub(q2, yc2);
        let sq2 = g.square(d2);
        let l2 = g.mean_all(sq2);
        let total = g.add(l1, l2);
        let grads = g.backward(total);
        (
            g.value(l1).scalar_value(),
            g.value(l2).scalar_value(),
            p1.grads(&grads),
            p2.grads(&grads),
        )
    };
    apply_step(&mut agent.critic1, &grads1, &mut opts.critic1, cfg.grad_clip);
    apply_step(&mut agent.critic2, &grads2, &mut opts.critic2, cfg.grad_clip);

    // Actor: final-step sampled action substituted into the critic
    // trajectory; Q is the critic's predicted next return at that token.
    let (j_pi, logp_vals, actor_grads) = {
        let mut g = Graph::new();
        let pa = Bound::new(&mut g, &agent.actor);
        let pc1 = Bound::frozen(&mut g, &agent.critic1);
        let pc2 = Bound::frozen(&mut g, &agent.critic2);
        let mut q_rows = Vec::with_capacity(b);
        let mut logp_rows = Vec::with_capacity(b);
        for w in windows {
            let (rtg, states, actions, ts) = current_trajectory(w, cfg.return_scale, k);
            let rtg_v = g.constant(rtg.clone());
            let st_v = g.constant(states.clone());
            let ac_v = g.constant(actions.clone());
            let (mean_all, raw_all) =
                dt_actor_heads(&mut g, &pa, &agent.actor_cfg, rtg_v, st_v, ac_v, &ts)?;
            let mean = g.gather_rows(mean_all, &[k - 1]);
            let raw = g.gather_rows(raw_all, &[k - 1]);
            let noise = normal_tensor(1, ACT_DIM, rng);
            let pol = sample_policy(&mut g, mean, raw, &noise);
            logp_rows.push(pol.log_prob);
            // Critic trajectory with the sampled final action.
            let act_var = if k > 1 {
                let prefix = g.constant(rows_tensor(w.actions[..k - 1].iter().copied(), k - 1));
                g.concat_rows(&[prefix, pol.action])
            } else {
                pol.action
            };
            let rtg_v2 = g.constant(rtg);
            let st_v2 = g.constant(states);
            let o1 = dt::forward_vars(&mut g, &pc1, &agent.critic_cfg, rtg_v2, st_v2, act_var, &ts, Readout::Actions)?;
            let o2 = dt::forward_vars(&mut g, &pc2, &agent.critic_cfg, rtg_v2, st_v2, act_var, &ts, Readout::Actions)?;
            let f1 = g.gather_rows(o1, &[k - 1]);
            let f2 = g.gather_rows(o2, &[k - 1]);
            q_rows.push(g.min_pair(f1, f2));
        }
        let q = g.concat_rows(&q_rows);
        let logp = g.concat_rows(&logp_rows);
        let alp = g.scalar_mul(logp, alpha);
        let term = g.sub(alp, q);
        let j = g.mean_all(term);
        let grads = g.backward(j);
        (
            g.value(j).scalar_value(),
            g.value(logp).data.clone(),
            pa.grads(&grads),
        )
    };
    apply_step(&mut agent.actor, &actor_grads, &mut opts.actor, cfg.grad_clip);

    let alpha_loss = alpha_step(agent, cfg, opts, &logp_vals);
    soft_update(&mut agent.target1, &agent.critic1, cfg.tau)?;
    soft_update(&mut agent.target2, &agent.critic2, cfg.tau)?;

    Ok(UpdateStats {
        critic1_loss: l1,
        critic2_loss: l2,
        actor_loss: j_pi,
        alpha_loss,
        alpha: agent.alpha(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::grad_check;
    use crate::sac::{actor_decls, critic_decls, Pairing};
    use rand::Rng;
    use rand::SeedableRng;

    fn small_dtgru_agent() -> Agent {
        let mut agent = Agent::new(Pairing::DtGru, 2, 5).unwrap();
        agent.actor_cfg.hidden = 32;
        agent.actor_cfg.max_timestep = 16;
        agent.actor = ParamSet::init(&actor_decls(Pairing::DtGru, &agent.actor_cfg), 5);
        agent.critic_cfg.hidden = 16;
        agent.critic1 = ParamSet::init(&critic_decls(Pairing::DtGru, &agent.critic_cfg), 6);
        agent.critic2 = ParamSet::init(&critic_decls(Pairing::DtGru, &agent.critic_cfg), 7);
        agent.target1 = agent.critic1.clone();
        agent.target2 = agent.critic2.clone();
        agent
    }

    fn fake_windows(k: usize, n: usize, seed: u64) -> Vec<Window> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let states = (0..=k)
                    .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.3])
                    .collect();
                let actions = (0..k)
                    .map(|_| [rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9)])
                    .collect();
                let rewards: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..0.0)).collect();
                let total: f64 = rewards.iter().sum();
                let mut returns = Vec::new();
                let mut r = total;
                for &rew in &rewards {
                    returns.push(r);
                    r -= rew;
                }
                Window {
                    episode_id: i as u64,
                    start: 1,
                    states,
                    actions,
                    rewards,
                    returns,
                    return_next: r,
                    dones: vec![false; k],
                    timesteps: (1..=k).collect(),
                }
            })
            .collect()
    }

    /// The DT-actor + GRU-critic actor objective exactly as the update
    /// builds it, with a frozen noise seed so the loss is a deterministic
    /// function of the actor parameters.
    fn dtgru_actor_objective(
        agent: &Agent,
        cfg: &SacConfig,
        windows: &[Window],
        actor: &ParamSet,
    ) -> (f64, ParamSet) {
        let k = agent.context_k;
        let b = windows.len();
        let mut g = Graph::new();
        let pa = Bound::new(&mut g, actor);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(777);
        let (final_action, logp) =
            dt_actor_final_actions(&mut g, agent, cfg, windows, &mut noise_rng, &pa).unwrap();
        let pc1 = Bound::frozen(&mut g, &agent.critic1);
        let pc2 = Bound::frozen(&mut g, &agent.critic2);
        let xs: Vec<Var> = (0..k)
            .map(|j| {
                let s = g.constant(rows_tensor(windows.iter().map(|w| w.states[j]), b));
                if j + 1 < k {
                    let a = g.constant(rows_tensor(windows.iter().map(|w| w.actions[j]), b));
                    g.concat_cols(&[s, a])
                } else {
                    g.concat_cols(&[s, final_action])
                }
            })
            .collect();
        let q1 = gru_critic_seq(&mut g, &pc1, &agent.critic_cfg, &xs).unwrap();
        let q2 = gru_critic_seq(&mut g, &pc2, &agent.critic_cfg, &xs).unwrap();
        let qmin = g.min_pair(*q1.last().unwrap(), *q2.last().unwrap());
        let alp = g.scalar_mul(logp, agent.alpha());
        let term = g.sub(alp, qmin);
        let j = g.mean_all(term);
        let grads = g.backward(j);
        (g.value(j).scalar_value(), pa.grads(&grads))
    }

    #[test]
    fn dtgru_actor_loss_gradient_is_correct() {
        let agent = small_dtgru_agent();
        let cfg = SacConfig::for_pairing(Pairing::DtGru);
        let windows = fake_windows(2, 2, 99);
        let (_, analytic) = dtgru_actor_objective(&agent, &cfg, &windows, &agent.actor);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = grad_check(
            |p| Ok(dtgru_actor_objective(&agent, &cfg, &windows, p).0),
            &agent.actor,
            &analytic,
            1e-5,
            150,
            &mut rng,
        )
        .unwrap();
        assert!(err < 1e-4, "actor-loss gradient max rel error {err:.3e}");
    }

    /// Same check for the FFN path (shared squashed-Gaussian machinery).
    fn ffn_actor_objective(
        agent: &Agent,
        batch: &[Transition],
        actor: &ParamSet,
    ) -> (f64, ParamSet) {
        let b = batch.len();
        let mut g = Graph::new();
        let pa = Bound::new(&mut g, actor);
        let s = g.constant(rows_tensor(batch.iter().map(|t| t.state), b));
        let (mean, raw) = ffn_actor_heads(&mut g, &pa, &agent.actor_cfg, s).unwrap();
        let noise = {
            let mut noise_rng = ChaCha8Rng::seed_from_u64(778);
            normal_tensor(b, ACT_DIM, &mut noise_rng)
        };
        let pol = sample_policy(&mut g, mean, raw, &noise);
        let pc1 = Bound::frozen(&mut g, &agent.critic1);
        let pc2 = Bound::frozen(&mut g, &agent.critic2);
        let xq = g.concat_cols(&[s, pol.action]);
        let q1 = ffn::forward(&mut g, &pc1, &agent.critic_cfg, xq).unwrap();
        let q2 = ffn::forward(&mut g, &pc2, &agent.critic_cfg, xq).unwrap();
        let qmin = g.min_pair(q1, q2);
        let alp = g.scalar_mul(pol.log_prob, agent.alpha());
        let term = g.sub(alp, qmin);
        let j = g.mean_all(term);
        let grads = g.backward(j);
        (g.value(j).scalar_value(), pa.grads(&grads))
    }

    #[test]
    fn ffn_actor_loss_gradient_is_correct() {
        let mut agent = Agent::new(Pairing::FfnFfn, 1, 9).unwrap();
        agent.actor_cfg.hidden = 24;
        agent.actor = ParamSet::init(&actor_decls(Pairing::FfnFfn, &agent.actor_cfg), 9);
        agent.critic_cfg.hidden = 24;
        agent.critic1 = ParamSet::init(&critic_decls(Pairing::FfnFfn, &agent.critic_cfg), 10);
        agent.critic2 = ParamSet::init(&critic_decls(Pairing::FfnFfn, &agent.critic_cfg), 11);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let batch: Vec<Transition> = (0..4)
            .map(|_| Transition {
                state: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.1],
                action: [0.0, 0.0],
                reward: -1.0,
                next_state: [0.0, 0.0, 0.0],
                done: false,
            })
            .collect();
        let (_, analytic) = ffn_actor_objective(&agent, &batch, &agent.actor);
        let err = grad_check(
            |p| Ok(ffn_actor_objective(&agent, &batch, p).0),
            &agent.actor,
            &analytic,
            1e-5,
            150,
            &mut rng,
        )
        .unwrap();
        assert!(err < 1e-4, "FFN actor-loss gradient max rel error {err:.3e}");
    }

    #[test]
    fn backup_terminal_and_degenerate_gamma() {
        assert_eq!(sac_backup(3.5, true, 0.99, 100.0, 0.2, -1.0), 3.5);
        assert_eq!(sac_backup(3.5, false, 0.0, 100.0, 0.2, -1.0), 3.5);
    }

    #[test]
    fn backup_hand_arithmetic() {
        // Two-step hand case: y = r + γ(minQ − α·logπ).
        let y = sac_backup(-2.0, false, 0.9, 5.0, 0.5, -1.2);
        assert!((y - (-2.0 + 0.9 * (5.0 - 0.5 * -1.2))).abs() < 1e-15);
        assert!((y - 3.04).abs() < 1e-12);
    }

    #[test]
    fn loss_is_zero_at_fixed_point() {
        let q = vec![1.0, -2.0, 0.5];
        assert_eq!(mse_loss(&q, &q), 0.0);
        let qs = vec![q.clone(), q.clone()];
        assert_eq!(seq_sum_loss(&qs, &qs), 0.0);
    }

    #[test]
    fn k1_seq_loss_equals_ffn_loss() {
        let q = vec![0.3, -1.7, 2.5, 0.0];
        let y = vec![0.1, -1.0, 2.0, 0.25];
        let q_seq: Vec<Vec<f64>> = q.iter().map(|&v| vec![v]).collect();
        let y_seq: Vec<Vec<f64>> = y.iter().map(|&v| vec![v]).collect();
        let diff = (seq_sum_loss(&q_seq, &y_seq) - mse_loss(&q, &y)).abs();
        assert!(diff < 1e-12, "diff {diff}");
    }

    #[test]
    fn constant_offset_scales_with_k() {
        let c = 0.7;
        let k = 5;
        let b = 8;
        let y: Vec<Vec<f64>> = (0..b).map(|i| vec![i as f64; k]).collect();
        let q: Vec<Vec<f64>> = y.iter().map(|row| row.iter().map(|v| v + c).collect()).collect();
        let seq = seq_sum_loss(&q, &y);
        assert!((seq - k as f64 * c * c).abs() < 1e-12);
        let y1: Vec<f64> = (0..b).map(|i| i as f64).collect();
        let q1: Vec<f64> = y1.iter().map(|v| v + c).collect();
        assert!((mse_loss(&q1, &y1) - c * c).abs() < 1e-12);
    }

    #[test]
    fn actor_objective_hand_case() {
        // α = 0 reduces to −E[Q].
        let q = vec![2.0, 4.0];
        let lp = vec![-1.0, -3.0];
        assert_eq!(actor_objective(0.0, &lp, &q), -3.0);
        // Single-sample hand arithmetic.
        let j = actor_objective(0.5, &[-1.2], &[2.0]);
        assert!((j - (0.5 * -1.2 - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn alpha_loss_zero_at_target_entropy() {
        let h = -2.0;
        let lp = vec![2.0, 2.0];
        assert_eq!(alpha_loss_value(0.7, &lp, h), 0.0);
        let single = alpha_loss_value(0.5, &[-1.0], -2.0);
        assert!((single - (-0.5 * (-1.0 + -2.0))).abs() < 1e-15);
        assert!((single - 1.5).abs() < 1e-15);
    }
}

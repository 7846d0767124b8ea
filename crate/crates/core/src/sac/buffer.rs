//! Episode-structured replay storage.
//!
//! Episodes are stored whole so sampled windows are always time-contiguous
//! and never cross an episode boundary. Eviction drops oldest episodes first,
//! keeping every stored episode intact.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SacError;

pub const OBS_DIM: usize = 3;
pub const ACT_DIM: usize = 2;

/// One finished episode. `states` has one more entry than the step arrays:
/// the terminal observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeData {
    pub id: u64,
    pub states: Vec<[f64; OBS_DIM]>,
    pub actions: Vec<[f64; ACT_DIM]>,
    pub rewards: Vec<f64>,
    /// Return-to-go per step, built by the forward recursion
    /// `R_{t+1} = R_t − r_t` from `R_0 = Σ rewards`, so the recursion holds
    /// exactly on stored values.
    pub returns: Vec<f64>,
    pub dones: Vec<bool>,
}

impl EpisodeData {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Return-to-go after the final stored step.
    pub fn return_after(&self, t: usize) -> f64 {
        self.returns[t] - self.rewards[t]
    }
}

/// A single-step transition sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: [f64; OBS_DIM],
    pub action: [f64; ACT_DIM],
    pub reward: f64,
    pub next_state: [f64; OBS_DIM],
    pub done: bool,
}

/// A contiguous window of `k` steps from one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub episode_id: u64,
    pub start: usize,
    /// `k + 1` states: the window's steps plus the following observation.
    pub states: Vec<[f64; OBS_DIM]>,
    pub actions: Vec<[f64; ACT_DIM]>,
    pub rewards: Vec<f64>,
    pub returns: Vec<f64>,
    /// Return-to-go entering the step after the window.
    pub return_next: f64,
    pub dones: Vec<bool>,
    /// Absolute in-episode timestep of each window step.
    pub timesteps: Vec<usize>,
}

impl Window {
    pub fn k(&self) -> usize {
        self.rewards.len()
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryBuffer {
    episodes: VecDeque<EpisodeData>,
    capacity_steps: usize,
    total_steps: usize,
    next_id: u64,
}

impl TrajectoryBuffer {
    pub fn new(capacity_steps: usize) -> Self {
        Self {
            episodes: VecDeque::new(),
            capacity_steps: capacity_steps.max(1),
            total_steps: 0,
            next_id: 0,
        }
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn num_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn episodes(&self) -> impl Iterator<Item = &EpisodeData> {
        self.episodes.iter()
    }

    /// Store a finished episode and compute its return-to-go sequence.
    pub fn push_episode(
        &mut self,
        states: Vec<[f64; OBS_DIM]>,
        actions: Vec<[f64; ACT_DIM]>,
        rewards: Vec<f64>,
        dones: Vec<bool>,
    ) -> Result<u64, SacError> {
        let t = rewards.len();
        if t == 0 {
            return Err(SacError::Config("cannot store an empty episode".into()));
        }
        if states.len() != t + 1 || actions.len() != t || dones.len() != t {
            return Err(SacError::Config(format!(
                "episode arrays inconsistent: {} states, {} actions, {} rewards, {} dones",
                states.len(),
                actions.len(),
                t,
                dones.len()
            )));
        }
        let total: f64 = rewards.iter().sum();
        let mut returns = Vec::with_capacity(t);
        let mut r = total;
        for &rew in &rewards {
            returns.push(r);
            r -= rew;
        }
        let id = self.next_id;
        self.next_id += 1;
        self.total_steps += t;
        self.episodes.push_back(EpisodeData {
            id,
            states,
            actions,
            rewards,
            returns,
            dones,
        });
        while self.total_steps > self.capacity_steps && self.episodes.len() > 1 {
            if let Some(old) = self.episodes.pop_front() {
                self.total_steps -= old.len();
            }
        }
        Ok(id)
    }

    pub fn can_sample_transitions(&self, batch: usize) -> bool {
        self.total_steps >= batch
    }

    /// Uniform single-transition sampling across all stored steps.
    pub fn sample_transitions(&self, batch: usize, rng: &mut ChaCha8Rng) -> Vec<Transition> {
        let mut out = Vec::with_capacity(batch);
        for _ in 0..batch {
            let mut idx = rng.gen_range(0..self.total_steps);
            for ep in &self.episodes {
                if idx < ep.len() {
                    out.push(Transition {
                        state: ep.states[idx],
                        action: ep.actions[idx],
                        reward: ep.rewards[idx],
                        next_state: ep.states[idx + 1],
                        done: ep.dones[idx],
                    });
                    break;
                }
                idx -= ep.len();
            }
        }
        out
    }

    /// A time-contiguous run of `len` transitions from one episode, for the
    /// sequential-sampling ablation arm.
    pub fn sample_contiguous_run(&self, len: usize, rng: &mut ChaCha8Rng) -> Option<Vec<Transition>> {
        let eligible: Vec<&EpisodeData> =
            self.episodes.iter().filter(|e| e.len() >= len).collect();
        if eligible.is_empty() {
            return None;
        }
        let ep = eligible[rng.gen_range(0..eligible.len())];
        let start = rng.gen_range(0..=ep.len() - len);
        Some(
            (start..start + len)
                .map(|i| Transition {
                    state: ep.states[i],
                    action: ep.actions[i],
                    reward: ep.rewards[i],
                    next_state: ep.states[i + 1],
                    done: ep.dones[i],
                })
                .collect(),
        )
    }

    fn window_count(&self, k: usize) -> usize {
        self.episodes
            .iter()
            .map(|e| e.len().saturating_sub(k - 1))
            .sum()
    }

    pub fn can_sample_windows(&self, k: usize, batch: usize) -> bool {
        self.window_count(k) >= batch
    }

    /// Sample `batch` length-`k` windows, the start step uniform over all
    /// valid (episode, start) pairs.
    pub fn sample_windows(&self, k: usize, batch: usize, rng: &mut ChaCha8Rng) -> Vec<Window> {
        let total = self.window_count(k);
        let mut out = Vec::with_capacity(batch);
        if total == 0 {
            return out;
        }
        for _ in 0..batch {
            let mut idx = rng.gen_range(0..total);
            for ep in &self.episodes {
                let n = ep.len().saturating_sub(k - 1);
                if idx < n {
                    out.push(self.cut_window(ep, idx, k));
                    break;
                }
                idx -= n;
            }
        }
        out
    }

    fn cut_window(&self, ep: &EpisodeData, start: usize, k: usize) -> Window {
        let end = start + k;
        Window {
            episode_id: ep.id,
            start,
            states: ep.states[start..=end].to_vec(),
            actions: ep.actions[start..end].to_vec(),
            rewards: ep.rewards[start..end].to_vec(),
            returns: ep.returns[start..end].to_vec(),
            return_next: ep.return_after(end - 1),
            dones: ep.dones[start..end].to_vec(),
            timesteps: (start..end).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn episode(buf: &mut TrajectoryBuffer, t: usize, offset: f64) -> u64 {
        let states = (0..=t).map(|i| [i as f64 + offset, 0.0, 0.0]).collect();
        let actions = (0..t).map(|i| [i as f64, -(i as f64)]).collect();
        let rewards = (0..t).map(|i| offset - i as f64 * 0.3).collect();
        let mut dones = vec![false; t];
        dones[t - 1] = true;
        buf.push_episode(states, actions, rewards, dones).unwrap()
    }

    #[test]
    fn returns_satisfy_recursion_exactly() {
        let mut buf = TrajectoryBuffer::new(10_000);
        episode(&mut buf, 57, 1.37);
        let ep = buf.episodes().next().unwrap();
        for t in 0..ep.len() - 1 {
            assert_eq!(
                ep.returns[t + 1],
                ep.returns[t] - ep.rewards[t],
                "recursion at t={t}"
            );
        }
        // And the suffix-sum oracle within float drift.
        for t in 0..ep.len() {
            let suffix: f64 = ep.rewards[t..].iter().sum();
            assert!((ep.returns[t] - suffix).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn windows_are_contiguous_and_single_episode() {
        let mut buf = TrajectoryBuffer::new(10_000);
        for i in 0..7 {
            episode(&mut buf, 12 + i, i as f64);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for w in buf.sample_windows(5, 500, &mut rng) {
            assert_eq!(w.k(), 5);
            for (j, &ts) in w.timesteps.iter().enumerate() {
                assert_eq!(ts, w.start + j);
            }
            // The window's data must match the owning episode slice.
            let ep = buf.episodes().find(|e| e.id == w.episode_id).unwrap();
            assert_eq!(&ep.actions[w.start..w.start + 5], &w.actions[..]);
            assert_eq!(&ep.states[w.start..=w.start + 5], &w.states[..]);
        }
    }

    #[test]
    fn eviction_drops_whole_oldest_episodes() {
        let mut buf = TrajectoryBuffer::new(70);
        let first = episode(&mut buf, 30, 0.0);
        episode(&mut buf, 30, 1.0);
        assert_eq!(buf.num_episodes(), 2);
        episode(&mut buf, 30, 2.0);
        assert!(buf.total_steps() <= 70);
        assert!(buf.episodes().all(|e| e.id != first), "oldest evicted first");
        assert!(buf.episodes().all(|e| e.len() == 30), "episodes stay whole");
    }

    #[test]
    fn short_episodes_are_skipped_by_window_sampling() {
        let mut buf = TrajectoryBuffer::new(10_000);
        episode(&mut buf, 3, 0.0);
        assert!(!buf.can_sample_windows(5, 1));
        episode(&mut buf, 9, 1.0);
        assert!(buf.can_sample_windows(5, 1));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for w in buf.sample_windows(5, 64, &mut rng) {
            assert_ne!(w.episode_id, 0, "length-3 episode cannot yield k=5 windows");
        }
    }

    #[test]
    fn contiguous_run_is_in_order() {
        let mut buf = TrajectoryBuffer::new(10_000);
        episode(&mut buf, 40, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let run = buf.sample_contiguous_run(8, &mut rng).unwrap();
        for pair in run.windows(2) {
            assert_eq!(pair[0].next_state, pair[1].state);
        }
    }

    #[test]
    fn empty_episode_rejected() {
        let mut buf = TrajectoryBuffer::new(100);
        assert!(buf
            .push_episode(vec![[0.0; 3]], vec![], vec![], vec![])
            .is_err());
    }
}

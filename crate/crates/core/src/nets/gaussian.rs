//! Squashed-Gaussian policy head: tanh-bounded actions with the
//! change-of-variables log-probability correction.

use super::graph::{Graph, Var};
use super::tensor::Tensor;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Epsilon inside the squash correction log.
pub const SQUASH_EPS: f64 = 1e-6;

const HALF_LN_2PI: f64 = 0.9189385332046727;

/// Differentiable nodes of one sampled policy output.
pub struct PolicyNodes {
    pub mean: Var,
    /// Effective (clamped) log standard deviation.
    pub log_std: Var,
    /// Squashed action in (-1, 1) per dimension.
    pub action: Var,
    /// Per-sample log probability, `[batch × 1]`.
    pub log_prob: Var,
}

/// Smoothly clamp a raw log-std into `[LOG_STD_MIN, LOG_STD_MAX]` via a tanh
/// rescale, keeping gradients alive at the bounds.
pub fn soft_clamp_log_std(g: &mut Graph, raw: Var) -> Var {
    let t = g.tanh(raw);
    let shifted = g.scalar_add(t, 1.0);
    let scaled = g.scalar_mul(shifted, 0.5 * (LOG_STD_MAX - LOG_STD_MIN));
    g.scalar_add(scaled, LOG_STD_MIN)
}

/// Reparametrized sample through the tanh squash.
///
/// `u = mean + exp(log_std)·noise`, `action = tanh(u)`,
/// `log_prob = Σ_dim [ log N(u; mean, std) − log(1 − tanh²(u) + ε) ]`.
/// `noise` is a fixed standard-normal draw, `[batch × dims]`.
pub fn gaussian_head(g: &mut Graph, mean: Var, log_std: Var, noise: &Tensor) -> PolicyNodes {
    let noise_c = g.constant(noise.clone());
    let std = g.exp(log_std);
    let scaled_noise = g.mul(std, noise_c);
    let u = g.add(mean, scaled_noise);
    // tanh saturates to exactly ±1 in f64 for |u| ≳ 19; keep the action
    // strictly interior so downstream atanh/log terms stay well defined.
    let squashed = g.tanh(u);
    let action = g.clamp_unit(squashed, 1e-12);

    // log N(u; mean, std) with u − mean = std·noise identically:
    // −noise²/2 − log_std − ½·ln 2π. The first and last terms are constants.
    let const_part = g.constant(noise.map(|n| -0.5 * n * n - HALF_LN_2PI));
    let neg_log_std = g.scalar_mul(log_std, -1.0);
    let normal_part = g.add(const_part, neg_log_std);

    let a_sq = g.square(action);
    let neg_a_sq = g.scalar_mul(a_sq, -1.0);
    let one_minus = g.scalar_add(neg_a_sq, 1.0 + SQUASH_EPS);
    let correction = g.ln(one_minus);
    let per_dim = g.sub(normal_part, correction);
    let log_prob = g.sum_cols(per_dim);

    PolicyNodes {
        mean,
        log_std,
        action,
        log_prob,
    }
}

/// Evaluation-mode action: the squashed mean.
pub fn deterministic_action(g: &mut Graph, mean: Var) -> Var {
    g.tanh(mean)
}

//! Decision transformer: causal self-attention over interleaved
//! (return-to-go, state, action) token triples.
//!
//! Each modality has its own linear embedding; a learned timestep embedding
//! is added to all three tokens of a step. Blocks are pre-norm: attention and
//! a position-wise feedforward, each behind a residual connection, with a
//! final layer norm before readout. Per-step predictions are read at the
//! state tokens (actor) or action tokens (return-predicting critic).

use super::graph::{Graph, Var};
use super::params::{ParamDecl, ParamKind};
use super::tensor::Tensor;
use super::{Bound, NetConfig, NetsError};

/// Which token column carries the per-step prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    /// Predict from state tokens (action prediction).
    States,
    /// Predict from action tokens (next-return prediction).
    Actions,
}

pub fn decls(cfg: &NetConfig) -> Vec<ParamDecl> {
    let d = cfg.hidden;
    let ff = cfg.ff_expansion * d;
    let mut out = vec![
        ParamDecl::new("embed_r.w", d, 1, ParamKind::Linear),
        ParamDecl::new("embed_r.b", 1, d, ParamKind::Bias),
        ParamDecl::new("embed_s.w", d, cfg.state_dim, ParamKind::Linear),
        ParamDecl::new("embed_s.b", 1, d, ParamKind::Bias),
        ParamDecl::new("embed_a.w", d, cfg.action_dim, ParamKind::Linear),
        ParamDecl::new("embed_a.b", 1, d, ParamKind::Bias),
        ParamDecl::new("embed_t", cfg.max_timestep, d, ParamKind::Embedding),
        ParamDecl::new("ln_e.g", 1, d, ParamKind::NormGain),
        ParamDecl::new("ln_e.b", 1, d, ParamKind::Bias),
    ];
    for blk in 0..cfg.depth {
        for (n, r, c, k) in [
            ("attn.wq", d, d, ParamKind::Linear),
            ("attn.bq", 1, d, ParamKind::Bias),
            ("attn.wk", d, d, ParamKind::Linear),
            ("attn.bk", 1, d, ParamKind::Bias),
            ("attn.wv", d, d, ParamKind::Linear),
            ("attn.bv", 1, d, ParamKind::Bias),
            ("attn.wo", d, d, ParamKind::Linear),
            ("attn.bo", 1, d, ParamKind::Bias),
            ("ln1.g", 1, d, ParamKind::NormGain),
            ("ln1.b", 1, d, ParamKind::Bias),
            ("mlp.w1", ff, d, ParamKind::Linear),
            ("mlp.b1", 1, ff, ParamKind::Bias),
            ("mlp.w2", d, ff, ParamKind::Linear),
            ("mlp.b2", 1, d, ParamKind::Bias),
            ("ln2.g", 1, d, ParamKind::NormGain),
            ("ln2.b", 1, d, ParamKind::Bias),
        ] {
            out.push(ParamDecl::new(format!("blk{blk}.{n}"), r, c, k));
        }
    }
    out.push(ParamDecl::new("ln_f.g", 1, d, ParamKind::NormGain));
    out.push(ParamDecl::new("ln_f.b", 1, d, ParamKind::Bias));
    out.push(ParamDecl::new("head.w", cfg.output_dim, d, ParamKind::Linear));
    out.push(ParamDecl::new("head.b", 1, cfg.output_dim, ParamKind::Bias));
    out
}

/// One trajectory segment of `k` steps.
#[derive(Debug, Clone)]
pub struct DtInput {
    /// Return-to-go per step, `[k × 1]`.
    pub rtg: Tensor,
    /// States per step, `[k × state_dim]`.
    pub states: Tensor,
    /// Actions per step, `[k × action_dim]`; the current step's unknown
    /// action is zero-filled during inference.
    pub actions: Tensor,
    /// Absolute timestep of each step; clamped into the embedding table.
    pub timesteps: Vec<usize>,
}

/// Forward pass over constant inputs: per-step predictions `[k × output_dim]`.
pub fn forward(
    g: &mut Graph,
    p: &Bound,
    cfg: &NetConfig,
    input: &DtInput,
    readout: Readout,
) -> Result<Var, NetsError> {
    let rtg = g.constant(input.rtg.clone());
    let states = g.constant(input.states.clone());
    let actions = g.constant(input.actions.clone());
    forward_vars(g, p, cfg, rtg, states, actions, &input.timesteps, readout)
}

/// Forward pass with graph-resident inputs so sampled actions can carry
/// gradients into the trajectory.
pub fn forward_vars(
    g: &mut Graph,
    p: &Bound,
    cfg: &NetConfig,
    rtg: Var,
    states: Var,
    actions: Var,
    timesteps: &[usize],
    readout: Readout,
) -> Result<Var, NetsError> {
    let k = g.value(rtg).rows;
    if k == 0 {
        return Err(NetsError::Shape {
            expected: "at least one step".into(),
            got: "0".into(),
        });
    }
    if g.value(rtg).cols != 1
        || g.value(states).shape() != (k, cfg.state_dim)
        || g.value(actions).shape() != (k, cfg.action_dim)
        || timesteps.len() != k
    {
        return Err(NetsError::Shape {
            expected: format!(
                "rtg [{k}×1], states [{k}×{}], actions [{k}×{}], {k} timesteps",
                cfg.state_dim, cfg.action_dim
            ),
            got: format!(
                "rtg {:?}, states {:?}, actions {:?}, {} timesteps",
                g.value(rtg).shape(),
                g.value(states).shape(),
                g.value(actions).shape(),
                timesteps.len()
            ),
        });
    }

    // Modality embeddings plus the shared per-step timestep embedding.
    let er_w = p.var("embed_r.w")?;
    let er_b = p.var("embed_r.b")?;
    let es_w = p.var("embed_s.w")?;
    let es_b = p.var("embed_s.b")?;
    let ea_w = p.var("embed_a.w")?;
    let ea_b = p.var("embed_a.b")?;
    let t_table = p.var("embed_t")?;
    let t_idx: Vec<usize> = timesteps
        .iter()
        .map(|&t| t.min(cfg.max_timestep - 1))
        .collect();
    let t_emb = g.gather_rows(t_table, &t_idx);
    let r_emb = {
        let e = g.linear(rtg, er_w, er_b);
        g.add(e, t_emb)
    };
    let s_emb = {
        let e = g.linear(states, es_w, es_b);
        g.add(e, t_emb)
    };
    let a_emb = {
        let e = g.linear(actions, ea_w, ea_b);
        g.add(e, t_emb)
    };

    // Interleave into token order (R_1, s_1, a_1, R_2, s_2, a_2, ...).
    let stacked = g.concat_rows(&[r_emb, s_emb, a_emb]);
    let interleave: Vec<usize> = (0..k).flat_map(|t| [t, k + t, 2 * k + t]).collect();
    let tokens = g.gather_rows(stacked, &interleave);

    let ln_eg = p.var("ln_e.g")?;
    let ln_eb = p.var("ln_e.b")?;
    let mut x = g.layer_norm(tokens, ln_eg, ln_eb);

    for blk in 0..cfg.depth {
        x = block(g, p, cfg, &format!("blk{blk}"), x)?;
    }

    let ln_fg = p.var("ln_f.g")?;
    let ln_fb = p.var("ln_f.b")?;
    let x = g.layer_norm(x, ln_fg, ln_fb);

    let offset = match readout {
        Readout::States => 1,
        Readout::Actions => 2,
    };
    let rows: Vec<usize> = (0..k).map(|t| 3 * t + offset).collect();
    let picked = g.gather_rows(x, &rows);
    let head_w = p.var("head.w")?;
    let head_b = p.var("head.b")?;
    Ok(g.linear(picked, head_w, head_b))
}

fn block(g: &mut Graph, p: &Bound, cfg: &NetConfig, prefix: &str, x: Var) -> Result<Var, NetsError> {
    let ln1g = p.var(&format!("{prefix}.ln1.g"))?;
    let ln1b = p.var(&format!("{prefix}.ln1.b"))?;
    let normed = g.layer_norm(x, ln1g, ln1b);
    let attn = attention(
        g,
        normed,
        cfg.heads,
        p.var(&format!("{prefix}.attn.wq"))?,
        p.var(&format!("{prefix}.attn.bq"))?,
        p.var(&format!("{prefix}.attn.wk"))?,
        p.var(&format!("{prefix}.attn.bk"))?,
        p.var(&format!("{prefix}.attn.wv"))?,
        p.var(&format!("{prefix}.attn.bv"))?,
        p.var(&format!("{prefix}.attn.wo"))?,
        p.var(&format!("{prefix}.attn.bo"))?,
    );
    let x = g.add(x, attn);

    let ln2g = p.var(&format!("{prefix}.ln2.g"))?;
    let ln2b = p.var(&format!("{prefix}.ln2.b"))?;
    let normed = g.layer_norm(x, ln2g, ln2b);
    let w1 = p.var(&format!("{prefix}.mlp.w1"))?;
    let b1 = p.var(&format!("{prefix}.mlp.b1"))?;
    let w2 = p.var(&format!("{prefix}.mlp.w2"))?;
    let b2 = p.var(&format!("{prefix}.mlp.b2"))?;
    let h = g.linear(normed, w1, b1);
    let h = g.gelu(h);
    let mlp = g.linear(h, w2, b2);
    Ok(g.add(x, mlp))
}

/// Multi-head causal self-attention over `[T × d]` tokens.
///
/// Row `i` of each head's softmax only reads score columns `j <= i`, so
/// outputs at a token are bitwise independent of later tokens.
#[allow(clippy::too_many_arguments)]
pub fn attention(
    g: &mut Graph,
    x: Var,
    heads: usize,
    wq: Var,
    bq: Var,
    wk: Var,
    bk: Var,
    wv: Var,
    bv: Var,
    wo: Var,
    bo: Var,
) -> Var {
    let d = g.value(x).cols;
    let dh = d / heads;
    let q = g.linear(x, wq, bq);
    let k = g.linear(x, wk, bk);
    let v = g.linear(x, wv, bv);
    let mut head_outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = g.slice_cols(q, lo, hi);
        let kh = g.slice_cols(k, lo, hi);
        let vh = g.slice_cols(v, lo, hi);
        let scores = g.matmul_tb(qh, kh);
        let scaled = g.scalar_mul(scores, 1.0 / (dh as f64).sqrt());
        let attn = g.causal_softmax(scaled);
        head_outs.push(g.matmul(attn, vh));
    }
    let cat = g.concat_cols(&head_outs);
    g.linear(cat, wo, bo)
}

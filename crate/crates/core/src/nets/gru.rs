//! Stacked gated recurrent units.
//!
//! Gate convention per step and layer:
//! `z = σ(W_z x + U_z h + b_z)`, `r = σ(W_r x + U_r h + b_r)`,
//! `h̃ = tanh(W_h x + U_h (r⊙h) + b_h)`, `h' = (1−z)⊙h̃ + z⊙h` —
//! the update gate retains the previous hidden state.

use super::graph::{Graph, Var};
use super::params::{ParamDecl, ParamKind};
use super::tensor::Tensor;
use super::{Bound, NetConfig, NetsError};

pub fn decls(cfg: &NetConfig) -> Vec<ParamDecl> {
    let mut out = Vec::new();
    let mut fan_in = cfg.input_dim;
    for l in 0..cfg.depth {
        for gate in ["z", "r", "h"] {
            out.push(ParamDecl::new(
                format!("l{l}.w{gate}"),
                cfg.hidden,
                fan_in,
                ParamKind::Linear,
            ));
            out.push(ParamDecl::new(
                format!("l{l}.u{gate}"),
                cfg.hidden,
                cfg.hidden,
                ParamKind::Linear,
            ));
            out.push(ParamDecl::new(format!("l{l}.b{gate}"), 1, cfg.hidden, ParamKind::Bias));
        }
        fan_in = cfg.hidden;
    }
    out
}

pub struct GruOutput {
    /// Top-layer hidden state per step, each `[batch × hidden]`.
    pub y_seq: Vec<Var>,
    /// Final hidden state per layer.
    pub h_final: Vec<Var>,
}

/// Unroll the stacked GRU over `x_seq`.
///
/// `h0` supplies one `[batch × hidden]` tensor per layer; `None` starts from
/// zeros. The layer-2 input is the layer-1 output at the same step.
pub fn forward(
    g: &mut Graph,
    p: &Bound,
    cfg: &NetConfig,
    x_seq: &[Var],
    h0: Option<&[Var]>,
) -> Result<GruOutput, NetsError> {
    if x_seq.is_empty() {
        return Err(NetsError::Shape {
            expected: "sequence length >= 1".into(),
            got: "0".into(),
        });
    }
    let batch = g.value(x_seq[0]).rows;
    for &x in x_seq {
        let (r, c) = g.value(x).shape();
        if r != batch || c != cfg.input_dim {
            return Err(NetsError::Shape {
                expected: format!("[{batch} × {}] per step", cfg.input_dim),
                got: format!("[{r} × {c}]"),
            });
        }
    }
    let mut h: Vec<Var> = match h0 {
        Some(init) => {
            if init.len() != cfg.depth {
                return Err(NetsError::Shape {
                    expected: format!("{} initial hidden states", cfg.depth),
                    got: format!("{}", init.len()),
                });
            }
            for &hv in init {
                if g.value(hv).shape() != (batch, cfg.hidden) {
                    return Err(NetsError::Shape {
                        expected: format!("[{batch} × {}]", cfg.hidden),
                        got: format!("{:?}", g.value(hv).shape()),
                    });
                }
            }
            init.to_vec()
        }
        None => (0..cfg.depth)
            .map(|_| g.constant(Tensor::zeros(batch, cfg.hidden)))
            .collect(),
    };

    let mut y_seq = Vec::with_capacity(x_seq.len());
    for &x_t in x_seq {
        let mut layer_in = x_t;
        for l in 0..cfg.depth {
            let h_prev = h[l];
            let h_new = cell(g, p, l, layer_in, h_prev)?;
            h[l] = h_new;
            layer_in = h_new;
        }
        y_seq.push(layer_in);
    }
    Ok(GruOutput { y_seq, h_final: h })
}

fn cell(g: &mut Graph, p: &Bound, layer: usize, x: Var, h: Var) -> Result<Var, NetsError> {
    let gate = |g: &mut Graph, w: &str, u: &str, b: &str, hin: Var| -> Result<Var, NetsError> {
        let wx = g.matmul_tb(x, p.var(w)?);
        let uh = g.matmul_tb(hin, p.var(u)?);
        let s = g.add(wx, uh);
        Ok(g.add_row(s, p.var(b)?))
    };
    let z_pre = gate(g, &format!("l{layer}.wz"), &format!("l{layer}.uz"), &format!("l{layer}.bz"), h)?;
    let z = g.sigmoid(z_pre);
    let r_pre = gate(g, &format!("l{layer}.wr"), &format!("l{layer}.ur"), &format!("l{layer}.br"), h)?;
    let r = g.sigmoid(r_pre);
    let rh = g.mul(r, h);
    let c_pre = gate(g, &format!("l{layer}.wh"), &format!("l{layer}.uh"), &format!("l{layer}.bh"), rh)?;
    let h_cand = g.tanh(c_pre);
    // h' = (1−z)⊙h̃ + z⊙h
    let neg_z = g.scalar_mul(z, -1.0);
    let one_minus_z = g.scalar_add(neg_z, 1.0);
    let a = g.mul(one_minus_z, h_cand);
    let b = g.mul(z, h);
    Ok(g.add(a, b))
}

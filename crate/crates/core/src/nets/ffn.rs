//! Plain feedforward network: ReLU hidden layers, linear output.

use super::graph::{Graph, Var};
use super::params::{ParamDecl, ParamKind};
use super::{Bound, NetConfig, NetsError};

/// Hidden-trunk declarations: `l0..l{depth-1}`.
pub fn trunk_decls(cfg: &NetConfig) -> Vec<ParamDecl> {
    let mut out = Vec::new();
    let mut fan_in = cfg.input_dim;
    for l in 0..cfg.depth {
        out.push(ParamDecl::new(format!("l{l}.w"), cfg.hidden, fan_in, ParamKind::Linear));
        out.push(ParamDecl::new(format!("l{l}.b"), 1, cfg.hidden, ParamKind::Bias));
        fan_in = cfg.hidden;
    }
    out
}

/// Full network declarations: trunk plus the `out` linear map.
pub fn decls(cfg: &NetConfig) -> Vec<ParamDecl> {
    let mut out = trunk_decls(cfg);
    out.push(ParamDecl::new("out.w", cfg.output_dim, cfg.hidden, ParamKind::Linear));
    out.push(ParamDecl::new("out.b", 1, cfg.output_dim, ParamKind::Bias));
    out
}

/// ReLU trunk features: `[batch × hidden]`.
pub fn trunk(g: &mut Graph, p: &Bound, cfg: &NetConfig, x: Var) -> Result<Var, NetsError> {
    let got = g.value(x).cols;
    if got != cfg.input_dim {
        return Err(NetsError::Shape {
            expected: format!("input width {}", cfg.input_dim),
            got: format!("{got}"),
        });
    }
    let mut h = x;
    for l in 0..cfg.depth {
        let w = p.var(&format!("l{l}.w"))?;
        let b = p.var(&format!("l{l}.b"))?;
        let lin = g.linear(h, w, b);
        h = g.relu(lin);
    }
    Ok(h)
}

/// Full forward pass: `[batch × output_dim]`, deterministic.
pub fn forward(g: &mut Graph, p: &Bound, cfg: &NetConfig, x: Var) -> Result<Var, NetsError> {
    let h = trunk(g, p, cfg, x)?;
    let w = p.var("out.w")?;
    let b = p.var("out.b")?;
    Ok(g.linear(h, w, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::params::ParamSet;
    use crate::nets::tensor::Tensor;

    #[test]
    fn zero_params_give_zero_output() {
        let cfg = NetConfig::ffn(3, 2);
        let params = ParamSet::zeros(&decls(&cfg));
        let mut g = Graph::new();
        let b = Bound::new(&mut g, &params);
        let x = g.constant(Tensor::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.1, -0.7]));
        let y = forward(&mut g, &b, &cfg, x).unwrap();
        assert!(g.value(y).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_unit_net_matches_hand_chain() {
        // 1-unit, 2-layer instance evaluated by hand.
        let mut cfg = NetConfig::ffn(1, 1);
        cfg.hidden = 1;
        let mut params = ParamSet::zeros(&decls(&cfg));
        let values = [
            ("l0.w", 2.0),
            ("l0.b", 0.5),
            ("l1.w", -3.0),
            ("l1.b", 1.0),
            ("out.w", 0.25),
            ("out.b", -0.1),
        ];
        for (name, v) in values {
            let i = params.index_of(name).unwrap();
            params.entries[i].1.data[0] = v;
        }
        let x = 0.7;
        let h0 = (2.0 * x + 0.5_f64).max(0.0);
        let h1 = (-3.0 * h0 + 1.0_f64).max(0.0);
        let expect = 0.25 * h1 - 0.1;
        let mut g = Graph::new();
        let b = Bound::new(&mut g, &params);
        let xv = g.constant(Tensor::scalar(x));
        let y = forward(&mut g, &b, &cfg, xv).unwrap();
        assert!((g.value(y).scalar_value() - expect).abs() < 1e-15);
    }

    #[test]
    fn identical_batch_rows_produce_identical_outputs() {
        let cfg = NetConfig::ffn(3, 2);
        let params = ParamSet::init(&decls(&cfg), 5);
        let mut g = Graph::new();
        let b = Bound::new(&mut g, &params);
        let row = vec![0.3, -0.4, 0.9];
        let mut data = row.clone();
        data.extend_from_slice(&row);
        let x = g.constant(Tensor::from_vec(2, 3, data));
        let y = forward(&mut g, &b, &cfg, x).unwrap();
        let v = g.value(y);
        assert_eq!(v.row_slice(0), v.row_slice(1));
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let cfg = NetConfig::ffn(3, 2);
        let params = ParamSet::zeros(&decls(&cfg));
        let mut g = Graph::new();
        let b = Bound::new(&mut g, &params);
        let x = g.constant(Tensor::from_vec(1, 4, vec![0.0; 4]));
        assert!(matches!(
            forward(&mut g, &b, &cfg, x),
            Err(NetsError::Shape { .. })
        ));
    }
}

//! Differentiable function approximators: feedforward, gated-recurrent, and
//! decision-transformer families with a squashed-Gaussian policy head,
//! reverse-mode gradients, and a finite-difference verification harness.

pub mod checkpoint;
pub mod dt;
pub mod ffn;
pub mod gaussian;
pub mod gradcheck;
pub mod graph;
pub mod gru;
pub mod params;
pub mod tensor;

pub use gradcheck::grad_check;
pub use graph::{Graph, Var};
pub use params::{ParamDecl, ParamKind, ParamSet};
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetsError {
    #[error("shape error: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("numeric error: {0}")]
    NonFinite(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Network family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Ffn,
    Gru,
    Dt,
}

impl std::str::FromStr for Family {
    type Err = NetsError;
    fn from_str(s: &str) -> Result<Self, NetsError> {
        match s.to_ascii_lowercase().as_str() {
            "ffn" => Ok(Family::Ffn),
            "gru" => Ok(Family::Gru),
            "dt" => Ok(Family::Dt),
            other => Err(NetsError::Checkpoint(format!("unknown family `{other}`"))),
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Ffn => write!(f, "ffn"),
            Family::Gru => write!(f, "gru"),
            Family::Dt => write!(f, "dt"),
        }
    }
}

/// Architecture hyperparameters shared by all families.
///
/// `input_dim` is the per-step feature width for FFN/GRU; the decision
/// transformer instead composes its tokens from `state_dim`/`action_dim`
/// (plus a scalar return) and ignores `input_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub family: Family,
    pub input_dim: usize,
    pub output_dim: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub hidden: usize,
    /// Hidden layers for FFN, stacked layers for GRU, blocks for DT.
    pub depth: usize,
    /// Attention heads (DT only).
    pub heads: usize,
    /// Context window length.
    pub context_k: usize,
    /// Timestep-embedding table height (DT only); later steps clamp.
    pub max_timestep: usize,
    /// Position-wise feedforward expansion inside a DT block.
    pub ff_expansion: usize,
}

impl NetConfig {
    pub fn ffn(input_dim: usize, output_dim: usize) -> Self {
        Self {
            family: Family::Ffn,
            input_dim,
            output_dim,
            state_dim: input_dim,
            action_dim: output_dim,
            hidden: 128,
            depth: 2,
            heads: 1,
            context_k: 1,
            max_timestep: 1,
            ff_expansion: 4,
        }
    }

    pub fn gru(input_dim: usize, output_dim: usize, context_k: usize) -> Self {
        Self {
            family: Family::Gru,
            input_dim,
            output_dim,
            state_dim: input_dim,
            action_dim: output_dim,
            hidden: 128,
            depth: 2,
            heads: 1,
            context_k,
            max_timestep: 1,
            ff_expansion: 4,
        }
    }

    pub fn dt(state_dim: usize, action_dim: usize, output_dim: usize, context_k: usize) -> Self {
        Self {
            family: Family::Dt,
            input_dim: state_dim,
            output_dim,
            state_dim,
            action_dim,
            hidden: 128,
            depth: 1,
            heads: 4,
            context_k,
            max_timestep: 8192,
            ff_expansion: 4,
        }
    }

    pub fn validate(&self) -> Result<(), NetsError> {
        if self.hidden == 0 || self.depth == 0 || self.context_k == 0 {
            return Err(NetsError::Shape {
                expected: "positive width/depth/context".into(),
                got: format!(
                    "hidden {}, depth {}, k {}",
                    self.hidden, self.depth, self.context_k
                ),
            });
        }
        if self.family == Family::Dt && self.hidden % self.heads != 0 {
            return Err(NetsError::Shape {
                expected: format!("heads dividing hidden width {}", self.hidden),
                got: format!("{} heads", self.heads),
            });
        }
        Ok(())
    }
}

/// Bind a parameter set into a graph as trainable leaves.
pub struct Bound<'p> {
    pub params: &'p ParamSet,
    pub vars: Vec<Var>,
}

impl<'p> Bound<'p> {
    pub fn new(g: &mut Graph, params: &'p ParamSet) -> Self {
        let vars = params
            .entries
            .iter()
            .map(|(_, t)| g.leaf(t.clone(), true))
            .collect();
        Self { params, vars }
    }

    /// Bind as frozen constants (target networks).
    pub fn frozen(g: &mut Graph, params: &'p ParamSet) -> Self {
        let vars = params
            .entries
            .iter()
            .map(|(_, t)| g.leaf(t.clone(), false))
            .collect();
        Self { params, vars }
    }

    pub fn var(&self, name: &str) -> Result<Var, NetsError> {
        Ok(self.vars[self.params.index_of(name)?])
    }

    /// Collect per-entry gradients (zeros where untouched) after `backward`.
    pub fn grads(&self, grads: &[Option<Tensor>]) -> ParamSet {
        ParamSet {
            entries: self
                .params
                .entries
                .iter()
                .zip(&self.vars)
                .map(|((n, t), &v)| {
                    let g = grads[v]
                        .clone()
                        .unwrap_or_else(|| Tensor::zeros(t.rows, t.cols));
                    (n.clone(), g)
                })
                .collect(),
        }
    }
}

//! Named parameter collections with a stable flat-vector view.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::NetsError;

/// How an array should be initialized and bounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    /// Dense map stored `[out × in]`; fan-in-scaled uniform init.
    Linear,
    /// Bias or any zero-initialized array.
    Bias,
    /// Lookup table rows; small uniform init.
    Embedding,
    /// Layer-norm gain; initialized to one.
    NormGain,
}

/// Declared shape of one named array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamDecl {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub kind: ParamKind,
}

impl ParamDecl {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, kind: ParamKind) -> Self {
        Self {
            name: name.into(),
            rows,
            cols,
            kind,
        }
    }

    /// Magnitude bound used by the initializer for this array.
    pub fn init_bound(&self) -> f64 {
        match self.kind {
            ParamKind::Linear => (6.0 / self.cols as f64).sqrt(),
            ParamKind::Bias => 0.0,
            ParamKind::Embedding => 0.02,
            ParamKind::NormGain => 1.0,
        }
    }
}

/// An ordered set of named arrays. Order is the declaration order and defines
/// the flat-vector layout exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn zeros(decls: &[ParamDecl]) -> Self {
        Self {
            entries: decls
                .iter()
                .map(|d| (d.name.clone(), Tensor::zeros(d.rows, d.cols)))
                .collect(),
        }
    }

    /// Deterministic seeded initialization following each declaration's kind.
    pub fn init(decls: &[ParamDecl], seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = decls
            .iter()
            .map(|d| {
                let mut t = Tensor::zeros(d.rows, d.cols);
                match d.kind {
                    ParamKind::Bias => {}
                    ParamKind::NormGain => t.data.fill(1.0),
                    ParamKind::Linear | ParamKind::Embedding => {
                        let b = d.init_bound();
                        for v in t.data.iter_mut() {
                            *v = rng.gen_range(-b..b);
                        }
                    }
                }
                (d.name.clone(), t)
            })
            .collect();
        Self { entries }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, NetsError> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| NetsError::UnknownParam(name.to_string()))
    }

    pub fn index_of(&self, name: &str) -> Result<usize, NetsError> {
        self.entries
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| NetsError::UnknownParam(name.to_string()))
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.data.len()).sum()
    }

    /// Concatenation of all arrays in declaration order.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for (_, t) in &self.entries {
            out.extend_from_slice(&t.data);
        }
        out
    }

    /// Overwrite all arrays from a flat vector; exact inverse of [`flat`].
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), NetsError> {
        if flat.len() != self.num_scalars() {
            return Err(NetsError::Shape {
                expected: format!("{} scalars", self.num_scalars()),
                got: format!("{} scalars", flat.len()),
            });
        }
        let mut off = 0;
        for (_, t) in self.entries.iter_mut() {
            let len = t.data.len();
            t.data.copy_from_slice(&flat[off..off + len]);
            off += len;
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.rows, t.cols)))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.all_finite())
    }

    /// Elementwise convex blend: `self = tau·online + (1 − tau)·self`.
    pub fn soft_update_from(&mut self, online: &ParamSet, tau: f64) -> Result<(), NetsError> {
        if self.entries.len() != online.entries.len() {
            return Err(NetsError::Shape {
                expected: format!("{} entries", self.entries.len()),
                got: format!("{} entries", online.entries.len()),
            });
        }
        for ((_, t), (_, o)) in self.entries.iter_mut().zip(&online.entries) {
            if t.shape() != o.shape() {
                return Err(NetsError::Shape {
                    expected: format!("{:?}", t.shape()),
                    got: format!("{:?}", o.shape()),
                });
            }
            for (a, b) in t.data.iter_mut().zip(&o.data) {
                *a = tau * b + (1.0 - tau) * *a;
            }
        }
        Ok(())
    }
}

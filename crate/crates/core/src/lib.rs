//! Series hybrid-electric-vehicle (SHEV) energy-management workbench.
//!
//! The crate is organized around a physics-based series-HEV simulator and the
//! controllers that drive it:
//!
//! - [`cycles`] — drive-cycle ingestion, repetition, and synthesis.
//! - [`powertrain`] — road load, genset, battery, and component-map physics.
//! - [`env`] — the sequential decision process (state/action/reward) wrapping
//!   the powertrain.
//! - [`nets`] — feedforward, recurrent, and decision-transformer function
//!   approximators with reverse-mode differentiation and gradient checking.
//! - [`sac`] — the sequence-aware soft actor-critic training loop with a
//!   trajectory replay buffer.
//! - [`dp`] — dynamic-programming baseline over a time × SOC grid with an
//!   exhaustive brute-force oracle.
//! - [`harness`] — experiment configuration, CLI command implementations, and
//!   comparison reports.

pub mod cycles;
pub mod dp;
pub mod env;
pub mod harness;
pub mod nets;
pub mod powertrain;
pub mod sac;

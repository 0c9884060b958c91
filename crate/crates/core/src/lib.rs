//! Influence graphs, simulation and Kalman-Bucy marginalization for
//! dynamical statistical systems.
//!
//! A system is declared as a set of attributes (time-fixed, possibly random)
//! and components (diffusions, counting processes, deterministic ODEs) whose
//! drifts are expressions over the left-limit state. From a declaration this
//! crate derives the graph of direct influences, answers reachability and
//! blocking queries over it, simulates trajectories under an observation
//! scheme with measurement error and a detection limit, and analyzes the
//! faithfulness of the three-component linear diffusion after marginalizing
//! its latent component.

// `!(x >= 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod expr;
pub mod hiv;
pub mod influence;
pub mod kalman;
pub mod model;
pub mod parser;
pub mod simulate;

pub use expr::{Cmp, Expr};
pub use influence::{derive_graph, InfluenceGraph, QueryVerdict};
pub use model::{validate, SystemSpec};
pub use parser::{parse_model, print_model};

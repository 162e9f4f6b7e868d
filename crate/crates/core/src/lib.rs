//! Simulator and analysis toolkit for inexact distributed gradient descent
//! with dynamically triggered synchronization.
//!
//! `N` peers minimize `f = Σ_j f_j` over strongly convex quadratics. Each peer
//! iterates on its own copy using exact local gradients and bounded-error
//! measurements of its neighbors' gradients, and the copies are averaged over
//! a spanning tree whenever a locally checkable deviation test fires.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below cover the common case.

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algo;
pub mod analysis;
pub mod distortion;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod objective;
pub mod rng;
pub mod scalar;

pub use algo::{run, AlgoConfig, Event, LoopState, RunState, RunTrace, Variant};
pub use analysis::{
    asymptotic_bounds, certify_trace, contraction_q, drift_bound, BoundSet, CertificateReport,
};
pub use distortion::{quantize, ErrorMode, ErrorModel};
pub use error::{Error, Result};
pub use harness::{run_experiment, sanity_report, AggregateResult, ExperimentConfig};
pub use linalg::Matrix;
pub use network::{Topology, TopologySpec};
pub use objective::{random_instance, Objective, Problem, QuadraticComponent};
pub use scalar::Scalar;

pub type Problem64 = Problem<f64>;
pub type Problem32 = Problem<f32>;
pub type AlgoConfig64 = AlgoConfig<f64>;
pub type AlgoConfig32 = AlgoConfig<f32>;
pub type RunTrace64 = RunTrace<f64>;
pub type RunTrace32 = RunTrace<f32>;
pub type BoundSet64 = BoundSet<f64>;
pub type ErrorModel64 = ErrorModel<f64>;

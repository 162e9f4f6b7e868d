//! Inexact gradient descent with independent computation rounds and
//! dynamically triggered synchronization.
//!
//! Every node keeps a local copy `x_i` and repeatedly applies
//! `x_i ← x_i - γ Σ_j h_ij` using possibly distorted gradient measurements
//! (`IndComp`). After each round the locally computable trigger
//! `k - 1 > r‖h_i‖ / (2εN) - 1/2` is evaluated; when any node fires, the
//! copies are averaged over the spanning tree (`IntSync`). If the inner loop
//! ran more than once the last round is discarded first, so the average is
//! taken over the iterates every node retained from the previous round.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::contraction_q;
use crate::distortion::{ErrorKey, ErrorMode, ErrorModel};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{axpy, dist, is_finite, norm, sub};
use crate::network::Topology;
use crate::objective::{Objective, Problem};
use crate::rng::{self, Domain};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Complete graph, trigger on ε.
    Alg1,
    /// General graph, missing links measured as zero, trigger on τ = max(ε, ζ).
    Alg2,
    /// Synchronize every round, receiver-independent errors.
    Igdds,
    /// Exact gradient descent.
    Gd,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Alg1, Variant::Alg2, Variant::Igdds, Variant::Gd];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Alg1 => "alg1",
            Self::Alg2 => "alg2",
            Self::Igdds => "igdds",
            Self::Gd => "gd",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "alg1" => Ok(Self::Alg1),
            "alg2" => Ok(Self::Alg2),
            "igdds" => Ok(Self::Igdds),
            "gd" => Ok(Self::Gd),
            other => Err(Error::Config(format!(
                "unknown algorithm `{other}` (expected alg1|alg2|igdds|gd)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig<T> {
    pub variant: Variant,
    pub gamma: T,
    pub r: T,
    /// Bound ε on the measurement errors.
    pub epsilon: T,
    /// Gradient bound ζ for general graphs.
    pub zeta: Option<T>,
    pub max_global_iters: usize,
    /// Stop once `‖∇f(x̄)‖ ≤ grad_tol`; zero disables the test.
    pub grad_tol: T,
    /// Keep the mean iterate of every global index in the trace.
    pub record_iterates: bool,
}

impl<T: Scalar> AlgoConfig<T> {
    pub fn new(variant: Variant, gamma: T, r: T, epsilon: T, max_global_iters: usize) -> Self {
        Self {
            variant,
            gamma,
            r,
            epsilon,
            zeta: None,
            max_global_iters,
            grad_tol: T::zero(),
            record_iterates: false,
        }
    }

    /// Error bound used by the trigger: ε, or τ = max(ε, ζ) for `alg2`.
    pub fn noise_bound(&self) -> T {
        match (self.variant, self.zeta) {
            (Variant::Alg2, Some(z)) => self.epsilon.max(z),
            _ => self.epsilon,
        }
    }

    /// Checks the run preconditions against a concrete problem and network.
    pub fn validate(
        &self,
        problem: &Problem<T>,
        topology: &Topology,
        model: &ErrorModel<T>,
    ) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if topology.nodes() != problem.nodes() {
            return cfg(format!(
                "topology has {} nodes but the problem has {} components",
                topology.nodes(),
                problem.nodes()
            ));
        }
        let lip = problem.smoothness();
        let gamma_max = T::one() / lip;
        if !(self.gamma > T::zero() && self.gamma <= gamma_max) {
            return cfg(format!(
                "step size {} outside (0, 1/L] = (0, {}]",
                self.gamma, gamma_max
            ));
        }
        if !(self.r >= T::zero() && self.r < T::one()) {
            return cfg(format!("r = {} must lie in [0, 1)", self.r));
        }
        if !(self.epsilon >= T::zero()) || !self.epsilon.is_finite() {
            return cfg(format!(
                "ε = {} must be finite and nonnegative",
                self.epsilon
            ));
        }
        if model.epsilon > self.epsilon {
            return cfg(format!(
                "error model bound {} exceeds the configured ε = {}",
                model.epsilon, self.epsilon
            ));
        }
        if self.grad_tol < T::zero() {
            return cfg("grad_tol must be nonnegative".into());
        }
        match self.variant {
            Variant::Alg1 | Variant::Alg2 => {
                let (_, _, r_max) =
                    contraction_q(self.gamma, lip, problem.strong_convexity(), self.r)?;
                if self.r >= r_max {
                    return cfg(format!(
                        "r = {} must be below r_max = √ℓ/(√L+√ℓ) = {}",
                        self.r, r_max
                    ));
                }
            }
            Variant::Igdds | Variant::Gd => {
                if self.r != T::zero() {
                    return cfg(format!("{} requires r = 0", self.variant));
                }
            }
        }
        match self.variant {
            Variant::Alg1 | Variant::Igdds | Variant::Gd if !topology.is_complete() => {
                return cfg(format!("{} runs on a complete graph", self.variant));
            }
            Variant::Alg2 => match self.zeta {
                Some(z) if z >= T::zero() && z.is_finite() => {}
                _ => return cfg("alg2 needs a finite gradient bound ζ ≥ 0".into()),
            },
            Variant::Igdds if !model.mode.receiver_independent() => {
                return cfg(format!(
                    "igdds needs receiver-independent errors, got mode `{}`",
                    model.mode
                ));
            }
            Variant::Gd if self.epsilon != T::zero() || !model.is_noiseless() => {
                return cfg("gd requires ε = 0 and a noiseless channel".into());
            }
            _ => {}
        }
        Ok(())
    }
}

/// `r‖h‖/(2bN) - 1/2`, the largest local index at which a node may keep
/// iterating without synchronizing.
pub fn continue_threshold<T: Scalar>(r: T, bound: T, nodes: usize, h_norm: T) -> T {
    let half = T::lit(0.5);
    if r == T::zero() {
        return -half;
    }
    if bound == T::zero() {
        return T::infinity();
    }
    r * h_norm / (T::lit(2.0) * bound * T::count(nodes)) - half
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Event {
    /// Round kept, inner loop continues.
    IndComp,
    /// Single-round inner loop: round kept, then averaged.
    IntSync,
    /// Multi-round inner loop ended: round discarded, previous iterates averaged.
    Rollback,
}

/// Which kind of inner loop a synchronization closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoopState {
    /// Ran more than once; last round rolled back.
    Repeated,
    /// Ran exactly once.
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeStep<T> {
    /// `f(x_i) - f*` before the round.
    pub gap_before: T,
    /// `f(x_i) - f*` after the round.
    pub gap_after: T,
    /// `‖∇f(x_i)‖` before the round.
    pub grad_norm: T,
    /// `‖∇f(x_i) - h_i‖`.
    pub deviation: T,
    /// `‖h_i‖`.
    pub h_norm: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord<T> {
    /// Global index `s + k` of the iterate the round started from.
    pub iter: usize,
    /// Local index `k` of that iterate within its inner loop.
    pub local: usize,
    pub event: Event,
    pub nodes: Vec<NodeStep<T>>,
    /// `max_ij ‖x_i - x_j‖` after the round.
    pub spread: T,
    /// Cumulative gradient-exchange messages, this round included.
    pub indcomp_messages: usize,
    /// Cumulative averaging messages, including a synchronization closing this round.
    pub intsync_messages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncRecord<T> {
    /// Ordinal of the synchronization, starting at 1.
    pub m: usize,
    /// Global index `s_m` at which synchrony was imposed.
    pub s: usize,
    /// `f(x̄^(s_m)) - f*`.
    pub gap: T,
    /// `‖∇f(x̄^(s_m))‖`.
    pub grad_norm: T,
    pub state: LoopState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace<T> {
    pub variant: Variant,
    pub trial: usize,
    pub nodes: usize,
    pub steps: Vec<StepRecord<T>>,
    pub syncs: Vec<SyncRecord<T>>,
    /// `f(x̄) - f*` indexed by global iteration.
    pub mean_gap: Vec<T>,
    /// Mean iterate by global iteration, when requested.
    pub iterates: Option<Vec<Vec<T>>>,
    /// `‖∇f(x⁽⁰⁾)‖`.
    pub initial_grad_norm: T,
    pub indcomp_messages: usize,
    pub intsync_messages: usize,
}

impl<T: Scalar> RunTrace<T> {
    pub fn final_gap(&self) -> T {
        *self.mean_gap.last().expect("trace holds the initial point")
    }

    /// Global iterations completed.
    pub fn global_iters(&self) -> usize {
        self.mean_gap.len() - 1
    }
}

/// Mutable state of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState<T> {
    /// Local copies `x_i`.
    pub x: Vec<Vec<T>>,
    /// Copies before the latest round, kept for rollback.
    pub prev: Vec<Vec<T>>,
    /// Last synchrony index.
    pub s: usize,
    /// Local index inside the current inner loop.
    pub k: usize,
    /// Synchronizations so far.
    pub m: usize,
    /// `‖h_i‖` from the latest round.
    pub h_norms: Vec<T>,
    pub trial: usize,
    pub indcomp_messages: usize,
    pub intsync_messages: usize,
}

impl<T: Scalar> RunState<T> {
    /// All nodes start from the same point.
    pub fn new(x0: &[T], nodes: usize, trial: usize) -> Self {
        Self {
            x: vec![x0.to_vec(); nodes],
            prev: vec![x0.to_vec(); nodes],
            s: 0,
            k: 0,
            m: 0,
            h_norms: vec![T::zero(); nodes],
            trial,
            indcomp_messages: 0,
            intsync_messages: 0,
        }
    }

    pub fn global(&self) -> usize {
        self.s + self.k
    }

    pub fn nodes(&self) -> usize {
        self.x.len()
    }

    /// Direct arithmetic mean of the local copies.
    pub fn mean(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.x[0].len()];
        for xi in &self.x {
            crate::linalg::add_into(&mut m, xi);
        }
        let d = T::count(self.nodes());
        m.iter_mut().for_each(|v| *v = *v / d);
        m
    }

    /// `max_ij ‖x_i - x_j‖`.
    pub fn spread(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.nodes() {
            for j in (i + 1)..self.nodes() {
                worst = worst.max(dist(&self.x[i], &self.x[j]));
            }
        }
        worst
    }
}

/// Standard-normal starting point keyed by `(seed, trial)`.
pub fn initial_point<T: Scalar>(n: usize, seed: u64, trial: usize) -> Vec<T> {
    let mut r = rng::keyed(Domain::Initial, &[seed, trial as u64]);
    rng::normal_vec(&mut r, n)
}

/// One synchronous `IndComp` round: every node measures all sources at the
/// same pre-round snapshot and steps `x_i ← x_i - γ h_i`.
pub fn indcomp_step<T: Scalar>(
    state: &mut RunState<T>,
    problem: &Problem<T>,
    topology: &Topology,
    model: &ErrorModel<T>,
    config: &AlgoConfig<T>,
) -> Result<StepRecord<T>> {
    let nodes = state.nodes();
    let n = problem.dim();
    for xi in &state.x {
        check_dim(n, xi.len())?;
    }
    let iter = state.global();
    let source_grads: Vec<Vec<T>> = (0..nodes)
        .map(|j| problem.component(j).gradient(&state.x[j]))
        .collect();

    let mut next = state.x.clone();
    let mut records = Vec::with_capacity(nodes);
    for (i, next_i) in next.iter_mut().enumerate() {
        let mut h = vec![T::zero(); n];
        for (j, grad) in source_grads.iter().enumerate() {
            let hij = relay(topology, model, i, j, grad, iter, state.trial);
            crate::linalg::add_into(&mut h, &hij);
        }
        let xi = &state.x[i];
        let true_grad = problem.gradient(xi);
        let h_norm = norm(&h);
        records.push(NodeStep {
            gap_before: problem.gap(xi),
            gap_after: T::zero(),
            grad_norm: norm(&true_grad),
            deviation: norm(&sub(&true_grad, &h)),
            h_norm,
        });
        axpy(-config.gamma, &h, next_i);
        if !is_finite(next_i) || !h_norm.is_finite() {
            return Err(Error::Diverged { iter, node: i });
        }
        state.h_norms[i] = h_norm;
    }
    state.prev = std::mem::replace(&mut state.x, next);
    for (rec, xi) in records.iter_mut().zip(&state.x) {
        rec.gap_after = problem.gap(xi);
    }
    let local = state.k;
    state.k += 1;
    state.indcomp_messages += topology.exchange_messages();
    Ok(StepRecord {
        iter,
        local,
        event: Event::IndComp,
        nodes: records,
        spread: state.spread(),
        indcomp_messages: state.indcomp_messages,
        intsync_messages: state.intsync_messages,
    })
}

fn relay<T: Scalar>(
    topology: &Topology,
    model: &ErrorModel<T>,
    receiver: usize,
    source: usize,
    grad: &[T],
    iter: usize,
    trial: usize,
) -> Vec<T> {
    if receiver == source {
        grad.to_vec()
    } else if !topology.is_edge(receiver, source) {
        vec![T::zero(); grad.len()]
    } else {
        model.distort(
            ErrorKey {
                receiver,
                source,
                iter,
                trial,
            },
            grad,
        )
    }
}

/// True iff some node has `k - 1 > r‖h_i‖/(2bN) - 1/2` for the round just taken.
pub fn trigger<T: Scalar>(state: &RunState<T>, config: &AlgoConfig<T>) -> bool {
    debug_assert!(state.k >= 1, "trigger needs at least one round");
    let done = T::count(state.k.saturating_sub(1));
    let bound = config.noise_bound();
    state
        .h_norms
        .iter()
        .any(|&h| done > continue_threshold(config.r, bound, state.nodes(), h))
}

/// Averages the copies over the spanning tree, rolling back the latest round
/// first when the inner loop ran more than once.
pub fn intsync<T: Scalar>(
    state: &mut RunState<T>,
    problem: &Problem<T>,
    topology: &Topology,
) -> Result<SyncRecord<T>> {
    if state.k == 0 {
        return Err(Error::Internal("synchronization without a round".into()));
    }
    let loop_state = if state.k != 1 {
        std::mem::swap(&mut state.x, &mut state.prev);
        state.s += state.k - 1;
        LoopState::Repeated
    } else {
        state.s += 1;
        LoopState::Single
    };
    let (mean, messages) = topology.tree_average(&state.x)?;
    for xi in state.x.iter_mut() {
        xi.copy_from_slice(&mean);
    }
    state.prev = state.x.clone();
    state.k = 0;
    state.m += 1;
    state.intsync_messages += messages;
    Ok(SyncRecord {
        m: state.m,
        s: state.s,
        gap: problem.gap(&mean),
        grad_norm: norm(&problem.gradient(&mean)),
        state: loop_state,
    })
}

/// Runs the configured variant from `x0` until `max_global_iters` global
/// iterations are completed or the mean-iterate gradient drops below `grad_tol`.
pub fn run<T: Scalar>(
    problem: &Problem<T>,
    topology: &Topology,
    config: &AlgoConfig<T>,
    model: &ErrorModel<T>,
    x0: &[T],
    trial: usize,
) -> Result<RunTrace<T>> {
    config.validate(problem, topology, model)?;
    check_dim(problem.dim(), x0.len())?;
    if !is_finite(x0) {
        return Err(Error::Input("initial point is not finite".into()));
    }
    let nodes = problem.nodes();
    let mut state = RunState::new(x0, nodes, trial);
    let mut trace = RunTrace {
        variant: config.variant,
        trial,
        nodes,
        steps: Vec::new(),
        syncs: Vec::new(),
        mean_gap: vec![problem.gap(x0)],
        iterates: config.record_iterates.then(|| vec![x0.to_vec()]),
        initial_grad_norm: norm(&problem.gradient(x0)),
        indcomp_messages: 0,
        intsync_messages: 0,
    };

    while state.global() < config.max_global_iters {
        let mut record = indcomp_step(&mut state, problem, topology, model, config)?;
        if trigger(&state, config) {
            record.event = if state.k == 1 {
                Event::IntSync
            } else {
                Event::Rollback
            };
            let sync = intsync(&mut state, problem, topology)?;
            record.intsync_messages = state.intsync_messages;
            trace.steps.push(record);
            set_point(&mut trace, sync.s, sync.gap, || state.x[0].clone());
            trace.syncs.push(sync);
        } else {
            trace.steps.push(record);
            let mean = state.mean();
            set_point(&mut trace, state.global(), problem.gap(&mean), || {
                mean.clone()
            });
        }
        if config.grad_tol > T::zero() && norm(&problem.gradient(&state.mean())) <= config.grad_tol
        {
            break;
        }
    }
    trace.indcomp_messages = state.indcomp_messages;
    trace.intsync_messages = state.intsync_messages;
    Ok(trace)
}

fn set_point<T: Scalar>(
    trace: &mut RunTrace<T>,
    index: usize,
    gap: T,
    point: impl FnOnce() -> Vec<T>,
) {
    trace.mean_gap.truncate(index);
    trace.mean_gap.push(gap);
    if let Some(its) = trace.iterates.as_mut() {
        its.truncate(index);
        its.push(point());
    }
}

/// Error model a variant actually runs with, given the experiment's base mode.
pub fn variant_error_model<T: Scalar>(
    variant: Variant,
    mode: ErrorMode,
    epsilon: T,
    seed: u64,
) -> Result<ErrorModel<T>> {
    match variant {
        Variant::Gd => Ok(ErrorModel::none()),
        Variant::Igdds => {
            let shared = match mode {
                ErrorMode::Ball | ErrorMode::Sphere => ErrorMode::Shared,
                other => other,
            };
            ErrorModel::new(shared, epsilon, seed)
        }
        Variant::Alg1 | Variant::Alg2 => ErrorModel::new(mode, epsilon, seed),
    }
}

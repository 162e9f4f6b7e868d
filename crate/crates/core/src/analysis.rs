//! Closed-form constants and limit bounds, and post-hoc certification of
//! run traces against the per-step inequalities the convergence proof uses.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::algo::{continue_threshold, AlgoConfig, Event, LoopState, RunTrace};
use crate::error::{Error, Result};
use crate::objective::Problem;
use crate::scalar::Scalar;

/// Relative slack on every certified inequality.
pub const REL_TOL: f64 = 1e-9;
/// Absolute floor on optimality-gap comparisons.
pub const GAP_FLOOR: f64 = 1e-14;
/// Gradient norm below which the relative deviation is not evaluated.
pub const GRAD_SKIP: f64 = 1e-14;
/// Fraction of global iterations forming the plateau window.
pub const PLATEAU_WINDOW: f64 = 0.1;

/// Returns `(q, r̄, r_max)` with `r̄ = r/(1-r)`, `q = 1 + γLr̄² - γℓ` and
/// `r_max = √ℓ/(√L+√ℓ)`. `q < 1` exactly when `r < r_max`.
pub fn contraction_q<T: Scalar>(gamma: T, lip: T, ell: T, r: T) -> Result<(T, T, T)> {
    if !(lip > T::zero() && ell > T::zero() && ell <= lip) {
        return Err(Error::Input(format!(
            "need 0 < ℓ ≤ L, got ℓ = {ell}, L = {lip}"
        )));
    }
    if !(gamma > T::zero() && gamma <= T::one() / lip) {
        return Err(Error::Input(format!(
            "γ = {gamma} outside (0, 1/L] = (0, {}]",
            T::one() / lip
        )));
    }
    if !(r >= T::zero() && r < T::one()) {
        return Err(Error::Input(format!("r = {r} outside [0, 1)")));
    }
    let r_bar = r / (T::one() - r);
    let q = T::one() + gamma * lip * r_bar * r_bar - gamma * ell;
    let r_max = ell.sqrt() / (lip.sqrt() + ell.sqrt());
    Ok((q, r_bar, r_max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSet<T> {
    pub q: T,
    pub r_bar: T,
    pub r_max: T,
    /// Error bound the limits are stated in: ε, or τ = max(ε, ζ).
    pub tau: T,
    /// `limsup f(x) - f*`.
    pub gap_bound: T,
    /// `limsup ‖∇f(x)‖`.
    pub grad_bound: T,
    /// `limsup ‖x - x*‖`.
    pub dist_bound: T,
    /// `ε²N²/(2ℓ)`, the limit for per-iteration synchronization.
    pub igdds_gap_bound: T,
}

/// Limit bounds for error level `epsilon` (and gradient bound `zeta` on
/// general graphs).
pub fn asymptotic_bounds<T: Scalar>(
    gamma: T,
    epsilon: T,
    zeta: Option<T>,
    nodes: usize,
    lip: T,
    ell: T,
    r: T,
) -> Result<BoundSet<T>> {
    if !(epsilon >= T::zero()) {
        return Err(Error::Input(format!("ε = {epsilon} must be nonnegative")));
    }
    let (q, r_bar, r_max) = contraction_q(gamma, lip, ell, r)?;
    let margin = ell - lip * r_bar * r_bar;
    if !(margin > T::zero()) {
        return Err(Error::Input(format!(
            "ℓ - L·r̄² = {margin} must be positive (r = {r} is not below r_max = {r_max})"
        )));
    }
    let tau = zeta.map_or(epsilon, |z| epsilon.max(z));
    let two = T::lit(2.0);
    let bn2 = (tau * T::count(nodes)).powi(2);
    let en2 = (epsilon * T::count(nodes)).powi(2);
    Ok(BoundSet {
        q,
        r_bar,
        r_max,
        tau,
        gap_bound: bn2 / (two * margin),
        grad_bound: (lip * bn2 / margin).sqrt(),
        dist_bound: (lip * bn2 / (ell * ell - lip * r_bar * r_bar * ell)).sqrt(),
        igdds_gap_bound: en2 / (two * ell),
    })
}

/// `2εN(k + 1/2)`, the cap on `‖∇f(x_i) - h_i‖` after `k` rounds without synchrony.
pub fn drift_bound<T: Scalar>(epsilon: T, nodes: usize, k: usize) -> T {
    T::lit(2.0) * epsilon * T::count(nodes) * (T::count(k) + T::lit(0.5))
}

/// Smallest `t ≥ 0` with `(L/ℓ)·qᵗ·g0² < (εN/r̄)²`, the number of kept rounds
/// after which no node can continue an inner loop. `None` when no such `t`
/// exists (ε = 0 with r > 0, or q ≥ 1).
pub fn exit_bound<T: Scalar>(
    q: T,
    r_bar: T,
    lip: T,
    ell: T,
    epsilon: T,
    nodes: usize,
    g0: T,
) -> Option<usize> {
    let target = if r_bar == T::zero() {
        T::infinity()
    } else {
        (epsilon * T::count(nodes) / r_bar).powi(2)
    };
    let start = lip / ell * g0 * g0;
    let ratio = target / start;
    if ratio > T::one() || ratio.is_nan() {
        return Some(0);
    }
    if !(ratio > T::zero()) {
        return None;
    }
    if q <= T::zero() {
        return Some(1);
    }
    if q >= T::one() {
        return None;
    }
    let t = (ratio.ln() / q.ln()).floor();
    t.to_usize().map(|t| t + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certificate {
    /// `‖∇f(x_i) - h_i‖ ≤ 2εN(k + 1/2)`.
    Drift,
    /// `‖x_i - x_j‖ ≤ 2εNγk` inside an inner loop.
    Spread,
    /// Continuing implies `e_i ≤ r̄`.
    Trigger,
    /// Kept multi-round steps contract the gap by `q`.
    Contraction,
    /// Single-round loops satisfy the `(1-γℓ)` bound plus `γε²N²/2`.
    SingleStep,
    /// Same bound for the averaged iterate.
    SingleStepMean,
    /// Consecutive multi-round loops keep at most `t*` rounds.
    ExitBound,
}

impl Certificate {
    pub const ALL: [Certificate; 7] = [
        Self::Drift,
        Self::Spread,
        Self::Trigger,
        Self::Contraction,
        Self::SingleStep,
        Self::SingleStepMean,
        Self::ExitBound,
    ];
}

impl fmt::Display for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Drift => "drift",
            Self::Spread => "spread",
            Self::Trigger => "trigger",
            Self::Contraction => "contraction",
            Self::SingleStep => "single_step",
            Self::SingleStepMean => "single_step_mean",
            Self::ExitBound => "exit_bound",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub certificate: Certificate,
    pub trial: usize,
    pub iter: usize,
    pub node: Option<usize>,
    pub measured: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub indcomp: usize,
    pub intsync: usize,
    pub rollback: usize,
}

impl EventCounts {
    pub fn total(&self) -> usize {
        self.indcomp + self.intsync + self.rollback
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    /// First global index of the window.
    pub from: usize,
    /// `max f(x̄) - f*` over the window.
    pub max_gap: f64,
    pub bound: f64,
}

impl Plateau {
    pub fn within_bound(&self) -> bool {
        self.max_gap <= self.bound * (1.0 + REL_TOL) + GAP_FLOOR
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub trial: usize,
    /// Checks performed, indexed like [`Certificate::ALL`].
    pub checked: [usize; 7],
    pub events: EventCounts,
    /// Continuing steps whose relative deviation was undefined.
    pub trigger_skips: usize,
    /// Multi-round stretches not checked because `t*` is unbounded.
    pub exit_skips: usize,
    pub violations: Vec<Violation>,
    pub plateau: Plateau,
}

impl CertificateReport {
    pub fn checked(&self, c: Certificate) -> usize {
        self.checked[c as usize]
    }

    pub fn violations_of(&self, c: Certificate) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(move |v| v.certificate == c)
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "trial {}", self.trial);
        let _ = writeln!(
            s,
            "  steps: {} indcomp, {} intsync, {} rollback",
            self.events.indcomp, self.events.intsync, self.events.rollback
        );
        for c in Certificate::ALL {
            let bad = self.violations_of(c).count();
            let _ = writeln!(
                s,
                "  {c:<17} checked {:>8}  violations {bad}",
                self.checked(c)
            );
        }
        let _ = writeln!(
            s,
            "  trigger skips {}  exit skips {}",
            self.trigger_skips, self.exit_skips
        );
        let _ = writeln!(
            s,
            "  plateau (from iter {}) {:.6e} vs bound {:.6e}: {}",
            self.plateau.from,
            self.plateau.max_gap,
            self.plateau.bound,
            if self.plateau.within_bound() {
                "within"
            } else {
                "ABOVE"
            }
        );
        s
    }
}

/// Header of the violations CSV.
pub const VIOLATIONS_HEADER: &str = "certificate,trial,iter,node,measured,bound";

/// One CSV row per violation, no header.
pub fn violations_csv(violations: &[Violation]) -> String {
    let mut s = String::new();
    for v in violations {
        let node = v.node.map(|n| n.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            v.certificate,
            v.trial,
            v.iter,
            node,
            crate::objective::fmt_sci(v.measured),
            crate::objective::fmt_sci(v.bound)
        );
    }
    s
}

struct Checker {
    trial: usize,
    checked: [usize; 7],
    violations: Vec<Violation>,
}

impl Checker {
    fn check<T: Scalar>(
        &mut self,
        c: Certificate,
        iter: usize,
        node: Option<usize>,
        measured: T,
        bound: T,
        floor: f64,
    ) {
        self.checked[c as usize] += 1;
        let (m, b) = (measured.to_f64_lossy(), bound.to_f64_lossy());
        if !(m <= b + REL_TOL * b.abs() + floor) {
            self.violations.push(Violation {
                certificate: c,
                trial: self.trial,
                iter,
                node,
                measured: m,
                bound: b,
            });
        }
    }
}

/// Checks every recorded step of `trace` against the inequalities the
/// analysis relies on, and measures the trailing plateau.
pub fn certify_trace<T: Scalar>(
    trace: &RunTrace<T>,
    problem: &Problem<T>,
    config: &AlgoConfig<T>,
) -> Result<CertificateReport> {
    let nodes = problem.nodes();
    if trace.nodes != nodes {
        return Err(Error::Input(format!(
            "trace has {} nodes, problem has {nodes}",
            trace.nodes
        )));
    }
    if trace.mean_gap.is_empty() || (trace.global_iters() > 0 && trace.steps.is_empty()) {
        return Err(Error::Input("trace lacks per-step measurements".into()));
    }
    if let Some(bad) = trace.steps.iter().position(|s| s.nodes.len() != nodes) {
        return Err(Error::Input(format!(
            "step {bad} records {} nodes, expected {nodes}",
            trace.steps[bad].nodes.len()
        )));
    }

    let lip = problem.smoothness();
    let ell = problem.strong_convexity();
    let gamma = config.gamma;
    let b = config.noise_bound();
    let bounds = asymptotic_bounds(
        gamma,
        config.epsilon,
        config.zeta,
        nodes,
        lip,
        ell,
        config.r,
    )?;
    let (q, r_bar) = (bounds.q, bounds.r_bar);
    let single_factor = T::one() - gamma * ell;
    let single_add = gamma * (b * T::count(nodes)).powi(2) / T::lit(2.0);

    let mut ck = Checker {
        trial: trace.trial,
        checked: [0; 7],
        violations: Vec::new(),
    };
    let mut events = EventCounts::default();
    let mut trigger_skips = 0;

    for step in &trace.steps {
        match step.event {
            Event::IndComp => events.indcomp += 1,
            Event::IntSync => events.intsync += 1,
            Event::Rollback => events.rollback += 1,
        }
        let drift = drift_bound(b, nodes, step.local);
        let spread = T::lit(2.0) * b * T::count(nodes) * gamma * T::count(step.local + 1);
        ck.check(
            Certificate::Spread,
            step.iter,
            None,
            step.spread,
            spread,
            GAP_FLOOR,
        );
        for (i, ns) in step.nodes.iter().enumerate() {
            let scale = REL_TOL * ns.grad_norm.to_f64_lossy();
            ck.check(
                Certificate::Drift,
                step.iter,
                Some(i),
                ns.deviation,
                drift,
                scale,
            );

            let threshold = continue_threshold(config.r, b, nodes, ns.h_norm);
            if T::count(step.local) <= threshold {
                if ns.grad_norm.to_f64_lossy() < GRAD_SKIP {
                    trigger_skips += 1;
                } else {
                    let e = ns.deviation / ns.grad_norm;
                    ck.check(Certificate::Trigger, step.iter, Some(i), e, r_bar, 0.0);
                }
            }
            match step.event {
                Event::IndComp => ck.check(
                    Certificate::Contraction,
                    step.iter,
                    Some(i),
                    ns.gap_after,
                    q * ns.gap_before,
                    GAP_FLOOR,
                ),
                Event::IntSync => ck.check(
                    Certificate::SingleStep,
                    step.iter,
                    Some(i),
                    ns.gap_after,
                    single_factor * ns.gap_before + single_add,
                    GAP_FLOOR,
                ),
                Event::Rollback => {}
            }
        }
    }

    // The averaged iterate after each single-round loop.
    let mut sync_steps = trace.steps.iter().filter(|s| s.event != Event::IndComp);
    for sync in &trace.syncs {
        let Some(step) = sync_steps.next() else {
            return Err(Error::Input("sync without a closing step".into()));
        };
        if sync.state == LoopState::Single {
            let before = step.nodes[0].gap_before;
            ck.check(
                Certificate::SingleStepMean,
                sync.s - 1,
                None,
                sync.gap,
                single_factor * before + single_add,
                GAP_FLOOR,
            );
        }
    }

    // Stretches of consecutive multi-round loops.
    let mut exit_skips = 0;
    let mut idx = 0;
    while idx < trace.syncs.len() {
        if trace.syncs[idx].state != LoopState::Repeated {
            idx += 1;
            continue;
        }
        let (start_s, g0) = match idx {
            0 => (0, trace.initial_grad_norm),
            _ => (trace.syncs[idx - 1].s, trace.syncs[idx - 1].grad_norm),
        };
        while idx < trace.syncs.len() && trace.syncs[idx].state == LoopState::Repeated {
            idx += 1;
        }
        let kept = trace.syncs[idx - 1].s - start_s;
        let relaxed_q = q * (T::one() + T::lit(REL_TOL));
        match exit_bound(relaxed_q, r_bar, lip, ell, b, nodes, g0) {
            Some(t_star) => ck.check(
                Certificate::ExitBound,
                start_s,
                None,
                T::count(kept),
                T::count(t_star),
                0.0,
            ),
            None => exit_skips += 1,
        }
    }

    let iters = trace.global_iters();
    let from = iters - ((iters as f64) * PLATEAU_WINDOW).floor() as usize;
    let max_gap = trace.mean_gap[from..]
        .iter()
        .fold(T::zero(), |m, &g| m.max(g));
    Ok(CertificateReport {
        trial: trace.trial,
        checked: ck.checked,
        events,
        trigger_skips,
        exit_skips,
        violations: ck.violations,
        plateau: Plateau {
            from,
            max_gap: max_gap.to_f64_lossy(),
            bound: bounds.gap_bound.to_f64_lossy(),
        },
    })
}

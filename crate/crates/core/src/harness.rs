//! Seeded Monte-Carlo experiments: instance generation, paired runs of every
//! (algorithm, ε) pair per trial, certification, aggregation and CSV output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algo::{initial_point, run, variant_error_model, AlgoConfig, RunTrace, Variant};
use crate::analysis::{
    asymptotic_bounds, certify_trace, contraction_q, CertificateReport, Violation, PLATEAU_WINDOW,
    VIOLATIONS_HEADER,
};
use crate::distortion::ErrorMode;
use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::network::{parse_edge_list, Topology, TopologySpec};
use crate::objective::{fmt_sci, random_instance_keyed, Objective, Problem};
use crate::rng::Domain;

/// Redraw budget when an instance does not admit the requested `r`.
pub const MAX_INSTANCE_DRAWS: usize = 1000;
/// Trials evaluated per parallel batch before folding into the aggregate.
const BATCH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GammaRule {
    /// `γ = fraction / L`.
    Fraction(f64),
    Value(f64),
}

impl GammaRule {
    pub fn resolve(self, lip: f64) -> f64 {
        match self {
            Self::Fraction(f) => f / lip,
            Self::Value(g) => g,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ZetaRule {
    Value(f64),
    /// Largest `‖∇f_j‖` seen along an exact pilot run from the same start.
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OnViolation {
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TopologyChoice {
    Complete,
    Ring,
    Path,
    EdgeFile(PathBuf),
}

impl FromStr for TopologyChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "complete" => Ok(Self::Complete),
            "ring" => Ok(Self::Ring),
            "path" => Ok(Self::Path),
            _ => match s.strip_prefix("edges:") {
                Some(p) if !p.is_empty() => Ok(Self::EdgeFile(PathBuf::from(p))),
                _ => Err(Error::Config(format!(
                    "unknown topology `{s}` (expected complete|ring|path|edges:FILE)"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub nodes: usize,
    /// Rows of each `B_i`; `None` means `⌈1.5 n⌉`.
    pub rows: Option<usize>,
    pub gamma: GammaRule,
    pub r: f64,
    pub epsilons: Vec<f64>,
    pub algorithms: Vec<Variant>,
    pub trials: usize,
    pub max_global_iters: usize,
    pub seed: u64,
    pub topology: TopologyChoice,
    pub error_mode: ErrorMode,
    pub zeta: Option<ZetaRule>,
    pub grad_tol: f64,
    pub on_violation: OnViolation,
    /// Draw a fresh instance for every trial (otherwise trial 0's instance is reused).
    pub redraw_instance: bool,
    /// Keep every trace in the result.
    pub keep_traces: bool,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 10,
            nodes: 4,
            rows: None,
            gamma: GammaRule::Fraction(0.5),
            r: 0.03,
            epsilons: vec![0.01, 0.1, 1.0, 10.0],
            algorithms: vec![Variant::Alg1, Variant::Igdds, Variant::Gd],
            trials: 1000,
            max_global_iters: 3000,
            seed: 7,
            topology: TopologyChoice::Complete,
            error_mode: ErrorMode::Ball,
            zeta: None,
            grad_tol: 0.0,
            on_violation: OnViolation::Warn,
            redraw_instance: true,
            keep_traces: false,
            out: None,
        }
    }
}

fn parse_num<F: FromStr>(key: &str, v: &str) -> Result<F> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_list<F: FromStr>(key: &str, v: &str) -> Result<Vec<F>> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

impl ExperimentConfig {
    pub fn rows(&self) -> usize {
        self.rows.unwrap_or((3 * self.n).div_ceil(2))
    }

    /// Applies one `key = value` setting. Keys match the CLI flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let v = value.trim();
        match key.as_str() {
            "n" => self.n = parse_num(&key, v)?,
            "nodes" => self.nodes = parse_num(&key, v)?,
            "rows" => self.rows = Some(parse_num(&key, v)?),
            "gamma-frac" => self.gamma = GammaRule::Fraction(parse_num(&key, v)?),
            "gamma" => self.gamma = GammaRule::Value(parse_num(&key, v)?),
            "r" => self.r = parse_num(&key, v)?,
            "eps" | "epsilons" => self.epsilons = parse_list(&key, v)?,
            "algos" | "algorithms" => self.algorithms = parse_list(&key, v)?,
            "trials" => self.trials = parse_num(&key, v)?,
            "iters" | "max-global-iters" => self.max_global_iters = parse_num(&key, v)?,
            "seed" => self.seed = parse_num(&key, v)?,
            "topology" => self.topology = v.parse()?,
            "error-mode" => self.error_mode = v.parse()?,
            "zeta" => {
                self.zeta = match v {
                    "" | "none" => None,
                    "empirical" => Some(ZetaRule::Empirical),
                    _ => Some(ZetaRule::Value(parse_num(&key, v)?)),
                }
            }
            "grad-tol" => self.grad_tol = parse_num(&key, v)?,
            "on-violation" => {
                self.on_violation = match v {
                    "warn" => OnViolation::Warn,
                    "fail" => OnViolation::Fail,
                    _ => {
                        return Err(Error::Config(format!(
                            "on-violation: `{v}` is not warn|fail"
                        )))
                    }
                }
            }
            "redraw" | "redraw-instance" => self.redraw_instance = parse_bool(&key, v)?,
            "save-traces" => self.keep_traces = parse_bool(&key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            _ => return Err(Error::Config(format!("unknown setting `{key}`"))),
        }
        Ok(())
    }

    /// Applies a line-oriented `key = value` file; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(k, v).map_err(|e| Error::Parse {
                line: idx + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.nodes < 2 {
            return bad("at least two nodes are needed".into());
        }
        if self.rows() == 0 {
            return bad("rows must be positive".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.epsilons.is_empty() {
            return bad("no ε values given".into());
        }
        if let Some(e) = self
            .epsilons
            .iter()
            .find(|e| !(**e >= 0.0 && e.is_finite()))
        {
            return bad(format!("ε = {e} must be finite and nonnegative"));
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms given".into());
        }
        match self.gamma {
            GammaRule::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                return bad(format!("gamma-frac = {f} outside (0, 1]"))
            }
            GammaRule::Value(g) if !(g > 0.0 && g.is_finite()) => {
                return bad(format!("gamma = {g} must be positive"))
            }
            _ => {}
        }
        if !(self.r >= 0.0 && self.r < 1.0) {
            return bad(format!("r = {} outside [0, 1)", self.r));
        }
        if !(self.grad_tol >= 0.0) {
            return bad("grad-tol must be nonnegative".into());
        }
        if self.algorithms.contains(&Variant::Alg2) && self.zeta.is_none() {
            return bad("alg2 needs zeta (a value or `empirical`)".into());
        }
        if let Some(ZetaRule::Value(z)) = self.zeta {
            if !(z >= 0.0 && z.is_finite()) {
                return bad(format!("zeta = {z} must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    pub fn topology_spec(&self) -> Result<TopologySpec> {
        Ok(match &self.topology {
            TopologyChoice::Complete => TopologySpec::Complete(self.nodes),
            TopologyChoice::Ring => TopologySpec::Ring(self.nodes),
            TopologyChoice::Path => TopologySpec::Path(self.nodes),
            TopologyChoice::EdgeFile(p) => TopologySpec::Edges {
                nodes: self.nodes,
                edges: parse_edge_list(&fs::read_to_string(p)?)?,
            },
        })
    }

    fn needs_r_check(&self) -> bool {
        self.r > 0.0
            && self
                .algorithms
                .iter()
                .any(|a| matches!(a, Variant::Alg1 | Variant::Alg2))
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: `{v}` is not a boolean"))),
    }
}

/// Instance used by `trial`, redrawn until the requested `r` is admissible.
/// Returns the problem and the number of draws it took.
pub fn trial_instance(config: &ExperimentConfig, trial: usize) -> Result<(Problem<f64>, usize)> {
    let t = if config.redraw_instance {
        trial as u64
    } else {
        0
    };
    for attempt in 0..MAX_INSTANCE_DRAWS {
        let p = if attempt == 0 {
            random_instance_keyed(
                config.n,
                config.rows(),
                config.nodes,
                Domain::Instance,
                &[config.seed, t],
            )?
        } else {
            random_instance_keyed(
                config.n,
                config.rows(),
                config.nodes,
                Domain::InstanceRedraw,
                &[config.seed, t, attempt as u64],
            )?
        };
        if !config.needs_r_check() {
            return Ok((p, attempt + 1));
        }
        let lip = p.smoothness();
        let gamma = config.gamma.resolve(lip).min(1.0 / lip);
        let (_, _, r_max) = contraction_q(gamma, lip, p.strong_convexity(), config.r)?;
        if config.r < r_max {
            return Ok((p, attempt + 1));
        }
    }
    Err(Error::Config(format!(
        "no instance with r = {} < r_max in {MAX_INSTANCE_DRAWS} draws; use more rows or a smaller r",
        config.r
    )))
}

/// `max_j ‖∇f_j(x)‖` along an exact gradient-descent pilot run.
pub fn empirical_zeta(problem: &Problem<f64>, gamma: f64, x0: &[f64], iters: usize) -> Result<f64> {
    let topo = Topology::complete(problem.nodes())?;
    let mut cfg = AlgoConfig::new(Variant::Gd, gamma, 0.0, 0.0, iters);
    cfg.record_iterates = true;
    let tr = run(problem, &topo, &cfg, &crate::ErrorModel::none(), x0, 0)?;
    let mut zeta = 0.0_f64;
    for x in tr.iterates.iter().flatten() {
        for comp in problem.components() {
            zeta = zeta.max(norm(&comp.gradient(x)));
        }
    }
    Ok(zeta)
}

/// Outcome of one (algorithm, ε) run in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algo: Variant,
    pub eps: f64,
    /// Max of `f(x̄) - f*` over the trailing window.
    pub plateau_max: f64,
    /// Mean of `f(x̄) - f*` over the trailing window.
    pub plateau_mean: f64,
    /// Limit bound for this instance and configuration.
    pub gap_bound: f64,
    pub final_gap: f64,
    pub syncs: usize,
    pub global_iters: usize,
    pub indcomp_messages: usize,
    pub intsync_messages: usize,
    /// First sync ordinal whose gap is at most twice the same trial's
    /// `alg1` plateau mean at this ε.
    pub syncs_to_target: Option<usize>,
    pub report: CertificateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub draws: usize,
    pub lipschitz: f64,
    pub ell: f64,
    pub gamma: f64,
    /// `γLr̄² / (1 - γℓ)`.
    pub perturbation_ratio: f64,
    pub zeta: Option<f64>,
    pub runs: Vec<RunSummary>,
}

impl TrialSummary {
    pub fn get(&self, algo: Variant, eps: f64) -> Option<&RunSummary> {
        self.runs.iter().find(|r| r.algo == algo && r.eps == eps)
    }
}

/// A trace with everything needed to certify it again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceBundle {
    pub problem: String,
    pub topology: TopologySpec,
    pub config: AlgoConfig<f64>,
    pub trace: RunTrace<f64>,
}

impl TraceBundle {
    pub fn recertify(&self) -> Result<CertificateReport> {
        let problem = Problem::from_text(&self.problem)?;
        certify_trace(&self.trace, &problem, &self.config)
    }
}

/// Streaming mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Welford {
    pub count: usize,
    pub mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Sample standard deviation; zero for fewer than two samples.
    pub fn std(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub algo: Variant,
    pub eps: f64,
    /// `f(x̄) - f*` per global iteration.
    pub by_iter: Vec<Welford>,
    /// Gap at the m-th sync, `m = 1, 2, …`.
    pub by_sync: Vec<Welford>,
    pub indcomp_messages: u64,
    pub intsync_messages: u64,
    pub violations: usize,
}

impl Series {
    fn absorb(&mut self, trace: &RunTrace<f64>) {
        grow(&mut self.by_iter, trace.mean_gap.len());
        for (w, &g) in self.by_iter.iter_mut().zip(&trace.mean_gap) {
            w.push(g);
        }
        grow(&mut self.by_sync, trace.syncs.len());
        for (w, s) in self.by_sync.iter_mut().zip(&trace.syncs) {
            w.push(s.gap);
        }
        self.indcomp_messages += trace.indcomp_messages as u64;
        self.intsync_messages += trace.intsync_messages as u64;
    }

    /// Mean of the averaged curve over the trailing window.
    pub fn plateau(&self) -> f64 {
        let window = &self.by_iter[plateau_start(self.by_iter.len() - 1)..];
        window.iter().map(|w| w.mean).sum::<f64>() / window.len() as f64
    }

    /// First sync ordinal at which the averaged sync curve is at or below `target`.
    pub fn syncs_to(&self, target: f64) -> Option<usize> {
        self.by_sync
            .iter()
            .position(|w| w.mean <= target)
            .map(|i| i + 1)
    }

    /// Averaged gap at sync ordinal `m`, if any trial reached it.
    pub fn gap_at_sync(&self, m: usize) -> Option<f64> {
        m.checked_sub(1)
            .and_then(|i| self.by_sync.get(i))
            .map(|w| w.mean)
    }
}

fn grow(v: &mut Vec<Welford>, len: usize) {
    if v.len() < len {
        v.resize(len, Welford::default());
    }
}

fn plateau_start(iters: usize) -> usize {
    iters - ((iters as f64) * PLATEAU_WINDOW).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub config: ExperimentConfig,
    pub series: Vec<Series>,
    pub trials: Vec<TrialSummary>,
    pub violations: Vec<(Variant, f64, Violation)>,
    #[serde(skip)]
    pub traces: Vec<TraceBundle>,
}

impl AggregateResult {
    pub fn series(&self, algo: Variant, eps: f64) -> Option<&Series> {
        self.series.iter().find(|s| s.algo == algo && s.eps == eps)
    }

    pub fn has_violations(&self) -> bool {
        !self.violations.is_empty()
    }

    pub fn convergence_csv(&self) -> String {
        let mut s = String::from("algo,eps,iter,mean_gap,std_gap,trials\n");
        for ser in &self.series {
            let eps = fmt_sci(ser.eps);
            for (k, w) in ser.by_iter.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{eps},{k},{},{},{}",
                    ser.algo,
                    fmt_sci(w.mean),
                    fmt_sci(w.std()),
                    w.count
                );
            }
        }
        s
    }

    pub fn syncs_csv(&self) -> String {
        let mut s = String::from("algo,eps,m,mean_gap_at_sync,trials_contributing\n");
        for ser in &self.series {
            let eps = fmt_sci(ser.eps);
            for (i, w) in ser.by_sync.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{eps},{},{},{}",
                    ser.algo,
                    i + 1,
                    fmt_sci(w.mean),
                    w.count
                );
            }
        }
        s
    }

    /// Violations with the run they came from in front.
    pub fn violations_csv(&self) -> String {
        let mut s = format!("algo,eps,{VIOLATIONS_HEADER}\n");
        for (algo, eps, v) in &self.violations {
            let row = crate::analysis::violations_csv(std::slice::from_ref(v));
            let _ = write!(s, "{algo},{},{row}", fmt_sci(*eps));
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<6} {:>10} {:>14} {:>14} {:>10} {:>14} {:>14} {:>10}",
            "algo",
            "eps",
            "plateau",
            "final_gap",
            "syncs",
            "indcomp_msgs",
            "intsync_msgs",
            "violations"
        );
        let trials = self.trials.len().max(1) as f64;
        for ser in &self.series {
            let syncs: f64 = self
                .trials
                .iter()
                .filter_map(|t| t.get(ser.algo, ser.eps))
                .map(|r| r.syncs as f64)
                .sum::<f64>()
                / trials;
            let _ = writeln!(
                s,
                "{:<6} {:>10.3e} {:>14.6e} {:>14.6e} {:>10.1} {:>14} {:>14} {:>10}",
                ser.algo,
                ser.eps,
                ser.plateau(),
                ser.by_iter.last().map_or(f64::NAN, |w| w.mean),
                syncs,
                ser.indcomp_messages,
                ser.intsync_messages,
                ser.violations
            );
        }
        s
    }

    /// Writes `convergence.csv`, `syncs.csv`, `violations.csv` and `summary.txt`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("convergence.csv"), self.convergence_csv())?;
        fs::write(dir.join("syncs.csv"), self.syncs_csv())?;
        fs::write(dir.join("violations.csv"), self.violations_csv())?;
        fs::write(dir.join("summary.txt"), self.summary())?;
        Ok(())
    }
}

struct TrialOutput {
    summary: TrialSummary,
    traces: Vec<(usize, RunTrace<f64>)>,
    bundles: Vec<TraceBundle>,
}

fn run_trial(
    config: &ExperimentConfig,
    topology: &Topology,
    topo_spec: &TopologySpec,
    trial: usize,
) -> Result<TrialOutput> {
    let (problem, draws) = trial_instance(config, trial)?;
    let lip = problem.smoothness();
    let ell = problem.strong_convexity();
    let gamma = config.gamma.resolve(lip);
    let x0: Vec<f64> = initial_point(config.n, config.seed, trial);
    let zeta = match config.zeta {
        None => None,
        Some(ZetaRule::Value(z)) => Some(z),
        Some(ZetaRule::Empirical) => Some(empirical_zeta(
            &problem,
            gamma.min(1.0 / lip),
            &x0,
            config.max_global_iters,
        )?),
    };
    let (_, r_bar, _) = contraction_q(gamma.min(1.0 / lip), lip, ell, config.r)?;
    let mut summary = TrialSummary {
        trial,
        draws,
        lipschitz: lip,
        ell,
        gamma,
        perturbation_ratio: gamma * lip * r_bar * r_bar / (1.0 - gamma * ell),
        zeta,
        runs: Vec::new(),
    };
    let mut traces = Vec::new();
    let mut bundles = Vec::new();
    for &algo in &config.algorithms {
        for &eps in &config.epsilons {
            let (r, e) = match algo {
                Variant::Alg1 | Variant::Alg2 => (config.r, eps),
                Variant::Igdds => (0.0, eps),
                Variant::Gd => (0.0, 0.0),
            };
            let mut cfg = AlgoConfig::new(algo, gamma, r, e, config.max_global_iters);
            cfg.grad_tol = config.grad_tol;
            if algo == Variant::Alg2 {
                cfg.zeta = zeta;
            }
            let model = variant_error_model(algo, config.error_mode, e, config.seed)?;
            let trace = run(&problem, topology, &cfg, &model, &x0, trial)?;
            let report = certify_trace(&trace, &problem, &cfg)?;
            let bounds = asymptotic_bounds(gamma, e, cfg.zeta, config.nodes, lip, ell, r)?;
            let start = plateau_start(trace.global_iters());
            let window = &trace.mean_gap[start..];
            summary.runs.push(RunSummary {
                algo,
                eps,
                plateau_max: report.plateau.max_gap,
                plateau_mean: window.iter().sum::<f64>() / window.len() as f64,
                gap_bound: bounds.gap_bound,
                final_gap: trace.final_gap(),
                syncs: trace.syncs.len(),
                global_iters: trace.global_iters(),
                indcomp_messages: trace.indcomp_messages,
                intsync_messages: trace.intsync_messages,
                syncs_to_target: None,
                report,
            });
            if config.keep_traces {
                bundles.push(TraceBundle {
                    problem: problem.to_text(),
                    topology: topo_spec.clone(),
                    config: cfg,
                    trace: trace.clone(),
                });
            }
            traces.push((summary.runs.len() - 1, trace));
        }
    }
    // Sync counts to reach twice this trial's alg1 plateau.
    for &eps in &config.epsilons {
        let Some(base) = summary.get(Variant::Alg1, eps).map(|r| r.plateau_mean) else {
            continue;
        };
        let target = 2.0 * base;
        for (idx, trace) in &traces {
            let run = &mut summary.runs[*idx];
            if run.eps == eps {
                run.syncs_to_target = trace
                    .syncs
                    .iter()
                    .position(|s| s.gap <= target)
                    .map(|i| i + 1);
            }
        }
    }
    Ok(TrialOutput {
        summary,
        traces,
        bundles,
    })
}

/// Runs every trial, certifying and aggregating in trial order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<AggregateResult> {
    config.validate()?;
    let topo_spec = config.topology_spec()?;
    let topology = Topology::build(&topo_spec)?;
    let mut series: Vec<Series> = config
        .algorithms
        .iter()
        .flat_map(|&algo| {
            config.epsilons.iter().map(move |&eps| Series {
                algo,
                eps,
                by_iter: Vec::new(),
                by_sync: Vec::new(),
                indcomp_messages: 0,
                intsync_messages: 0,
                violations: 0,
            })
        })
        .collect();
    let mut result = AggregateResult {
        config: config.clone(),
        series: Vec::new(),
        trials: Vec::with_capacity(config.trials),
        violations: Vec::new(),
        traces: Vec::new(),
    };
    let mut start = 0;
    while start < config.trials {
        let end = (start + BATCH).min(config.trials);
        let outputs: Vec<Result<TrialOutput>> = (start..end)
            .into_par_iter()
            .map(|t| run_trial(config, &topology, &topo_spec, t))
            .collect();
        for out in outputs {
            let out = out?;
            for (idx, trace) in &out.traces {
                let run = &out.summary.runs[*idx];
                let ser = &mut series[*idx];
                debug_assert!(ser.algo == run.algo && ser.eps == run.eps);
                ser.absorb(trace);
                ser.violations += run.report.violations.len();
                result.violations.extend(
                    run.report
                        .violations
                        .iter()
                        .map(|v| (run.algo, run.eps, v.clone())),
                );
            }
            result.trials.push(out.summary);
            result.traces.extend(out.bundles);
        }
        start = end;
    }
    result.series = series;
    Ok(result)
}

/// Instance diagnostics for the first trial's problem.
pub fn sanity_report(config: &ExperimentConfig) -> Result<String> {
    config.validate()?;
    let (p, draws) = trial_instance(config, 0)?;
    let lip = p.smoothness();
    let ell = p.strong_convexity();
    let gamma = config.gamma.resolve(lip);
    let (q, r_bar, r_max) = contraction_q(gamma, lip, ell, config.r)?;
    let pert = gamma * lip * r_bar * r_bar;
    let contraction = 1.0 - gamma * ell;
    let ratio = pert / contraction;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "instance: n = {}, N = {}, rows = {}, draws = {draws}",
        config.n,
        config.nodes,
        config.rows()
    );
    let _ = writeln!(s, "L          = {lip:.10e}");
    let _ = writeln!(s, "ell        = {ell:.10e}");
    let _ = writeln!(s, "ell / L    = {:.10e}", ell / lip);
    let _ = writeln!(s, "gamma      = {gamma:.10e}");
    let _ = writeln!(s, "r          = {}", config.r);
    let _ = writeln!(s, "r_max      = {r_max:.10e}");
    let _ = writeln!(s, "r_bar      = {r_bar:.10e}");
    let _ = writeln!(s, "q          = {q:.10e}");
    let _ = writeln!(s, "gamma L r_bar^2 = {pert:.10e}");
    let _ = writeln!(s, "1 - gamma ell   = {contraction:.10e}");
    let _ = writeln!(
        s,
        "ratio      = {ratio:.10e} ({})",
        if ratio < 0.01 {
            "< 0.01, perturbation negligible"
        } else {
            ">= 0.01"
        }
    );
    for &eps in &config.epsilons {
        if config.r >= r_max {
            break;
        }
        let zeta = match config.zeta {
            Some(ZetaRule::Value(z)) => Some(z),
            _ => None,
        };
        let b = asymptotic_bounds(gamma, eps, zeta, config.nodes, lip, ell, config.r)?;
        let _ = writeln!(
            s,
            "eps = {eps:<8} gap <= {:.6e}  grad <= {:.6e}  dist <= {:.6e}  igdds gap <= {:.6e}",
            b.gap_bound, b.grad_bound, b.dist_bound, b.igdds_gap_bound
        );
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            n: 4,
            nodes: 3,
            epsilons: vec![0.1, 1.0],
            trials: 3,
            max_global_iters: 200,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn config_text_round() {
        let c = ExperimentConfig::from_text(
            "# comment\nn = 6\nnodes=5\neps = 0.5, 2\nalgos = alg1,gd\nzeta = empirical\ngamma_frac = 1\n",
        )
        .unwrap();
        assert_eq!((c.n, c.nodes), (6, 5));
        assert_eq!(c.epsilons, vec![0.5, 2.0]);
        assert_eq!(c.algorithms, vec![Variant::Alg1, Variant::Gd]);
        assert_eq!(c.zeta, Some(ZetaRule::Empirical));
        assert_eq!(c.gamma, GammaRule::Fraction(1.0));
        assert_eq!(c.rows(), 9);
        assert!(matches!(
            ExperimentConfig::from_text("bogus = 1"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn validation() {
        let mut c = small();
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = small();
        c.epsilons.clear();
        assert!(c.validate().is_err());
        let mut c = small();
        c.algorithms = vec![Variant::Alg2];
        assert!(c.validate().is_err());
    }

    #[test]
    fn deterministic_and_paired() {
        let c = small();
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(a.convergence_csv(), b.convergence_csv());
        assert_eq!(a.syncs_csv(), b.syncs_csv());
        assert_eq!(a.trials.len(), 3);
        for t in &a.trials {
            // gd ignores ε, so both of its runs coincide.
            let g1 = t.get(Variant::Gd, 0.1).unwrap();
            let g2 = t.get(Variant::Gd, 1.0).unwrap();
            assert_eq!(g1.final_gap, g2.final_gap);
        }
        assert!(!a.has_violations(), "{}", a.violations_csv());
    }

    #[test]
    fn sync_counts_nonincreasing() {
        let a = run_experiment(&small()).unwrap();
        for s in &a.series {
            assert!(s.by_sync.windows(2).all(|w| w[0].count >= w[1].count));
            assert!(s.by_iter.iter().all(|w| w.mean.is_finite()));
        }
    }

    #[test]
    fn sanity_toy_numbers() {
        let rep = sanity_report(&small()).unwrap();
        assert!(rep.contains("gamma L r_bar^2"));
        let mut c = small();
        c.r = 0.0;
        let rep = sanity_report(&c).unwrap();
        assert!(rep.contains("gamma L r_bar^2 = 0.0000000000e0"));
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0];
        let mut w = Welford::default();
        xs.iter().for_each(|&x| w.push(x));
        let mean = xs.iter().sum::<f64>() / 4.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0;
        assert!((w.mean - mean).abs() < 1e-15);
        assert!((w.std() - var.sqrt()).abs() < 1e-14);
    }
}

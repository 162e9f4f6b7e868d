//! End-to-end acceptance checks. Prints one PASS/FAIL line per check and
//! exits non-zero if any fails.

use std::time::{Duration, Instant};

use igd_sync::algo::{initial_point, intsync, RunState};
use igd_sync::analysis::{asymptotic_bounds, Certificate, CertificateReport};
use igd_sync::harness::{GammaRule, TopologyChoice, ZetaRule};
use igd_sync::objective::random_instance_with_rows;
use igd_sync::rng::{self, Domain};
use igd_sync::*;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

fn timed<R>(f: impl FnOnce() -> R) -> (R, Duration) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed())
}

fn paper_config() -> ExperimentConfig {
    ExperimentConfig {
        trials: 200,
        max_global_iters: 3000,
        ..ExperimentConfig::default()
    }
}

fn reports(res: &AggregateResult) -> impl Iterator<Item = &CertificateReport> {
    res.trials
        .iter()
        .flat_map(|t| t.runs.iter().map(|r| &r.report))
}

fn certificate_tally(res: &AggregateResult, c: Certificate) -> (usize, usize) {
    reports(res).fold((0, 0), |(checked, bad), r| {
        (checked + r.checked(c), bad + r.violations_of(c).count())
    })
}

fn gd_degeneration() -> Outcome {
    let ((worst, count), took) = timed(|| {
        let mut worst = 0.0_f64;
        let mut count = 0;
        for seed in 0..50u64 {
            let p = random_instance_with_rows::<f64>(10, 15, 4, seed).unwrap();
            let t = Topology::complete(4).unwrap();
            let gamma = 0.5 / p.smoothness();
            let mut cfg = AlgoConfig::new(Variant::Alg1, gamma, 0.0, 0.0, 500);
            cfg.record_iterates = true;
            let x0: Vec<f64> = initial_point(10, seed, 0);
            let tr = run(&p, &t, &cfg, &ErrorModel::none(), &x0, 0).unwrap();
            // Reference: plain gradient descent on f = Σ xᵀA_jx + c_jᵀx.
            let mut x = x0.clone();
            for (k, got) in tr.iterates.as_ref().unwrap().iter().enumerate() {
                let num: f64 = got
                    .iter()
                    .zip(&x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let den: f64 = x
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt()
                    .max(f64::MIN_POSITIVE);
                worst = worst.max(num / den);
                count += 1;
                if k == 500 {
                    break;
                }
                let mut g = [0.0; 10];
                for comp in p.components() {
                    let a = comp.a();
                    for i in 0..10 {
                        let ax: f64 = (0..10).map(|j| a[(i, j)] * x[j]).sum();
                        g[i] += 2.0 * ax + comp.c()[i];
                    }
                }
                for i in 0..10 {
                    x[i] -= gamma * g[i];
                }
            }
        }
        (worst, count)
    });
    outcome(
        "exact trigger-free runs equal plain gradient descent",
        worst <= 1e-12 && count == 50 * 501 && took < Duration::from_secs(5),
        format!("max relative difference {worst:.3e} over {count} iterates, {took:.2?}"),
    )
}

fn lemma_config() -> ExperimentConfig {
    ExperimentConfig {
        gamma: GammaRule::Fraction(1.0),
        epsilons: vec![0.1, 1.0],
        algorithms: vec![Variant::Alg1],
        trials: 100,
        max_global_iters: 3000,
        ..ExperimentConfig::default()
    }
}

fn drift(res: &AggregateResult, took: Duration) -> Outcome {
    let (checked, bad) = certificate_tally(res, Certificate::Drift);
    let (sc, sb) = certificate_tally(res, Certificate::Spread);
    outcome(
        "gradient deviation stays within 2εN(k+1/2)",
        bad == 0 && sb == 0 && checked > 0 && took < Duration::from_secs(30),
        format!(
            "{checked} node-steps checked, {bad} violations; copy spread {sc} checked, {sb} violations; {took:.2?}"
        ),
    )
}

fn trigger_implication(res: &AggregateResult) -> Outcome {
    let (checked, bad) = certificate_tally(res, Certificate::Trigger);
    let skips: usize = reports(res).map(|r| r.trigger_skips).sum();
    let steps: usize = reports(res).map(|r| r.events.total()).sum();
    let skip_frac = skips as f64 / steps as f64;
    outcome(
        "continuing nodes have relative deviation at most r/(1-r)",
        bad == 0 && checked > 0 && skip_frac <= 1e-3,
        format!("{checked} continuing node-steps, {bad} violations, {skips} skipped ({skip_frac:.2e} of {steps} steps)"),
    )
}

fn contraction(res: &AggregateResult) -> Outcome {
    let (checked, bad) = certificate_tally(res, Certificate::Contraction);
    outcome(
        "kept steps of repeated inner loops contract the gap by q (γ = 1/L)",
        bad == 0 && checked > 0,
        format!("{checked} node-steps checked, {bad} violations"),
    )
}

fn single_step(res: &AggregateResult) -> Outcome {
    let (checked, bad) = certificate_tally(res, Certificate::SingleStep);
    let (mc, mb) = certificate_tally(res, Certificate::SingleStepMean);
    outcome(
        "single-round loops obey the (1-γℓ) bound, averaged iterate included",
        bad == 0 && mb == 0 && checked > 0 && mc > 0,
        format!("{checked} node checks, {bad} violations; {mc} averaged checks, {mb} violations"),
    )
}

fn exit_bound(res: &AggregateResult) -> Outcome {
    let (checked, bad) = certificate_tally(res, Certificate::ExitBound);
    let skips: usize = reports(res).map(|r| r.exit_skips).sum();
    let expected = res.config.max_global_iters;
    let finished = res
        .trials
        .iter()
        .flat_map(|t| &t.runs)
        .all(|r| r.global_iters == expected);
    outcome(
        "inner loops terminate and repeated stretches respect the derived exit bound",
        bad == 0 && finished && skips == 0,
        format!("{checked} stretches checked, {bad} violations, {skips} unbounded; all runs reached {expected} iterations: {finished}"),
    )
}

fn plateau(res: &AggregateResult, took: Duration) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = took < Duration::from_secs(120);
    for &eps in &res.config.epsilons {
        let mut worst: f64 = 0.0;
        let mut above = 0;
        for t in &res.trials {
            let r = t.get(Variant::Alg1, eps).unwrap();
            worst = worst.max(r.plateau_max / r.gap_bound);
            if r.plateau_max > r.gap_bound {
                above += 1;
            }
        }
        ok &= above == 0;
        lines.push(format!(
            "ε={eps}: max plateau/bound {worst:.3e}, {above} above"
        ));
    }
    outcome(
        "trailing plateau below ε²N²/(2(ℓ-Lr̄²)) on every instance",
        ok,
        format!("{}; experiment {took:.2?}", lines.join("; ")),
    )
}

fn ordering(res: &AggregateResult) -> Outcome {
    let eps = &res.config.epsilons;
    let alg1: Vec<f64> = eps
        .iter()
        .map(|&e| res.series(Variant::Alg1, e).unwrap().plateau())
        .collect();
    let igdds: Vec<f64> = eps
        .iter()
        .map(|&e| res.series(Variant::Igdds, e).unwrap().plateau())
        .collect();
    let ordered = alg1.windows(2).all(|w| w[0] < w[1]) && igdds.windows(2).all(|w| w[0] < w[1]);
    let ratio = res
        .trials
        .iter()
        .map(|t| t.perturbation_ratio)
        .fold(0.0, f64::max);
    let mut close = true;
    let mut parts = Vec::new();
    for (i, &e) in eps.iter().enumerate() {
        let rel = (alg1[i] - igdds[i]).abs() / igdds[i];
        if ratio < 0.01 {
            close &= rel < 0.05;
        }
        parts.push(format!(
            "ε={e}: alg1 {:.3e} igdds {:.3e} (rel diff {rel:.3})",
            alg1[i], igdds[i]
        ));
    }
    outcome(
        "plateaus ordered by ε; Algorithm 1 and IGDDS plateaus within 5%",
        ordered && close,
        format!(
            "ordered: {ordered}; max γLr̄²/(1-γℓ) = {ratio:.2e}; within 5%: {close}; {}",
            parts.join("; ")
        ),
    )
}

fn sync_efficiency(res: &AggregateResult) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for &eps in &res.config.epsilons {
        let n = res.trials.len();
        let wins = res
            .trials
            .iter()
            .filter(|t| {
                let a = t.get(Variant::Alg1, eps).unwrap().syncs_to_target;
                let b = t.get(Variant::Igdds, eps).unwrap().syncs_to_target;
                match (a, b) {
                    (Some(a), Some(b)) => a < b,
                    (Some(_), None) => true,
                    _ => false,
                }
            })
            .count();
        let frac = wins as f64 / n as f64;
        let alg1 = res.series(Variant::Alg1, eps).unwrap();
        let gd = res.series(Variant::Gd, eps).unwrap();
        let target = 2.0 * alg1.plateau();
        let m_alg1 = alg1.syncs_to(target);
        let m_gd = gd.syncs_to(target);
        let gd_slower = match (m_alg1, m_gd) {
            (Some(a), Some(g)) => a <= 150 && g > a,
            (Some(a), None) => a <= 150,
            _ => false,
        };
        ok &= frac >= 0.95 && gd_slower;
        parts.push(format!(
            "ε={eps}: alg1 fewer syncs than IGDDS in {frac:.3} of trials; mean-curve syncs to {target:.2e}: alg1 {m_alg1:?}, gd {m_gd:?}"
        ));
    }
    outcome(
        "Algorithm 1 needs fewer syncs than IGDDS (≥95% of trials) and than GD",
        ok,
        parts.join("; "),
    )
}

fn general_graph() -> Outcome {
    let (detail, took) = timed(|| {
        // Tree averaging on the ring equals the direct mean.
        let ring = Topology::build(&TopologySpec::Ring(6)).unwrap();
        let mut worst_avg = 0.0_f64;
        for s in 0..200u64 {
            let mut st = RunState::new(&[0.0; 5], 6, 0);
            st.x = (0..6).map(|i| initial_point(5, s, i)).collect();
            st.k = 1;
            let direct: Vec<f64> = (0..5)
                .map(|d| st.x.iter().map(|x| x[d]).sum::<f64>() / 6.0)
                .collect();
            let p = random_instance_with_rows::<f64>(5, 8, 6, s).unwrap();
            intsync(&mut st, &p, &ring).unwrap();
            for xi in &st.x {
                for d in 0..5 {
                    worst_avg = worst_avg.max((xi[d] - direct[d]).abs() / (1.0 + direct[d].abs()));
                }
            }
        }
        // Non-neighbors contribute exactly zero.
        let p = random_instance_with_rows::<f64>(5, 8, 6, 1).unwrap();
        let model = ErrorModel::new(ErrorMode::Ball, 1.0, 3).unwrap();
        let mut zero_ok = true;
        let mut non_edges = 0;
        for i in 0..6 {
            for j in 0..6 {
                if i != j && !ring.is_edge(i, j) {
                    non_edges += 1;
                    let h = ring.measure(&p, &model, i, j, &initial_point(5, 4, j), 7, 0);
                    zero_ok &= h.iter().all(|&v| v == 0.0);
                }
            }
        }
        // Plateau with τ = max(ε, ζ).
        let cfg = ExperimentConfig {
            n: 5,
            nodes: 6,
            topology: TopologyChoice::Ring,
            algorithms: vec![Variant::Alg2],
            epsilons: vec![0.1, 1.0],
            zeta: Some(ZetaRule::Value(50.0)),
            trials: 20,
            max_global_iters: 2000,
            ..ExperimentConfig::default()
        };
        let res = run_experiment(&cfg).unwrap();
        let above = res
            .trials
            .iter()
            .flat_map(|t| &t.runs)
            .filter(|r| r.plateau_max > r.gap_bound)
            .count();
        let loosest = res
            .trials
            .iter()
            .flat_map(|t| &t.runs)
            .map(|r| r.gap_bound / r.plateau_max.max(1e-300))
            .fold(f64::INFINITY, f64::min);
        (
            worst_avg,
            zero_ok,
            non_edges,
            above,
            loosest,
            res.violations.len(),
        )
    });
    let (worst_avg, zero_ok, non_edges, above, loosest, viol) = detail;
    outcome(
        "ring topology: tree mean, zero non-edge measurements, τ-plateau bound",
        worst_avg <= 1e-12 && zero_ok && above == 0 && took < Duration::from_secs(30),
        format!(
            "tree vs direct mean {worst_avg:.2e}; {non_edges} non-edge pairs zero: {zero_ok}; {above} runs above bound (bound/plateau ≥ {loosest:.2e}); certificate violations {viol}; {took:.2?}"
        ),
    )
}

fn bound_algebra() -> Outcome {
    let mut worst_grad = 0.0_f64;
    let mut worst_dist = 0.0_f64;
    let mut igdds_exact = true;
    for i in 0..1000u64 {
        let mut r = rng::keyed(Domain::Probe, &[i]);
        let mut u = || rng::unit_interval::<f64, _>(&mut r);
        let lip = 0.1 + 1000.0 * u();
        let ell = lip * (1e-4 + 0.9999 * u());
        let gamma = (0.01 + 0.99 * u()) / lip;
        let nodes = 2 + (u() * 20.0) as usize;
        let eps = 1e-3 + 10.0 * u();
        let r_max = ell.sqrt() / (lip.sqrt() + ell.sqrt());
        let rr = 0.999 * u() * r_max;
        let b = asymptotic_bounds(gamma, eps, None, nodes, lip, ell, rr).unwrap();
        let g = 2.0 * lip * b.gap_bound;
        worst_grad = worst_grad.max((b.grad_bound.powi(2) - g).abs() / g);
        let d = 2.0 * lip * b.gap_bound / ell;
        worst_dist = worst_dist.max((b.dist_bound.powi(2) - d).abs() / d);
        let b0 = asymptotic_bounds(gamma, eps, None, nodes, lip, ell, 0.0).unwrap();
        igdds_exact &= b0.gap_bound == b0.igdds_gap_bound;
    }
    outcome(
        "bound algebra: grad² = 2L·gap, dist² = 2L·gap/ℓ, r = 0 gives the IGDDS bound",
        worst_grad <= 1e-12 && worst_dist <= 1e-12 && igdds_exact,
        format!("max rel error {worst_grad:.2e} / {worst_dist:.2e}; r=0 exact: {igdds_exact}"),
    )
}

fn reproducible(first: &AggregateResult) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    first.write_to(&a).unwrap();
    let second = run_experiment(&paper_config()).unwrap();
    second.write_to(&b).unwrap();
    let same = |f: &str| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap();
    let (c, s) = (same("convergence.csv"), same("syncs.csv"));
    let bytes = std::fs::metadata(a.join("convergence.csv")).unwrap().len();
    outcome(
        "rerun with the same seed gives byte-identical CSVs",
        c && s,
        format!("convergence.csv identical: {c} ({bytes} bytes); syncs.csv identical: {s}"),
    )
}

fn main() {
    let mut results = Vec::new();
    let mut report = |o: Outcome, idx: usize| {
        println!(
            "[{}] {:>2}. {}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            idx,
            o.name,
            o.detail
        );
        results.push(o.pass);
    };

    report(gd_degeneration(), 1);

    let (lemma, took) = timed(|| run_experiment(&lemma_config()).unwrap());
    report(drift(&lemma, took), 2);
    report(trigger_implication(&lemma), 3);
    report(contraction(&lemma), 4);
    report(single_step(&lemma), 5);
    report(exit_bound(&lemma), 6);
    drop(lemma);

    let (paper, took) = timed(|| run_experiment(&paper_config()).unwrap());
    report(plateau(&paper, took), 7);
    report(ordering(&paper), 8);
    report(sync_efficiency(&paper), 9);
    report(general_graph(), 10);
    report(bound_algebra(), 11);
    report(reproducible(&paper), 12);

    let failed = results.iter().filter(|p| !**p).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

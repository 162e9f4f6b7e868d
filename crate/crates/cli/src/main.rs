use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use igd_sync::harness::{OnViolation, TraceBundle};
use igd_sync::{asymptotic_bounds, run_experiment, sanity_report, Error, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "igd-sync",
    version,
    about = "Inexact distributed gradient descent with triggered synchronization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded Monte-Carlo experiment and write CSV results.
    Run(Box<RunArgs>),
    /// Re-check a saved trace against the per-step certificates.
    Certify {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Print contraction factor and limit bounds for given constants.
    Bounds(BoundsArgs),
    /// Print diagnostics of the first instance a configuration generates.
    Sanity {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` file; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    nodes: Option<String>,
    /// Rows of each B_i (default ceil(1.5 n)).
    #[arg(long)]
    rows: Option<String>,
    /// Step size as a fraction of 1/L.
    #[arg(long)]
    gamma_frac: Option<String>,
    /// Explicit step size.
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    r: Option<String>,
    /// Comma-separated error levels.
    #[arg(long)]
    eps: Option<String>,
    /// Comma-separated subset of alg1,alg2,igdds,gd.
    #[arg(long)]
    algos: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// none|ball|sphere|shared|quant
    #[arg(long)]
    error_mode: Option<String>,
    /// complete|ring|path|edges:FILE
    #[arg(long)]
    topology: Option<String>,
    /// Gradient bound for alg2, or `empirical`.
    #[arg(long)]
    zeta: Option<String>,
    #[arg(long)]
    grad_tol: Option<String>,
    /// warn|fail
    #[arg(long)]
    on_violation: Option<String>,
    /// Draw a new instance per trial (true|false).
    #[arg(long)]
    redraw: Option<String>,
    /// Also write every trace as JSON under OUT/traces.
    #[arg(long)]
    save_traces: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        [
            ("n", &self.n),
            ("nodes", &self.nodes),
            ("rows", &self.rows),
            ("gamma-frac", &self.gamma_frac),
            ("gamma", &self.gamma),
            ("r", &self.r),
            ("eps", &self.eps),
            ("algos", &self.algos),
            ("trials", &self.trials),
            ("iters", &self.iters),
            ("seed", &self.seed),
            ("error-mode", &self.error_mode),
            ("topology", &self.topology),
            ("zeta", &self.zeta),
            ("grad-tol", &self.grad_tol),
            ("on-violation", &self.on_violation),
            ("redraw", &self.redraw),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
        .collect()
    }
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long = "L")]
    lip: f64,
    #[arg(long)]
    ell: f64,
    #[arg(long)]
    gamma: f64,
    #[arg(long)]
    r: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 4)]
    nodes: usize,
    #[arg(long)]
    zeta: Option<f64>,
}

enum Failure {
    Config(String),
    Certificate(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Parse { .. } | Error::Input(_) => Self::Config(e.to_string()),
            _ => Self::Other(e.to_string()),
        }
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::default();
    if let Some(p) = path {
        let text =
            fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
        cfg.apply_text(&text)?;
    }
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = load_config(args.config.as_ref())?;
    for (k, v) in args.overrides() {
        cfg.set(k, v)?;
    }
    if args.save_traces {
        cfg.keep_traces = true;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    let result = run_experiment(&cfg)?;
    print!("{}", result.summary());
    if let Some(dir) = &cfg.out {
        result.write_to(dir)?;
        if cfg.keep_traces {
            let tdir = dir.join("traces");
            fs::create_dir_all(&tdir).map_err(|e| Failure::Other(e.to_string()))?;
            for b in &result.traces {
                let name = format!(
                    "trial{}_{}_eps{}.json",
                    b.trace.trial, b.config.variant, b.config.epsilon
                );
                let json = serde_json::to_string(b).map_err(|e| Failure::Other(e.to_string()))?;
                fs::write(tdir.join(name), json).map_err(|e| Failure::Other(e.to_string()))?;
            }
        }
        println!("wrote {}", dir.display());
    }
    if result.has_violations() {
        let msg = format!("{} certificate violations", result.violations.len());
        match cfg.on_violation {
            OnViolation::Fail => return Err(Failure::Certificate(msg)),
            OnViolation::Warn => eprintln!("warning: {msg}"),
        }
    }
    Ok(())
}

fn cmd_certify(path: PathBuf) -> Result<(), Failure> {
    let text = fs::read_to_string(&path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let bundle: TraceBundle =
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("bad trace file: {e}")))?;
    let report = bundle.recertify()?;
    print!("{}", report.summary());
    if !report.passed() {
        print!(
            "{}\n{}",
            igd_sync::analysis::VIOLATIONS_HEADER,
            igd_sync::analysis::violations_csv(&report.violations)
        );
        return Err(Failure::Certificate(format!(
            "{} certificate violations",
            report.violations.len()
        )));
    }
    Ok(())
}

fn cmd_bounds(a: BoundsArgs) -> Result<(), Failure> {
    let b = asymptotic_bounds(a.gamma, a.eps, a.zeta, a.nodes, a.lip, a.ell, a.r)?;
    println!("q               {:.10e}", b.q);
    println!("r_bar           {:.10e}", b.r_bar);
    println!("r_max           {:.10e}", b.r_max);
    println!("tau             {:.10e}", b.tau);
    println!("gap_bound       {:.10e}", b.gap_bound);
    println!("grad_bound      {:.10e}", b.grad_bound);
    println!("dist_bound      {:.10e}", b.dist_bound);
    println!("igdds_gap_bound {:.10e}", b.igdds_gap_bound);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => cmd_run(*args),
        Command::Certify { trace } => cmd_certify(trace),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Sanity { config } => load_config(Some(&config))
            .and_then(|c| sanity_report(&c).map_err(Failure::from))
            .map(|s| print!("{s}")),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Certificate(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

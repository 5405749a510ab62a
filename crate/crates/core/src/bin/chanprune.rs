//! Experiment runner. Exit codes: 0 ok, 2 usage, 3 config, 4 missing
//! upstream artifact, 5 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chanprune::config::{Overrides, RunConfig};
use chanprune::demos::{demo_cancellation, demo_phase_transition, demo_proxy_fidelity, PhaseTransitionConfig, ProxyFidelityConfig};
use chanprune::importance::Metric;
use chanprune::{pipeline, Error};

#[derive(Parser)]
#[command(name = "chanprune", version, about = "Channel pruning, fine-tuning and cascaded routing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config and CHANPRUNE_OUT.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the full-width teacher.
    TrainTeacher(Common),
    /// Score the target layer's channels.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_metric)]
        metric: Option<Metric>,
        /// Number of calibration batches.
        #[arg(long = "T", value_parser = clap::value_parser!(u64).range(1..))]
        batches: Option<u64>,
    },
    /// Keep the top-k channels and cut the rest out.
    Prune {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        k: Option<u64>,
    },
    /// Fine-tune the pruned network.
    Finetune(Common),
    /// Route the eval split through the cascade at one threshold.
    Route {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tau: Option<f64>,
    },
    /// Sweep the threshold grid and extract Pareto fronts.
    Sweep(Common),
    /// Stability, orthogonality, proxy fidelity and entropy diagnostics.
    Analyze(Common),
    /// Every stage in order.
    RunAll(Common),
    /// Signal-cancellation probe.
    DemoCancellation {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inherited vs scratch narrow networks at extreme sparsity.
    DemoPhaseTransition {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ℓ1 vs AGF full/pruned ratios on converged teachers.
    DemoProxyFidelity {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse().map_err(|_| format!("unknown metric '{s}' (valid: {})", Metric::valid_names()))
}

fn load(common: &Common, mut overrides: Overrides) -> chanprune::Result<RunConfig> {
    overrides.out_dir = common.out.clone();
    RunConfig::load(&common.config, &overrides)
}

fn verdict_code(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(command: Command) -> chanprune::Result<ExitCode> {
    match command {
        Command::TrainTeacher(c) => {
            let cfg = load(&c, Overrides::default())?;
            let h = pipeline::train_teacher(&cfg)?;
            if let Some(last) = h.epochs.last() {
                println!("teacher: {} epochs, train acc {:.4}, eval acc {:.4}", h.len(), last.train_acc, last.eval_acc.unwrap_or(f64::NAN));
            }
        }
        Command::Calibrate { common, metric, batches } => {
            let cfg = load(&common, Overrides { metric, batches: batches.map(|t| t as usize), ..Default::default() })?;
            if batches.is_some() && cfg.prune.metric.is_data_free() {
                eprintln!("warning: {} is data-free; --T is ignored", cfg.prune.metric);
            }
            let t = pipeline::calibrate(&cfg)?;
            println!("{} scores for {} channels -> {}", t.metric, t.width(), pipeline::artifact(&cfg, &pipeline::scores_file(t.metric)).display());
        }
        Command::Prune { common, k } => {
            let cfg = load(&common, Overrides { k: k.map(|k| k as usize), ..Default::default() })?;
            let spec = pipeline::prune(&cfg)?;
            println!("kept {} channels: {:?}", spec.keep.len(), spec.keep);
        }
        Command::Finetune(c) => {
            let cfg = load(&c, Overrides::default())?;
            let h = pipeline::finetune(&cfg)?;
            match h.epochs.last() {
                Some(last) => println!("fine-tuned {} epochs, eval acc {:.4}", h.len(), last.eval_acc.unwrap_or(f64::NAN)),
                None => println!("fine-tuned 0 epochs"),
            }
        }
        Command::Route { common, tau } => {
            let cfg = load(&common, Overrides { tau, ..Default::default() })?;
            let t = pipeline::route(&cfg)?;
            println!("tau {}: accuracy {:.4}, routed fraction {:.4}", t.tau, t.accuracy(), t.routed_fraction());
        }
        Command::Sweep(c) => {
            let cfg = load(&c, Overrides::default())?;
            let s = pipeline::sweep(&cfg)?;
            println!("tau,accuracy,routed_fraction,cost_cascade,cost_exclusive");
            for r in &s.rows {
                println!("{},{:.4},{:.4},{:.4},{:.4}", r.tau, r.accuracy, r.routed_fraction, r.cost_cascade, r.cost_exclusive);
            }
        }
        Command::Analyze(c) => {
            let cfg = load(&c, Overrides::default())?;
            let s = pipeline::analyze(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&s).expect("summary serializes"));
        }
        Command::RunAll(c) => {
            let cfg = load(&c, Overrides::default())?;
            let s = pipeline::run_all(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&s).expect("summary serializes"));
        }
        Command::DemoCancellation { out } => {
            let r = demo_cancellation(out.as_deref())?;
            println!("{}", r.summary());
            return Ok(verdict_code(r.pass));
        }
        Command::DemoPhaseTransition { out } => {
            let r = demo_phase_transition(&PhaseTransitionConfig::default(), out.as_deref())?;
            println!("{}", r.summary());
            return Ok(verdict_code(r.pass));
        }
        Command::DemoProxyFidelity { out } => {
            let r = demo_proxy_fidelity(&ProxyFidelityConfig::default(), out.as_deref())?;
            println!("{}", r.summary());
            return Ok(verdict_code(r.pass));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 3,
                Error::Dependency(_) => 4,
                _ => 5,
            })
        }
    }
}

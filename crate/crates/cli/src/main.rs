//! `synrl`: run synaptic-RL and gradient-descent experiments from JSON manifests.
//!
//! Exit codes: 0 success, 2 validation error, 3 training divergence.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand};
use synrl_core::experiment::{self, Command, ExperimentManifest, RunOptions, RunSummary};
use synrl_core::{Error, Mlp};

#[derive(Parser)]
#[command(
    name = "synrl",
    version,
    about = "Gradient-free MLP training with a shared synaptic Q-learning policy"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train network and policy together; writes policy, net, metrics and summary.
    TrainPolicy(Common),
    /// Apply a frozen policy; the policy file is only read.
    ApplyPolicy {
        #[command(flatten)]
        common: Common,
        /// Policy file; overrides the manifest's policy source.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Full-batch gradient-descent baseline.
    Gd(Common),
    /// Generate boundary-matching tasks (target net + labelled points).
    GenBoundary(Common),
    /// Evaluate a saved net on a manifest's data.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        net: PathBuf,
        /// Which repeat's data split to evaluate on.
        #[arg(long, default_value_t = 0)]
        repeat: usize,
    },
    /// Difference of headline accuracy between two run summaries.
    Compare {
        summary_a: PathBuf,
        summary_b: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    repeats: Option<usize>,
    /// 1 = reproducibility mode.
    #[arg(long)]
    threads: Option<usize>,
    /// Replace an existing experiment directory.
    #[arg(long)]
    force: bool,
}

impl Common {
    fn load(&self) -> anyhow::Result<(ExperimentManifest, RunOptions)> {
        let manifest = ExperimentManifest::load(&self.manifest)
            .with_context(|| format!("reading manifest {}", self.manifest.display()))?;
        let opts = RunOptions {
            seed: self.seed,
            out: self.out.clone(),
            repeats: self.repeats,
            threads: self.threads,
            force: self.force,
        };
        Ok((manifest, opts))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let diverged = err
                .chain()
                .any(|e| matches!(e.downcast_ref::<Error>(), Some(Error::Divergence { .. })));
            ExitCode::from(if diverged { 3 } else { 2 })
        }
    }
}

fn run(cmd: Cmd) -> anyhow::Result<()> {
    match cmd {
        Cmd::TrainPolicy(common) => execute(&common, Command::TrainPolicy, None),
        Cmd::ApplyPolicy { common, policy } => execute(&common, Command::ApplyPolicy, policy),
        Cmd::Gd(common) => execute(&common, Command::Gd, None),
        Cmd::GenBoundary(common) => {
            let (m, opts) = common.load()?;
            for dir in experiment::gen_boundary(&m, &opts)? {
                println!("{}", dir.display());
            }
            Ok(())
        }
        Cmd::Eval {
            common,
            net,
            repeat,
        } => {
            let (m, opts) = common.load()?;
            let net = Mlp::load(&net).with_context(|| format!("reading net {}", net.display()))?;
            let report = experiment::eval(&m, &net, repeat, &opts)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Cmd::Compare {
            summary_a,
            summary_b,
        } => {
            let a = RunSummary::load(&summary_a)?;
            let b = RunSummary::load(&summary_b)?;
            println!(
                "{} vs {}: {}",
                a.experiment_id,
                b.experiment_id,
                experiment::compare(&a, &b)
            );
            Ok(())
        }
    }
}

fn execute(common: &Common, command: Command, policy: Option<PathBuf>) -> anyhow::Result<()> {
    let (m, opts) = common.load()?;
    let report = experiment::run(&m, command, policy.as_deref(), &opts)?;
    let s = &report.summary;
    let headline = s.headline();
    println!(
        "{}: {} repeat(s), accuracy mean {:.4} stdev {:.4} (min {:.4}, max {:.4}), {:.1}s",
        s.experiment_id,
        s.repeats.len(),
        headline.mean,
        headline.stdev,
        headline.min,
        headline.max,
        report.wall_clock_seconds.iter().sum::<f64>()
    );
    println!("{}", m_dir(&m, &opts).display());
    Ok(())
}

fn m_dir(m: &ExperimentManifest, opts: &RunOptions) -> PathBuf {
    let mut m = m.clone();
    m.apply(opts);
    m.experiment_dir()
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dfsense::cli;
use dfsense::config::{Overrides, RunConfig};
use dfsense::eval::AlarmChannel;

fn parse_channel(s: &str) -> Result<AlarmChannel, String> {
    match s {
        "basic" => Ok(AlarmChannel::Basic),
        "refined" => Ok(AlarmChannel::Refined),
        other => Err(format!("unknown channel '{other}' (expected basic or refined)")),
    }
}

/// Passive motion detection over received-signal-strength streams.
#[derive(Parser)]
#[command(name = "dfsense", version, disable_help_subcommand = true)]
struct Args {
    /// TOML run config; relative paths inside it resolve against its
    /// directory.
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed (also drives synthetic generation).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the window length.
    #[arg(long, global = true)]
    l: Option<usize>,
    /// Override the profile tail mass.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Override the profile update group size.
    #[arg(long, global = true)]
    l_update: Option<usize>,
    /// Override the score smoothing coefficient.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Override the relative alarm threshold.
    #[arg(long, global = true)]
    rel_threshold: Option<f64>,
    /// Override the training prefix length in seconds.
    #[arg(long, global = true)]
    train_secs: Option<f64>,
    /// Alarm channel to evaluate: basic or refined.
    #[arg(long, global = true, value_parser = parse_channel)]
    channel: Option<AlarmChannel>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic trace and label file from [synth] and the
    /// site geometry.
    Gen,
    /// Learn per-stream silence profiles from the training prefix.
    Train,
    /// Monitor the trace with trained profiles; write decision and
    /// verdict logs.
    Run {
        /// Score the fresh logs right away (same output as a separate
        /// eval).
        #[arg(long)]
        eval: bool,
    },
    /// Score an existing decision log against the labels.
    Eval,
    /// Run the main pipeline and every enabled baseline on one trace.
    Compare,
    /// Grid over window length, tail mass, and update group size.
    Sweep,
    /// Rasterize one tick's verdicts into a heat-grid CSV.
    Heatmap {
        /// Time of the tick to rasterize.
        #[arg(long)]
        t: Option<f64>,
    },
}

fn run(args: Args) -> dfsense::Result<()> {
    let mut cfg = RunConfig::load(&args.config)?;
    cfg.apply(&Overrides {
        seed: args.seed,
        out: args.out,
        l: args.l,
        alpha: args.alpha,
        l_update: args.l_update,
        beta: args.beta,
        rel_threshold: args.rel_threshold,
        train_secs: args.train_secs,
        channel: args.channel,
        t: match &args.cmd {
            Cmd::Heatmap { t } => *t,
            _ => None,
        },
    });
    match args.cmd {
        Cmd::Gen => cli::cmd_gen(&cfg),
        Cmd::Train => cli::cmd_train(&cfg),
        Cmd::Run { eval } => cli::cmd_run(&cfg, eval),
        Cmd::Eval => cli::cmd_eval(&cfg),
        Cmd::Compare => cli::cmd_compare(&cfg),
        Cmd::Sweep => cli::cmd_sweep(&cfg),
        Cmd::Heatmap { .. } => cli::cmd_heatmap(&cfg),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

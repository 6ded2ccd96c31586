//! `rlsum` command-line tool.

mod backends;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "rlsum", version, about = "Unsupervised sentence summarization with reward-driven training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set lambda=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the shuffle/drop/add reconstruction dataset from a corpus.
    PretrainData {
        #[arg(long)]
        corpus: Option<String>,
        /// Dataset TSV to write.
        #[arg(long)]
        output: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the generator to reconstruct original sentences.
    Pretrain {
        #[arg(long)]
        dataset: Option<String>,
        /// Checkpoint root to write.
        #[arg(long)]
        checkpoint: Option<String>,
        #[arg(long)]
        init: Option<String>,
        /// Continue from the latest step under the checkpoint root.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        max_steps: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Reward-driven training on an unlabelled corpus.
    TrainRl {
        #[arg(long)]
        corpus: Option<String>,
        /// Checkpoint root to write.
        #[arg(long)]
        checkpoint: Option<String>,
        /// Starting weights, e.g. a pretraining checkpoint.
        #[arg(long)]
        init: Option<String>,
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        max_steps: Option<usize>,
        /// msl or single.
        #[arg(long)]
        mode: Option<String>,
        /// Comma-separated target lengths, e.g. `8,10,13` or `30%,40%,50%`.
        #[arg(long)]
        lengths: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Decode one summary per input line.
    Summarize {
        #[arg(long)]
        checkpoint: Option<String>,
        #[arg(long)]
        input: Option<String>,
        #[arg(long)]
        output: Option<String>,
        /// Word count or percentage of the input length.
        #[arg(long)]
        length: Option<String>,
        #[arg(long)]
        beam_size: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Score summaries (or a checkpoint) against references.
    Evaluate {
        /// TSV of input and references.
        #[arg(long)]
        data: Option<String>,
        #[arg(long)]
        summaries: Option<String>,
        #[arg(long)]
        checkpoint: Option<String>,
        /// gigaword_f1 or duc_recall.
        #[arg(long)]
        protocol: Option<String>,
        #[arg(long)]
        report: Option<String>,
        #[arg(long)]
        length: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Print every config key with its default and meaning.
    Keys,
}

fn flag(out: &mut Vec<(String, String)>, key: &str, value: Option<impl ToString>) {
    if let Some(v) = value {
        out.push((key.to_string(), v.to_string()));
    }
}

type Pairs = Vec<(String, String)>;

fn overrides(common: &Common, mut specific: Pairs) -> Result<(Pairs, Option<PathBuf>)> {
    let mut out = Vec::new();
    for s in &common.set {
        let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {s:?}"))?;
        out.push((k.trim().to_string(), v.to_string()));
    }
    flag(&mut out, "workers", common.workers);
    flag(&mut out, "seed", common.seed);
    out.append(&mut specific);
    Ok((out, common.config.clone()))
}

fn run(cli: Cli) -> Result<()> {
    type Handler = fn(&RunConfig) -> Result<()>;
    let (common, specific, handler): (Common, Vec<(String, String)>, Handler) = match cli.command {
        Command::Keys => {
            for (key, default, about) in config::KEYS {
                println!("{key:<18} {default:<12} {about}");
            }
            return Ok(());
        }
        Command::PretrainData { corpus, output, common } => {
            let mut v = Vec::new();
            flag(&mut v, "corpus", corpus);
            flag(&mut v, "dataset", output);
            (common, v, commands::pretrain_data)
        }
        Command::Pretrain { dataset, checkpoint, init, resume, max_steps, common } => {
            let mut v = Vec::new();
            flag(&mut v, "dataset", dataset);
            flag(&mut v, "checkpoint", checkpoint);
            flag(&mut v, "init_checkpoint", init);
            flag(&mut v, "resume", resume.then_some(true));
            flag(&mut v, "max_steps", max_steps);
            (common, v, commands::pretrain_cmd)
        }
        Command::TrainRl { corpus, checkpoint, init, resume, max_steps, mode, lengths, common } => {
            let mut v = Vec::new();
            flag(&mut v, "corpus", corpus);
            flag(&mut v, "checkpoint", checkpoint);
            flag(&mut v, "init_checkpoint", init);
            flag(&mut v, "resume", resume.then_some(true));
            flag(&mut v, "max_steps", max_steps);
            flag(&mut v, "mode", mode);
            flag(&mut v, "lengths", lengths);
            (common, v, commands::train_rl)
        }
        Command::Summarize { checkpoint, input, output, length, beam_size, common } => {
            let mut v = Vec::new();
            flag(&mut v, "checkpoint", checkpoint);
            flag(&mut v, "input", input);
            flag(&mut v, "output", output);
            flag(&mut v, "length", length);
            flag(&mut v, "beam_size", beam_size);
            (common, v, commands::summarize)
        }
        Command::Evaluate { data, summaries, checkpoint, protocol, report, length, common } => {
            let mut v = Vec::new();
            flag(&mut v, "eval_data", data);
            flag(&mut v, "summaries", summaries);
            flag(&mut v, "checkpoint", checkpoint);
            flag(&mut v, "protocol", protocol);
            flag(&mut v, "report", report);
            flag(&mut v, "length", length);
            (common, v, commands::evaluate_cmd)
        }
    };
    let (over, file) = overrides(&common, specific)?;
    let cfg = RunConfig::resolve(file.as_deref(), std::env::vars(), &over)?;
    let workers: usize = cfg.get("workers")?;
    if workers > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(workers).build_global()?;
    }
    handler(&cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

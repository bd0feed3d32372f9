//! `zonofair`: pretrain → train → distances/neighbors → verify → ablate.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use zonofair::embed::Norm;
use zonofair::verify::DEFAULT_COMBINATION_CAP;

use commands::Threshold;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "zonofair", version, about = "Certified embedding-level fairness for small transformer classifiers")]
struct Cli {
    /// Seed for initialization, shuffling, dropout and splits
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for per-sentence verification (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// TOML file with [pretrain], [model], [train] and [search] sections
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PositionArgs {
    /// Perturb only the first N non-padding tokens
    #[arg(long, conflicts_with = "position_list")]
    positions: Option<usize>,

    /// Perturb these token indices (comma separated)
    #[arg(long, value_delimiter = ',')]
    position_list: Option<Vec<usize>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    Linf,
    L2,
}

#[derive(Subcommand)]
enum Command {
    /// Contrastive pre-training of an embedding table
    Pretrain {
        /// Pair file for the clustering phase (left<TAB>right<TAB>label)
        #[arg(long)]
        cluster: Option<PathBuf>,
        /// Pair file for the general semantic phase, run after clustering
        #[arg(long)]
        general: Option<PathBuf>,
        /// Dataset files whose words join the vocabulary
        #[arg(long)]
        corpus: Vec<PathBuf>,
        /// Word lists whose entries join the vocabulary
        #[arg(long)]
        words: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Loss history (default: <out stem>.history.json)
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Train a classifier on top of a frozen table
    Train {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Epoch history (default: <out stem>.history.json)
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Distance of every pair in a pair file
    Distances {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, value_enum, default_value = "linf")]
        norm: NormArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Nearest neighbors of anchor words and the threshold D
    Neighbors {
        #[arg(long)]
        table: PathBuf,
        /// Word list of anchors
        #[arg(long)]
        anchors: Option<PathBuf>,
        /// Single anchor word (repeatable)
        #[arg(long)]
        anchor: Vec<String>,
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify every sentence of a dataset and report the fairness score
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Word list of anchors defining D
        #[arg(long, required_unless_present = "threshold")]
        anchors: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        k: usize,
        /// Use this D instead of computing it from anchors
        #[arg(long, conflicts_with = "anchors")]
        threshold: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Radar CSV (default: <out> with extension .csv)
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Only the first N sentences
        #[arg(long)]
        limit: Option<usize>,
        #[command(flatten)]
        positions: PositionArgs,
    },
    /// Exhaustive synonym substitution check
    BruteForce {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// token<TAB>alt1,alt2 lines
        #[arg(long)]
        synonyms: PathBuf,
        #[arg(long, default_value_t = DEFAULT_COMBINATION_CAP)]
        cap: u64,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        positions: PositionArgs,
    },
    /// Fairness score and radii across models and neighbor counts
    Ablate {
        #[arg(long, num_args = 1.., required = true)]
        models: Vec<PathBuf>,
        #[arg(long = "k", num_args = 1.., required = true)]
        ks: Vec<usize>,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        anchors: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        limit: Option<usize>,
        #[command(flatten)]
        positions: PositionArgs,
    },
    /// Dataset preparation
    #[command(subcommand)]
    Prepare(Prepare),
}

#[derive(Subcommand)]
enum Prepare {
    /// Census-style CSV to templated sentences, split per class
    Tabular {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// train,val,test fractions
        #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
        ratios: Vec<f64>,
    },
    /// Random synonym replacement over a dataset
    Augment {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        synonyms: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        p: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Pretrain { cluster, general, corpus, words, out, history } => commands::pretrain(
            commands::PretrainArgs { cluster, general, corpus, words, out, history },
            &cfg,
            seed,
        ),
        Command::Train { table, train, val, out, history, epochs } => commands::train(
            commands::TrainArgs { table, train, val, out, history, epochs },
            &cfg,
            cli.seed,
        ),
        Command::Distances { table, pairs, norm, out } => {
            let norm = match norm {
                NormArg::Linf => Norm::LInf,
                NormArg::L2 => Norm::L2,
            };
            commands::distances(&table, &pairs, norm, out.as_deref())
        }
        Command::Neighbors { table, anchors, anchor, k, out } => {
            commands::neighbors(&table, anchors.as_deref(), &anchor, k, out.as_deref())
        }
        Command::Verify { model, dataset, anchors, k, threshold, out, csv, limit, positions } => {
            let threshold = match threshold {
                Some(d) => Threshold::Fixed(d),
                None => Threshold::Anchors { file: anchors, inline: Vec::new(), k },
            };
            commands::verify(
                commands::VerifyArgs {
                    model,
                    dataset,
                    threshold,
                    out,
                    csv,
                    positions: commands::selection(positions.positions, positions.position_list),
                    limit,
                },
                &cfg,
            )
        }
        Command::BruteForce { model, dataset, synonyms, cap, limit, out, positions } => {
            commands::brute_force(commands::BruteForceArgs {
                model,
                dataset,
                synonyms,
                positions: commands::selection(positions.positions, positions.position_list),
                cap,
                limit,
                out,
            })
        }
        Command::Ablate { models, ks, dataset, anchors, out_dir, limit, positions } => commands::ablate(
            commands::AblateArgs {
                models,
                ks,
                dataset,
                anchors,
                out_dir,
                positions: commands::selection(positions.positions, positions.position_list),
                limit,
            },
            &cfg,
        ),
        Command::Prepare(Prepare::Tabular { csv, out_dir, ratios }) => {
            commands::prepare_tabular(&csv, &out_dir, [ratios[0], ratios[1], ratios[2]], seed)
        }
        Command::Prepare(Prepare::Augment { dataset, synonyms, p, out }) => {
            commands::prepare_augment(&dataset, &synonyms, p, &out, seed)
        }
    }
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

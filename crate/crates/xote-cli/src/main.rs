//! Command-line entry point for the cross-lingual opinion target extraction
//! toolkit: corpus ingestion, embedding alignment, training, evaluation and
//! the experiment grids.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use config::{parse_lang_path, ExperimentConfig};
use std::path::PathBuf;
use xote::ingest::Split;

#[derive(Parser)]
#[command(
    name = "xote",
    version,
    about = "Zero-shot cross-lingual opinion target extraction"
)]
struct Cli {
    /// Worker threads for grid commands (falls back to XOTE_WORKERS, then
    /// the available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a SemEval ABSA XML file into the CoNLL-style format plus an
    /// ingest report.
    Ingest {
        /// Path to the XML file.
        xml: PathBuf,
        #[arg(long)]
        lang: String,
        #[arg(long, default_value = "train")]
        split: Split,
        #[arg(long, default_value = "ingested")]
        out: PathBuf,
        /// Embedding tables to compute out-of-vocabulary statistics against.
        #[arg(long = "embeddings", value_parser = parse_lang_path)]
        embeddings: Vec<(String, PathBuf)>,
        #[arg(long, default_value_t = xote::embeddings::DEFAULT_VOCAB_CAP)]
        cap: usize,
    },
    /// Fit an orthogonal projection from source to target embeddings over a
    /// bilingual dictionary and report precision@k.
    Align {
        #[arg(long)]
        src_lang: String,
        #[arg(long)]
        src_vec: PathBuf,
        #[arg(long)]
        tgt_lang: String,
        #[arg(long)]
        tgt_vec: PathBuf,
        /// Training dictionary: one "source target" pair per line.
        #[arg(long)]
        dict: PathBuf,
        /// Held-out dictionary for the precision diagnostic.
        #[arg(long)]
        test_dict: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = xote::embeddings::DEFAULT_VOCAB_CAP)]
        cap: usize,
        /// Use raw instead of unit-normalized dictionary vectors.
        #[arg(long)]
        no_normalize: bool,
    },
    /// Train a single model on one or more source languages.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated source languages.
        #[arg(long, value_delimiter = ',')]
        src: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "embeddings", value_parser = parse_lang_path)]
        embeddings: Vec<(String, PathBuf)>,
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Evaluate a checkpoint on a corpus with exact-span F1.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        lang: String,
        #[arg(long = "embeddings", value_parser = parse_lang_path)]
        embeddings: Vec<(String, PathBuf)>,
        #[arg(long = "projection", value_parser = parse_lang_path)]
        projections: Vec<(String, PathBuf)>,
        #[arg(long, default_value_t = xote::embeddings::DEFAULT_VOCAB_CAP)]
        cap: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train on every source language and evaluate on every target
    /// language (the full grid).
    ZeroShot {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "embeddings", value_parser = parse_lang_path)]
        embeddings: Vec<(String, PathBuf)>,
        #[arg(long)]
        cap: Option<usize>,
    },
    /// For each language, train on all the others and evaluate on it.
    LeaveOneOut {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "embeddings", value_parser = parse_lang_path)]
        embeddings: Vec<(String, PathBuf)>,
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Learning curves over increasing amounts of target-language data.
    Curve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        source: String,
        #[arg(long)]
        target: String,
        /// Comma-separated sample sizes; defaults to
        /// 0,50,100,200,500,1000 capped by the target's training size.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "embeddings", value_parser = parse_lang_path)]
        embeddings: Vec<(String, PathBuf)>,
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Tag raw text (one sentence per line) and print spans as JSON lines.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        lang: String,
        #[arg(long = "embeddings", value_parser = parse_lang_path)]
        embeddings: Vec<(String, PathBuf)>,
        #[arg(long = "projection", value_parser = parse_lang_path)]
        projections: Vec<(String, PathBuf)>,
        #[arg(long, default_value_t = xote::embeddings::DEFAULT_VOCAB_CAP)]
        cap: usize,
    },
    /// Convert a .vec text embedding file into the XEMB binary cache.
    Cache {
        #[arg(long)]
        lang: String,
        #[arg(long)]
        vec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = xote::embeddings::DEFAULT_VOCAB_CAP)]
        cap: usize,
    },
    /// Report the out-of-vocabulary rate of a corpus under an embedding
    /// table.
    Oov {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        lang: String,
        #[arg(long)]
        vec: PathBuf,
        #[arg(long, default_value_t = xote::embeddings::DEFAULT_VOCAB_CAP)]
        cap: usize,
    },
    /// Print a config file template with all defaults filled in.
    ConfigTemplate,
}

fn resolve_workers(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("XOTE_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    })
}

fn load_config(
    path: &std::path::Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    embeddings: &[(String, PathBuf)],
    cap: Option<usize>,
) -> xote::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply_overrides(seed, out, embeddings, cap);
    Ok(cfg)
}

fn run(cli: Cli) -> xote::Result<()> {
    let workers = resolve_workers(cli.workers);
    match cli.command {
        Command::Ingest {
            xml,
            lang,
            split,
            out,
            embeddings,
            cap,
        } => commands::cmd_ingest(&xml, &lang, split, &out, &embeddings, cap),
        Command::Align {
            src_lang,
            src_vec,
            tgt_lang,
            tgt_vec,
            dict,
            test_dict,
            out,
            cap,
            no_normalize,
        } => commands::cmd_align(
            &src_lang,
            &src_vec,
            &tgt_lang,
            &tgt_vec,
            &dict,
            test_dict.as_deref(),
            &out,
            cap,
            !no_normalize,
        ),
        Command::Train {
            config,
            src,
            seed,
            out,
            embeddings,
            cap,
        } => {
            let cfg = load_config(&config, None, out, &embeddings, cap)?;
            if src.is_empty() {
                return Err(xote::Error::Config(
                    "at least one --src language is required".into(),
                ));
            }
            commands::cmd_train(&cfg, &src, seed)
        }
        Command::Eval {
            checkpoint,
            data,
            lang,
            embeddings,
            projections,
            cap,
            out,
        } => commands::cmd_eval(
            &checkpoint,
            &data,
            &lang,
            &embeddings,
            &projections,
            cap,
            out.as_deref(),
        ),
        Command::ZeroShot {
            config,
            seed,
            out,
            embeddings,
            cap,
        } => {
            let cfg = load_config(&config, seed, out, &embeddings, cap)?;
            commands::cmd_zero_shot(&cfg, workers)
        }
        Command::LeaveOneOut {
            config,
            seed,
            out,
            embeddings,
            cap,
        } => {
            let cfg = load_config(&config, seed, out, &embeddings, cap)?;
            commands::cmd_leave_one_out(&cfg, workers)
        }
        Command::Curve {
            config,
            source,
            target,
            sizes,
            seed,
            out,
            embeddings,
            cap,
        } => {
            let cfg = load_config(&config, seed, out, &embeddings, cap)?;
            commands::cmd_curve(&cfg, &source, &target, sizes, workers)
        }
        Command::Predict {
            checkpoint,
            input,
            lang,
            embeddings,
            projections,
            cap,
        } => commands::cmd_predict(&checkpoint, &input, &lang, &embeddings, &projections, cap),
        Command::Cache {
            lang,
            vec,
            out,
            cap,
        } => commands::cmd_cache(&lang, &vec, &out, cap),
        Command::Oov {
            data,
            lang,
            vec,
            cap,
        } => commands::cmd_oov(&data, &lang, &vec, cap),
        Command::ConfigTemplate => commands::cmd_config_template(),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!(
            "{}",
            serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string() }
            })
        );
        std::process::exit(1);
    }
}

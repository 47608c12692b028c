//! `dualrank` command line: build an index, train the projection, answer
//! queries, and evaluate datasets.
//!
//! Logs go to stderr; stdout carries machine-readable JSON only.
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 external-client
//! error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use dualrank_core::config::AppConfig;
use dualrank_core::error::EngineError;
use dualrank_core::eval::RecordError;
use dualrank_core::index::{index_dir, load_index, save_index};
use dualrank_core::pipeline;

#[derive(Parser)]
#[command(name = "dualrank", version, about = "Dual-space graph retrieval engine")]
struct Cli {
    /// JSON config file; flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    /// Corpus JSONL path ({doc_id, text} per line).
    #[arg(long, global = true)]
    corpus: Option<String>,
    /// Index directory.
    #[arg(long, global = true)]
    index_dir: Option<String>,
    /// Embedding client: "stub" or a URL.
    #[arg(long, global = true)]
    encoder: Option<String>,
    /// Extractor client: "stub" or a URL.
    #[arg(long, global = true)]
    extractor: Option<String>,
    /// Environment variable holding client credentials.
    #[arg(long, global = true)]
    credential_env: Option<String>,
    /// Embedding dimension.
    #[arg(long, global = true)]
    d: Option<usize>,
    /// Curvature magnitude.
    #[arg(long, global = true)]
    c: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    tau_syn: Option<f64>,
    #[arg(long, global = true)]
    damping: Option<f64>,
    /// Top-k facts used as seed evidence.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    lambda_seed: Option<f64>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Passages returned by `retrieve`.
    #[arg(long, global = true)]
    k_output: Option<usize>,
    /// Recall cutoff used by `eval`.
    #[arg(long, global = true)]
    k_eval: Option<usize>,
    #[arg(long, global = true)]
    max_chars: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    negatives_per_positive: Option<usize>,
    /// Drop the hyperbolic branch everywhere (ablation).
    #[arg(long, global = true)]
    disable_hyperbolic: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build the index directory from a corpus.
    Index,
    /// Train the hyperbolic projection on an existing index.
    Train {
        /// Write the per-epoch loss trace to a file instead of stdout.
        #[arg(long)]
        trace_file: Option<PathBuf>,
    },
    /// Retrieve passages for a question.
    Retrieve {
        question: String,
        /// Which ranking to print as `top`.
        #[arg(long, value_enum, default_value_t = SpaceArg::Fused)]
        space: SpaceArg,
        /// Number of passages to print (defaults to k_output).
        #[arg(long)]
        top: Option<usize>,
    },
    /// Evaluate a JSONL dataset against the index.
    Eval {
        /// Dataset JSONL: {query_id, question, gold_passage_ids, gold_answers}.
        #[arg(long)]
        dataset: PathBuf,
        /// Report JSON output path (also printed to stdout).
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SpaceArg {
    Euclidean,
    Hyperbolic,
    Fused,
}

fn apply_overrides(mut cfg: AppConfig, o: &Overrides) -> AppConfig {
    macro_rules! set {
        ($field:ident) => {
            if let Some(v) = &o.$field {
                cfg.$field = v.clone();
            }
        };
    }
    if let Some(v) = &o.corpus {
        cfg.corpus = Some(v.clone());
    }
    if let Some(v) = &o.index_dir {
        cfg.index_dir = Some(v.clone());
    }
    if let Some(v) = &o.credential_env {
        cfg.credential_env = Some(v.clone());
    }
    set!(encoder);
    set!(extractor);
    set!(d);
    set!(c);
    set!(alpha);
    set!(beta);
    set!(gamma);
    set!(tau_syn);
    set!(damping);
    set!(k);
    set!(lambda_seed);
    set!(tol);
    set!(seed);
    set!(k_output);
    set!(k_eval);
    set!(max_chars);
    set!(learning_rate);
    set!(epochs);
    set!(negatives_per_positive);
    if o.disable_hyperbolic {
        cfg.disable_hyperbolic = true;
    }
    cfg
}

fn exit_code(err: &EngineError) -> i32 {
    match err {
        EngineError::Transport(_) | EngineError::MalformedPayload { .. } => 3,
        EngineError::Config(_) | EngineError::InvalidParameter(_) => 1,
        _ => 2,
    }
}

fn load_config(cli_config: &Option<PathBuf>, o: &Overrides) -> dualrank_core::Result<AppConfig> {
    let base = match cli_config {
        Some(path) => AppConfig::load(path)?,
        None => AppConfig::default(),
    };
    let cfg = apply_overrides(base, o);
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_index(cfg: &AppConfig) -> dualrank_core::Result<()> {
    let corpus = cfg
        .corpus
        .as_ref()
        .ok_or_else(|| EngineError::Config("corpus is not set".into()))?;
    let dir = index_dir(cfg)?;
    let docs = pipeline::read_corpus(Path::new(corpus))?;
    let (index, summary) = pipeline::build_index(&docs, cfg)?;
    save_index(&dir, &index)?;
    eprintln!(
        "indexed {} documents into {}",
        summary.num_documents,
        dir.display()
    );
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn cmd_train(cfg: &AppConfig, trace_file: &Option<PathBuf>) -> dualrank_core::Result<()> {
    let dir = index_dir(cfg)?;
    let mut index = load_index(&dir)?;
    let outcome = pipeline::train_index(&mut index, cfg)?;
    save_index(&dir, &index)?;
    let mut trace = String::new();
    for (epoch, loss) in outcome.loss_trace.iter().enumerate() {
        trace.push_str(&serde_json::to_string(
            &serde_json::json!({"epoch": epoch, "loss": loss}),
        )?);
        trace.push('\n');
    }
    match trace_file {
        Some(path) => std::fs::write(path, trace)?,
        None => print!("{trace}"),
    }
    eprintln!(
        "trained {} epochs: loss {} -> {} ({} skipped anchors)",
        outcome.loss_trace.len(),
        outcome.loss_trace.first().copied().unwrap_or(0.0),
        outcome.loss_trace.last().copied().unwrap_or(0.0),
        outcome.skipped_anchors
    );
    Ok(())
}

fn cmd_retrieve(
    cfg: &AppConfig,
    question: &str,
    space: SpaceArg,
    top: Option<usize>,
) -> dualrank_core::Result<()> {
    let dir = index_dir(cfg)?;
    let index = load_index(&dir)?;
    if index.params.is_none() && !cfg.disable_hyperbolic {
        match space {
            SpaceArg::Fused | SpaceArg::Hyperbolic => {
                return Err(EngineError::Config(
                    "index has no trained projection; run `dualrank train` first or use --space euclidean"
                        .into(),
                ));
            }
            SpaceArg::Euclidean => {
                eprintln!("warning: no trained projection; hyperbolic branch unavailable");
            }
        }
    }
    let out = pipeline::retrieve(&index, cfg, question)?;
    let k = top.unwrap_or(cfg.k_output);

    let texts: std::collections::BTreeMap<&str, &str> = index
        .passages
        .iter()
        .map(|p| (p.passage_id.as_str(), p.text.as_str()))
        .collect();
    let pick = |ranking: &dualrank_core::RankingList| -> Vec<serde_json::Value> {
        ranking
            .items()
            .iter()
            .take(k)
            .map(|r| {
                serde_json::json!({
                    "passage_id": r.passage_id,
                    "score": r.score,
                    "text": texts.get(r.passage_id.as_str()).copied().unwrap_or(""),
                })
            })
            .collect()
    };
    let top_items = match space {
        SpaceArg::Euclidean => pick(&out.euclidean),
        SpaceArg::Hyperbolic => {
            let h = out.hyperbolic.as_ref().ok_or_else(|| {
                EngineError::Config(
                    "hyperbolic ranking unavailable; use --space euclidean".into(),
                )
            })?;
            pick(h)
        }
        SpaceArg::Fused => match &out.fused {
            Some(fused) => {
                let ranking = dualrank_core::fusion::to_ranking(fused);
                pick(&ranking)
            }
            None if cfg.disable_hyperbolic => pick(&out.euclidean),
            None => {
                return Err(EngineError::Config(
                    "fused ranking unavailable; use --space euclidean".into(),
                ))
            }
        },
    };
    let space_name = match space {
        SpaceArg::Euclidean => "euclidean",
        SpaceArg::Hyperbolic => "hyperbolic",
        SpaceArg::Fused => "fused",
    };
    let doc = serde_json::json!({
        "question": question,
        "space": space_name,
        "top": top_items,
        "euclidean": out.euclidean.items(),
        "hyperbolic": out.hyperbolic.as_ref().map(|h| h.items()),
        "fusion": out.fused,
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

fn cmd_eval(
    cfg: &AppConfig,
    dataset: &Path,
    report_path: &Option<PathBuf>,
) -> dualrank_core::Result<()> {
    let dir = index_dir(cfg)?;
    let index = load_index(&dir)?;
    let (rows, malformed) = dualrank_core::eval::read_dataset(dataset)?;
    for m in &malformed {
        eprintln!("warning: skipping malformed dataset row: {m}");
    }
    let mut report = pipeline::evaluate(&index, cfg, &rows)?;
    for m in malformed {
        report.errors.push(RecordError {
            query_id: String::new(),
            error: format!("malformed row: {m}"),
        });
    }
    let text = serde_json::to_string_pretty(&report)? + "\n";
    if let Some(path) = report_path {
        std::fs::write(path, &text)?;
    }
    print!("{text}");
    Ok(())
}

fn run(cli: Cli) -> dualrank_core::Result<()> {
    let cfg = load_config(&cli.config, &cli.overrides)?;
    match &cli.command {
        Command::Index => cmd_index(&cfg),
        Command::Train { trace_file } => cmd_train(&cfg, trace_file),
        Command::Retrieve {
            question,
            space,
            top,
        } => cmd_retrieve(&cfg, question, *space, *top),
        Command::Eval { dataset, report } => cmd_eval(&cfg, dataset, report),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}

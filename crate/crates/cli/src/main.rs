use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use kratt_core::bundle::{train_bundle, train_quality_gate, QualityFile, TrainOptions};
use kratt_core::corpus::{corpus_stats, load_corpus};
use kratt_core::evaluate::{
    convergence_study, evaluate_set, keyword_count_report, write_books_csv,
    write_convergence_csv, write_summary_csv,
};
use kratt_core::pipeline::{
    index_book, read_book, read_book_file, to_marc21, IndexingConfig, DEFAULT_THRESHOLD,
};
use kratt_core::preprocess::{Analyzer, RuleAnalyzer};
use kratt_core::synth::{planted_corpus, to_jsonl, PlantedConfig};
use kratt_core::tagger::DEFAULT_DIM;
use kratt_core::textqc::{passes_quality, score_text, CharModelFile, DEFAULT_ALPHA, DEFAULT_ORDER};
use kratt_core::ModelBundle;
use kratt_service::{AppState, ServiceConfig};

#[derive(Parser)]
#[command(name = "kratt", version, about = "Automatic subject indexing of books")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Marc21,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model bundle from a JSONL corpus.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        min_examples: usize,
        #[arg(long, default_value_t = DEFAULT_DIM)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory of <lang>.{lemmas,suffixes,pos}.tsv files.
        #[arg(long)]
        analyzers: Option<PathBuf>,
    },
    /// Index one book.
    Index {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "url", required_unless_present = "url")]
        book: Option<PathBuf>,
        #[arg(long)]
        url: Option<String>,
        /// Record to use when the input is a corpus file with several books.
        #[arg(long)]
        book_id: Option<String>,
        #[arg(long, default_value_t = 10)]
        pages: usize,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Report elapsed_ms as 0 so repeated runs give identical output.
        #[arg(long)]
        reproducible: bool,
        #[arg(long)]
        analyzers: Option<PathBuf>,
    },
    /// Evaluate a bundle on a JSONL test corpus.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4")]
        thresholds: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        pages: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Score against every gold term, including ones the model never saw.
        #[arg(long)]
        include_unseen: bool,
        /// Also run the recall-versus-pages study.
        #[arg(long)]
        convergence: bool,
        /// Page cap per book for the convergence study.
        #[arg(long)]
        max_pages: Option<usize>,
        /// Write books.csv, summary.csv (and convergence.csv) here.
        #[arg(long)]
        csv_dir: Option<PathBuf>,
        #[arg(long)]
        analyzers: Option<PathBuf>,
    },
    /// Train a standalone quality gate on a corpus or plain-text files.
    QcTrain {
        #[arg(long, required_unless_present = "text_file")]
        corpus: Option<PathBuf>,
        /// Form-feed separated pages; may repeat.
        #[arg(long)]
        text_file: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ORDER)]
        order: usize,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score pages of a text file with a quality gate.
    QcScore {
        /// A file from `qc-train`, or a bundle directory.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        text_file: PathBuf,
    },
    /// Print corpus statistics as JSON.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Serve the HTTP job API.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value_t = 32)]
        queue_depth: usize,
        #[arg(long)]
        analyzers: Option<PathBuf>,
    },
    /// Write a planted-topic synthetic corpus as JSONL.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        topics: usize,
        #[arg(long, default_value_t = 10)]
        books_per_topic: usize,
        #[arg(long, default_value_t = 30)]
        min_pages: usize,
        #[arg(long, default_value_t = 200)]
        max_pages: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Keep fixed across train and test corpora.
        #[arg(long, default_value_t = 7)]
        vocab_seed: u64,
    },
}

fn analyzer(dir: Option<&Path>) -> Result<Arc<dyn Analyzer>> {
    Ok(match dir {
        Some(d) => Arc::new(RuleAnalyzer::load_dir(d).with_context(|| format!("loading analyzers from {}", d.display()))?),
        None => Arc::new(RuleAnalyzer::builtin()),
    })
}

fn load_bundle(dir: &Path, analyzers: Option<&Path>) -> Result<ModelBundle> {
    ModelBundle::load(dir, analyzer(analyzers)?)
        .with_context(|| format!("loading model bundle from {}", dir.display()))
}

fn write_json_stdout<S: serde::Serialize>(value: &S) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Train {
            corpus,
            out,
            min_examples,
            dim,
            seed,
            analyzers,
        } => {
            let books = load_corpus(&corpus)?;
            let mut opts = TrainOptions::<f64>::default();
            opts.training.min_examples = min_examples;
            opts.dim = dim;
            opts.seed = seed;
            let bundle = train_bundle(&books, &opts, analyzer(analyzers.as_deref())?)?;
            bundle.save(&out)?;
            eprintln!(
                "trained {} labels on {} pages; model version {}",
                bundle.manifest.vocabulary.len(),
                bundle.manifest.training_pages,
                bundle.manifest.model_version
            );
        }
        Command::Index {
            model,
            book,
            url,
            book_id,
            pages,
            threshold,
            seed,
            format,
            reproducible,
            analyzers,
        } => {
            let bundle = load_bundle(&model, analyzers.as_deref())?;
            let record = match (book, url) {
                (Some(path), _) => read_book_file(&path, book_id.as_deref())?,
                (None, Some(url)) => {
                    let response = reqwest::blocking::get(&url)
                        .with_context(|| format!("fetching {url}"))?;
                    if !response.status().is_success() {
                        bail!("fetching {url}: HTTP {}", response.status());
                    }
                    let bytes = response.bytes()?;
                    let name = url.rsplit('/').next().map(str::to_string);
                    read_book(&bytes, name.as_deref(), book_id.as_deref())?
                }
                (None, None) => bail!("either --book or --url is required"),
            };
            let cfg = IndexingConfig {
                pages_n: pages,
                threshold,
                seed,
                hybrid: bundle.manifest.hybrid,
                ..IndexingConfig::default()
            };
            let mut outcome = index_book(&bundle, &record, &cfg, &mut |step| {
                log::info!("{}", step.label())
            })?;
            if reproducible {
                outcome.elapsed_ms = 0;
            }
            match format {
                Format::Json => write_json_stdout(&outcome)?,
                Format::Marc21 => print!("{}", to_marc21(&outcome.keywords)),
            }
        }
        Command::Eval {
            model,
            test,
            thresholds,
            pages,
            seed,
            include_unseen,
            convergence,
            max_pages,
            csv_dir,
            analyzers,
        } => {
            let bundle = load_bundle(&model, analyzers.as_deref())?;
            let books = load_corpus(&test)?;
            let cfg = IndexingConfig {
                pages_n: pages,
                seed,
                hybrid: bundle.manifest.hybrid,
                ..IndexingConfig::default()
            };
            let reports = evaluate_set(&bundle, &books, &cfg, &thresholds, !include_unseen)?;
            let counts = keyword_count_report(&bundle, &books, &cfg, &thresholds)?;
            let study = if convergence {
                Some(convergence_study(&bundle, &books, max_pages, seed, &cfg.hybrid)?)
            } else {
                None
            };
            if let Some(dir) = csv_dir {
                std::fs::create_dir_all(&dir)?;
                write_books_csv(&reports, BufWriter::new(File::create(dir.join("books.csv"))?))?;
                write_summary_csv(&reports, BufWriter::new(File::create(dir.join("summary.csv"))?))?;
                if let Some(s) = &study {
                    write_convergence_csv(s, BufWriter::new(File::create(dir.join("convergence.csv"))?))?;
                }
            }
            write_json_stdout(&serde_json::json!({
                "reports": reports,
                "keyword_counts": counts,
                "convergence": study,
            }))?;
        }
        Command::QcTrain {
            corpus,
            text_file,
            out,
            order,
            alpha,
            seed,
        } => {
            let mut texts: Vec<String> = Vec::new();
            if let Some(c) = corpus {
                texts.extend(load_corpus(&c)?.into_iter().flat_map(|b| b.pages));
            }
            for f in &text_file {
                let book = read_book_file(f, None)?;
                texts.extend(book.pages);
            }
            let (model, quality, held_out) = train_quality_gate(&texts, order, alpha, 500, seed)?;
            let file = QualityFile {
                model: CharModelFile::from_model(&model),
                quality,
            };
            let mut w = BufWriter::new(File::create(&out)?);
            serde_json::to_writer(&mut w, &file)?;
            w.flush()?;
            eprintln!(
                "threshold {:.4} calibrated on {held_out} held-out pages",
                quality.threshold
            );
        }
        Command::QcScore { model, text_file } => {
            let (char_model, quality) = if model.is_dir() {
                let b = load_bundle(&model, None)?;
                (b.char_model, b.quality)
            } else {
                let f: QualityFile<f64> = serde_json::from_reader(std::io::BufReader::new(
                    File::open(&model).with_context(|| model.display().to_string())?,
                ))?;
                (f.model.into_model()?, f.quality)
            };
            let book = read_book_file(&text_file, None)?;
            let rows: Vec<_> = book
                .pages
                .iter()
                .enumerate()
                .map(|(i, text)| {
                    serde_json::json!({
                        "page": i + 1,
                        "score": score_text(&char_model, text).ok(),
                        "passes": passes_quality(&char_model, &quality, text),
                    })
                })
                .collect();
            write_json_stdout(&serde_json::json!({
                "threshold": quality.threshold,
                "pages": rows,
            }))?;
        }
        Command::Stats { corpus } => {
            write_json_stdout(&corpus_stats(&load_corpus(&corpus)?)?)?;
        }
        Command::Serve {
            model,
            addr,
            workers,
            queue_depth,
            analyzers,
        } => {
            let bundle = Arc::new(load_bundle(&model, analyzers.as_deref())?);
            let mut cfg = ServiceConfig {
                queue_depth,
                ..ServiceConfig::default()
            };
            if let Some(w) = workers {
                cfg.workers = w;
            }
            cfg.defaults.hybrid = bundle.manifest.hybrid;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let state = AppState::start(bundle, cfg);
                let listener = tokio::net::TcpListener::bind(addr).await?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                kratt_service::serve(listener, state).await
            })?;
        }
        Command::Synth {
            out,
            topics,
            books_per_topic,
            min_pages,
            max_pages,
            seed,
            vocab_seed,
        } => {
            let cfg = PlantedConfig {
                topics,
                books_per_topic,
                min_pages,
                max_pages,
                seed,
                vocab_seed,
                ..PlantedConfig::default()
            };
            let (_, books) = planted_corpus(&cfg);
            std::fs::write(&out, to_jsonl(&books))?;
            eprintln!("wrote {} books to {}", books.len(), out.display());
        }
    }
    Ok(())
}

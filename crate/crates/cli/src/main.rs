use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use ratattn_cli::manifest::RunManifest;
use ratattn_cli::pipeline::{self, CorpusSource, GenHitsOptions, PrepareOptions, TrainOptions};
use ratattn_cli::service::{self, AppState};
use ratattn_core::models::{Architecture, ModelKind, TrainConfig};

#[derive(Parser)]
#[command(
    name = "ratattn",
    version,
    about = "Train attention and rationale CNNs, extract explanations, and run paired human judgments"
)]
struct Cli {
    /// Directory holding the run manifest and every artifact.
    #[arg(
        long,
        global = true,
        env = "RATATTN_DATA_DIR",
        default_value = "ratattn-data"
    )]
    data_dir: PathBuf,

    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Load (or synthesize) the corpus, split it and build the vocabulary.
    Prepare {
        /// Corpus JSONL file.
        #[arg(
            long,
            conflicts_with = "synthetic",
            required_unless_present = "synthetic"
        )]
        corpus: Option<PathBuf>,
        /// Generate a review-shaped synthetic corpus of N documents instead.
        #[arg(long, value_name = "N")]
        synthetic: Option<usize>,
        #[arg(long, default_value_t = 7)]
        synthetic_seed: u64,
        #[arg(long, default_value_t = 2)]
        min_count: usize,
        #[arg(long, default_value_t = 0.1)]
        dev_fraction: f64,
        #[arg(long, default_value_t = 13)]
        split_seed: u64,
        /// Annotated training documents set aside for gold questions.
        #[arg(long, default_value_t = 50)]
        gold_holdout: usize,
        #[arg(long, default_value_t = 13)]
        gold_seed: u64,
    },
    /// Train models, one run per seed, keeping the best dev seed per model.
    Train {
        /// doc-cnn, at-cnn, ra-cnn or all.
        #[arg(long, default_value = "all")]
        model: String,
        /// Comma-separated seeds.
        #[arg(long, alias = "seed", value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 25)]
        epochs: usize,
        /// RA-CNN epochs on the rationale objective before joint training.
        #[arg(long, default_value_t = 5)]
        rationale_epochs: usize,
        #[arg(long, default_value_t = 1.0)]
        rationale_weight: f64,
        #[arg(long, default_value_t = 1e-3)]
        learning_rate: f64,
        #[arg(long, default_value_t = 0.5)]
        dropout: f64,
        #[arg(long, default_value_t = 5)]
        patience: usize,
        /// word2vec text file; sets the embedding size unless --embed-dim is given.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        embed_dim: Option<usize>,
        #[arg(long, default_value_t = 50)]
        feature_maps: usize,
        #[arg(long, value_delimiter = ',', default_value = "3,4,5")]
        widths: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        attention_dim: usize,
    },
    /// Test accuracy of the selected checkpoints.
    EvalAcc {
        #[arg(long, default_value = "all")]
        model: String,
    },
    /// Write top-k explanations for every test document.
    Explain {
        /// at-cnn, ra-cnn, doc-cnn, random or all (= ra-cnn, at-cnn, random).
        #[arg(long, default_value = "all")]
        model: String,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Seed of the random baseline.
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
    /// How many explanation sentences two sources share per document.
    Overlap {
        #[arg(long, default_value = "ra-cnn")]
        first: String,
        #[arg(long, default_value = "at-cnn")]
        second: String,
        /// Restrict to test documents both models classify correctly.
        #[arg(long)]
        both_correct: bool,
    },
    /// Build gold questions and paired-comparison hits.
    GenHits {
        /// Comparisons as first:second, comma-separated.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "ra-cnn:at-cnn,at-cnn:random"
        )]
        pairs: Vec<String>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        gold_count: usize,
        /// Also include test documents a model misclassified.
        #[arg(long)]
        include_misclassified: bool,
    },
    /// Run the HTTP judgment service.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Tabulate the judgment log.
    Aggregate {
        /// Judgment log to read instead of the manifest's.
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

fn kinds(model: &str) -> anyhow::Result<Vec<ModelKind>> {
    if model == "all" {
        return Ok(ModelKind::ALL.to_vec());
    }
    Ok(vec![model.parse().map_err(anyhow::Error::msg)?])
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let root = cli.data_dir.as_path();
    match cli.verb {
        Verb::Prepare {
            corpus,
            synthetic,
            synthetic_seed,
            min_count,
            dev_fraction,
            split_seed,
            gold_holdout,
            gold_seed,
        } => {
            let source = match (corpus, synthetic) {
                (Some(p), _) => CorpusSource::File(p),
                (None, Some(documents)) => CorpusSource::Synthetic {
                    documents,
                    seed: synthetic_seed,
                },
                (None, None) => bail!("either --corpus or --synthetic is required"),
            };
            let opts = PrepareOptions {
                source,
                min_count,
                dev_fraction,
                split_seed,
                gold_holdout,
                gold_seed,
            };
            pipeline::prepare(root, &opts)?;
            let p = pipeline::Prepared::load(root)?;
            println!(
                "{} documents: train {}, dev {}, test {}, gold holdout {}; vocabulary {}",
                p.corpus.len(),
                p.split.train.len(),
                p.split.dev.len(),
                p.split.test.len(),
                p.split.gold_holdout.len(),
                p.vocab.len()
            );
        }
        Verb::Train {
            model,
            seeds,
            epochs,
            rationale_epochs,
            rationale_weight,
            learning_rate,
            dropout,
            patience,
            embeddings,
            embed_dim,
            feature_maps,
            widths,
            attention_dim,
        } => {
            let embed_dim = match (embed_dim, &embeddings) {
                (Some(d), _) => d,
                (None, Some(p)) => {
                    ratattn_core::models::PretrainedEmbeddings::load(p)
                        .with_context(|| format!("loading {}", p.display()))?
                        .dim
                }
                (None, None) => Architecture::default().embed_dim,
            };
            let arch = Architecture {
                embed_dim,
                attention_dim,
                widths,
                feature_maps,
                ..Architecture::default()
            };
            let template = TrainConfig {
                epochs,
                rationale_epochs,
                rationale_weight,
                learning_rate,
                dropout,
                patience,
                ..TrainConfig::new(ModelKind::DocCnn)
            };
            let opts = TrainOptions {
                kinds: kinds(&model)?,
                seeds,
                arch,
                template,
                embeddings,
            };
            let runs = pipeline::train(root, &opts, |kind, seed, m| {
                let dev = m
                    .dev_acc
                    .map_or("-".to_string(), |a| format!("{:.2}%", 100.0 * a));
                eprintln!(
                    "{kind} seed {seed} epoch {:>2}: loss {:.4}, dev {dev}",
                    m.epoch, m.train_loss
                );
            })?;
            for r in &runs {
                let dev = r
                    .dev_accuracy
                    .map_or("-".to_string(), |a| format!("{:.2}%", 100.0 * a));
                println!(
                    "{} seed {}: dev {dev} at epoch {} -> {}",
                    r.kind,
                    r.seed,
                    r.best_epoch,
                    r.checkpoint.display()
                );
            }
            let manifest = RunManifest::load(root)?;
            for (tag, path) in &manifest.checkpoints {
                println!("selected {tag}: {path}");
            }
        }
        Verb::EvalAcc { model } => {
            let rows = pipeline::eval_acc(root, &kinds(&model)?)?;
            std::fs::create_dir_all(root.join("results"))?;
            let json: serde_json::Map<String, serde_json::Value> = rows
                .iter()
                .map(|(k, a)| (k.as_str().to_string(), serde_json::to_value(a).unwrap()))
                .collect();
            std::fs::write(
                root.join("results/accuracy.json"),
                serde_json::to_string_pretty(&json)? + "\n",
            )?;
            print!("{}", pipeline::accuracy_table(&rows));
        }
        Verb::Explain { model, k, seed } => {
            let sources: Vec<String> = if model == "all" {
                vec!["ra-cnn".into(), "at-cnn".into(), "random".into()]
            } else {
                vec![model]
            };
            for p in pipeline::explain(root, &sources, k, seed)? {
                println!("wrote {}", p.display());
            }
        }
        Verb::Overlap {
            first,
            second,
            both_correct,
        } => {
            let report = pipeline::overlap(root, &first, &second, both_correct)?;
            println!("{first} vs {second}");
            print!("{}", report.to_table());
        }
        Verb::GenHits {
            pairs,
            seed,
            gold_count,
            include_misclassified,
        } => {
            let pairs = pairs
                .iter()
                .map(|p| match p.split_once(':') {
                    Some((a, b)) => Ok((a.to_string(), b.to_string())),
                    None => bail!("comparison `{p}` is not of the form first:second"),
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            let out = pipeline::gen_hits(
                root,
                &GenHitsOptions {
                    pairs,
                    seed,
                    gold_count,
                    include_misclassified,
                },
            )?;
            println!(
                "{} study documents, {} gold questions",
                out.documents, out.gold
            );
            for (a, b, n) in &out.per_comparison {
                println!("{a} vs {b}: {n} hits");
            }
        }
        Verb::Serve { host, port } => serve(root, &host, port)?,
        Verb::Aggregate { log } => {
            let summary = pipeline::aggregate(root, log.as_deref())?;
            print!("{}", pipeline::summary_text(&summary));
        }
    }
    Ok(())
}

fn serve(root: &Path, host: &str, port: u16) -> anyhow::Result<()> {
    let manifest = RunManifest::load(root)?;
    let hits = pipeline::hits_path(root, &manifest)?;
    let state = AppState::open(&hits, &root.join(&manifest.judgments))?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .with_context(|| format!("cannot listen on {host}:{port}"))?;
        eprintln!("serving judgments on http://{}", listener.local_addr()?);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        service::serve(listener, state, shutdown).await?;
        Ok(())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

//! `capwire` command-line entry point.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use capwire::caption::DEFAULT_CREDIT_PREFIX;
use capwire::dataset::{build_dataset, export_dataset, read_annotations, validate_dataset, Level2Policy};
use capwire::eval::{align, evaluate_corpus_async, read_jsonl, EmbeddingSimilarity, EvalReport, GroundTruth, TokenF1};
use capwire::pipeline::PipelineResult;
use capwire::service::{run_batch, serve, Backpressure, PartialConfig, QueueOptions, Service, ServiceConfig};
use capwire::{load_rosters, PipelineConfig};

#[derive(Parser)]
#[command(name = "capwire", version, about = "Entity-grounded sports photo captioning")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

/// Flags override `CAPWIRE_*` variables, which override the config file.
#[derive(Args)]
struct GlobalOpts {
    /// TOML config file.
    #[arg(long, global = true, env = "CAPWIRE_CONFIG")]
    config: Option<PathBuf>,
    /// Level-1 backend: `mock:<script.json>` or an http(s) base URL.
    #[arg(long, global = true, env = "CAPWIRE_LEVEL1_ENDPOINT")]
    level1_endpoint: Option<String>,
    /// Level-2 backend: `mock:<script.json>` or an http(s) base URL.
    #[arg(long, global = true, env = "CAPWIRE_LEVEL2_ENDPOINT")]
    level2_endpoint: Option<String>,
    /// Roster file (repeatable; env var takes a comma-separated list).
    #[arg(long = "roster", global = true, env = "CAPWIRE_ROSTER_PATHS", value_delimiter = ',')]
    roster_paths: Vec<PathBuf>,
    /// Annotation fixture file served by the in-process fixture annotator.
    #[arg(long, global = true, env = "CAPWIRE_ANNOTATOR_FIXTURES")]
    annotator_fixtures: Option<PathBuf>,
    /// Remote annotator base URL (repeatable).
    #[arg(long = "annotator-endpoint", global = true, env = "CAPWIRE_ANNOTATOR_ENDPOINTS", value_delimiter = ',')]
    annotator_endpoints: Vec<String>,
    #[arg(long, global = true, env = "CAPWIRE_MAX_IN_FLIGHT")]
    max_in_flight: Option<usize>,
    #[arg(long, global = true, env = "CAPWIRE_RETRIES")]
    retries: Option<u32>,
    #[arg(long, global = true, env = "CAPWIRE_CREDIT_PREFIX")]
    credit_prefix: Option<String>,
    #[arg(long, global = true, env = "CAPWIRE_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true, env = "CAPWIRE_LISTEN")]
    listen: Option<String>,
    /// `block` or `reject` when every worker slot is taken.
    #[arg(long, global = true, env = "CAPWIRE_BACKPRESSURE")]
    backpressure: Option<Backpressure>,
    #[arg(long, global = true, env = "CAPWIRE_RESULT_TTL_SECS")]
    result_ttl_secs: Option<u64>,
    /// Refuse to caption when no roster is loaded.
    #[arg(long, global = true, env = "CAPWIRE_STRICT_ROSTER")]
    strict_roster: Option<bool>,
}

fn non_empty<T: Clone>(v: &[T]) -> Option<Vec<T>> {
    (!v.is_empty()).then(|| v.to_vec())
}

impl GlobalOpts {
    fn partial(&self) -> PartialConfig {
        PartialConfig {
            level1_endpoint: self.level1_endpoint.clone(),
            level2_endpoint: self.level2_endpoint.clone(),
            annotator_fixtures: self.annotator_fixtures.clone(),
            annotator_endpoints: non_empty(&self.annotator_endpoints),
            roster_paths: non_empty(&self.roster_paths),
            max_in_flight: self.max_in_flight,
            retries: self.retries,
            credit_prefix: self.credit_prefix.clone(),
            output_dir: self.output_dir.clone(),
            listen: self.listen.clone(),
            backpressure: self.backpressure,
            result_ttl_secs: self.result_ttl_secs,
            strict_roster: self.strict_roster,
        }
    }

    fn file_layer(&self) -> Result<PartialConfig> {
        Ok(match &self.config {
            Some(p) => PartialConfig::from_toml_file(p)?,
            None => PartialConfig::default(),
        })
    }

    fn service_config(&self) -> Result<ServiceConfig> {
        Ok(ServiceConfig::from_layers(self.partial(), self.file_layer()?)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve,
    /// Caption every `<stem>.meta.json` + image pair in a directory.
    Batch { dir: PathBuf },
    /// Score pipeline results against ground truth.
    Eval {
        /// results.jsonl as written by `batch`.
        results: PathBuf,
        /// Ground truth JSONL.
        gt: PathBuf,
        /// Embedding endpoint for semantic caption similarity.
        #[arg(long, env = "CAPWIRE_EMBEDDING_ENDPOINT")]
        embedding_endpoint: Option<String>,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Build or check supervised fine-tuning datasets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Build LEVEL1 and LEVEL2 records from annotated images.
    Build {
        annotations: PathBuf,
        #[arg(long, default_value = "strict")]
        policy: String,
        #[arg(long, default_value = "sft.jsonl")]
        out: PathBuf,
    },
    /// Re-check an exported dataset line by line.
    Validate { path: PathBuf },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("CAPWIRE_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    match runtime.block_on(run(cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

async fn run(cli: Cli) -> Result<ExitCode> {
    let g = &cli.global;
    match cli.command {
        Command::Serve => {
            let cfg = g.service_config()?;
            let components = cfg.build_components()?;
            let service = Service::new(
                components,
                QueueOptions {
                    max_in_flight: cfg.max_in_flight,
                    backpressure: cfg.backpressure,
                    ttl: cfg.result_ttl(),
                },
            );
            serve(&cfg.listen, service).await?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Batch { dir } => {
            let cfg = g.service_config()?;
            let outcome = run_batch(&dir, &cfg).await?;
            let s = &outcome.summary;
            println!(
                "{} of {} images captioned in {:.2}s ({:.2} images/s); output in {}",
                s.succeeded,
                s.total,
                s.elapsed_s,
                s.images_per_second,
                outcome.output_dir.display()
            );
            for p in &s.input_problems {
                eprintln!("skipped {}: {}", p.file, p.reason);
            }
            for r in outcome.results.iter().filter(|r| !r.is_ok()) {
                if let Some(e) = &r.error {
                    eprintln!("failed {}: {e}", r.source_id);
                }
            }
            if let Some(report) = &outcome.eval {
                print!("{}", report.table());
            }
            Ok(ExitCode::from(s.status.exit_code() as u8))
        }
        Command::Eval {
            results,
            gt,
            embedding_endpoint,
            json,
        } => {
            let results: Vec<PipelineResult> = read_jsonl(&results)?;
            let truths: Vec<GroundTruth> = read_jsonl(&gt)?;
            let pairs = align(results, truths)?;
            let report: EvalReport = match embedding_endpoint {
                Some(url) => {
                    let backend = EmbeddingSimilarity::new(url, Duration::from_secs(30));
                    evaluate_corpus_async(&pairs, &backend).await?
                }
                None => evaluate_corpus_async(&pairs, &TokenF1).await?,
            };
            print!("{}", report.table());
            if let Some(path) = json {
                std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Dataset(DatasetCommand::Build {
            annotations,
            policy,
            out,
        }) => {
            let policy = match policy.as_str() {
                "strict" => Level2Policy::Strict,
                "scrub" => Level2Policy::Scrub,
                other => bail!("unknown policy {other:?} (expected strict or scrub)"),
            };
            // Only rosters and the credit prefix matter here; backends are not needed.
            let partial = g.partial().over(g.file_layer()?);
            let rosters = load_rosters(&partial.roster_paths.unwrap_or_default())?;
            let cfg = PipelineConfig {
                credit_prefix: partial
                    .credit_prefix
                    .unwrap_or_else(|| DEFAULT_CREDIT_PREFIX.to_string()),
                ..PipelineConfig::default()
            };
            let images = read_annotations(&annotations)
                .with_context(|| format!("reading {}", annotations.display()))?;
            let outcome = build_dataset(&images, &rosters, policy, &cfg);
            export_dataset(&outcome.records, &out)?;
            println!("wrote {} records to {}", outcome.records.len(), out.display());
            for (id, why) in &outcome.skipped {
                eprintln!("skipped LEVEL2 for {id}: {why}");
            }
            for (id, why) in &outcome.errors {
                eprintln!("error for {id}: {why}");
            }
            Ok(if outcome.errors.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Dataset(DatasetCommand::Validate { path }) => {
            let prefix = g
                .partial()
                .over(g.file_layer()?)
                .credit_prefix
                .unwrap_or_else(|| DEFAULT_CREDIT_PREFIX.to_string());
            let report = validate_dataset(&path, &prefix)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.is_clean() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
    }
}

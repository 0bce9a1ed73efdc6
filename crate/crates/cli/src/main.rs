mod serve;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use rgf_core::corpus::{build_index, ingest_corpus_file};
use rgf_core::eval::{join_predictions, pairwise_consistency, Metric, Prediction};
use rgf_core::filters::{RoundTripMode, SelectionMode};
use rgf_core::gateway::conformance::run_conformance;
use rgf_core::gateway::remote::{RemoteClient, RemoteOptions};
use rgf_core::jsonl;
use rgf_core::pipeline::stages::{run_stage, stats_report, StageArgs, StatsReport};
use rgf_core::pipeline::{run_rgf, ContextStrategy, Gateway, PipelineConfig, RunManifest};
use rgf_core::qed::{Gazetteer, PairedRecord, PerturbationCategory};
use rgf_core::types::{Example, GeneratedTriple};
use serde_json::json;

const GATEWAY_ENV: &str = "RGF_GATEWAY_URL";

#[derive(Parser)]
#[command(name = "rgf", version, about = "Counterfactual question generation: retrieve, generate, filter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Pipeline settings. Flags override the config file.
#[derive(Args, Debug, Default)]
struct PipelineFlags {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<ContextStrategy>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    selection: Option<SelectionMode>,
    #[arg(long)]
    round_trip_mode: Option<RoundTripMode>,
    #[arg(long)]
    retrieval_k: Option<usize>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
}

impl PipelineFlags {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.strategy {
            config.context_strategy = s;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(s) = self.selection {
            config.selection = Some(s);
        }
        if let Some(m) = self.round_trip_mode {
            config.round_trip_mode = m;
        }
        if let Some(k) = self.retrieval_k {
            config.retrieval_k = k;
        }
        if let Ok(url) = std::env::var(GATEWAY_ENV) {
            if !url.is_empty() {
                config.gateway.use_single_endpoint(&url);
            }
        }
        config.validate()?;
        if let Some(jobs) = self.jobs {
            if jobs == 0 {
                return Err(rgf_core::Error::Usage("--jobs must be at least 1".into()).into());
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global()
                .map_err(|e| rgf_core::Error::Usage(e.to_string()))?;
        }
        Ok(config)
    }
}

#[derive(Args, Debug)]
struct MetricFlags {
    /// How predictions are judged correct.
    #[arg(long, default_value = "em")]
    metric: Metric,
    /// F1 needed to count as correct with `--metric f1`.
    #[arg(long, default_value_t = Metric::DEFAULT_F1_THRESHOLD)]
    f1_threshold: f64,
}

impl MetricFlags {
    fn metric(&self) -> Metric {
        match self.metric {
            Metric::F1 { .. } => Metric::F1 {
                threshold: self.f1_threshold,
            },
            m => m,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write one counterfactual per example.
    Run {
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineFlags,
    },
    /// Run a single stage over JSONL files.
    Stage {
        /// retrieve, generate, filter, select, pair, consistency, stats or export.
        name: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        examples: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        gazetteer: Option<PathBuf>,
        #[arg(long)]
        category: Option<PerturbationCategory>,
        #[arg(long)]
        breakdown: bool,
        #[arg(long)]
        report: Option<StatsReport>,
        #[command(flatten)]
        metric: MetricFlags,
        #[command(flatten)]
        pipeline: PipelineFlags,
    },
    /// Merge originals and selected counterfactuals into a shuffled training file.
    Export {
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        selected: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineFlags,
    },
    /// Build a paired evaluation set of one perturbation category.
    Pair {
        #[arg(long)]
        examples: PathBuf,
        #[arg(long)]
        triples: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        gazetteer: Option<PathBuf>,
        #[arg(long, default_value = "reference_change")]
        category: PerturbationCategory,
        #[command(flatten)]
        pipeline: PipelineFlags,
    },
    /// Score predictions on a paired set.
    Consistency {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        preds: PathBuf,
        /// Add one row per perturbation category.
        #[arg(long)]
        breakdown: bool,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        metric: MetricFlags,
    },
    /// Descriptive statistics over selected triples, printed as JSON.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        report: StatsReport,
        /// Originals, for triples without a recorded edit distance.
        #[arg(long)]
        examples: Option<PathBuf>,
    },
    /// Serve the model protocol from the built-in mocks.
    ServeMock {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "cloze-mock")]
        model_id: String,
        #[arg(long)]
        gazetteer: Option<PathBuf>,
    },
    /// Check a model service against the protocol conformance suite.
    Conformance {
        #[arg(long)]
        url: String,
        #[arg(long, default_value_t = 30.0)]
        timeout_secs: f64,
    },
}

/// Writes to stdout; a closed pipe (`rgf stats ... | head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn write_manifest(out: &Path, manifest: &RunManifest, started: Instant) -> Result<()> {
    jsonl::write_json(sidecar(out, ".manifest.json"), manifest)?;
    let timing = json!({ "wall_time_secs": started.elapsed().as_secs_f64() });
    jsonl::write_json(sidecar(out, ".timing.json"), &timing)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let started = Instant::now();
    match cli.command {
        Command::Run {
            examples,
            corpus,
            out,
            pipeline,
        } => {
            let config = pipeline.resolve()?;
            let example_records: Vec<Example> = jsonl::read(&examples)?;
            let corpus_records = ingest_corpus_file(&corpus)?;
            let index = build_index(&corpus_records, config.bm25);
            let gateway = Gateway::from_config(&config)?;
            let (selected, mut manifest) = run_rgf(&example_records, &index, &gateway, &config)?;
            manifest.add_input("examples", &examples)?;
            manifest.add_input("corpus", &corpus)?;
            jsonl::write(&out, &selected)?;
            write_manifest(&out, &manifest, started)?;
            log::info!("{} of {} examples produced a counterfactual", selected.len(), example_records.len());
        }
        Command::Stage {
            name,
            input,
            out,
            examples,
            corpus,
            predictions,
            gazetteer,
            category,
            breakdown,
            report,
            metric,
            pipeline,
        } => {
            let config = pipeline.resolve()?;
            let args = StageArgs {
                examples,
                corpus,
                predictions,
                gazetteer,
                category,
                metric: metric.metric(),
                breakdown,
                report,
            };
            let manifest = run_stage(&name, &input, &out, &config, &args)?;
            write_manifest(&out, &manifest, started)?;
        }
        Command::Export {
            examples,
            selected,
            out,
            pipeline,
        } => {
            let config = pipeline.resolve()?;
            let args = StageArgs {
                examples: Some(examples),
                ..Default::default()
            };
            let manifest = run_stage("export", &selected, &out, &config, &args)?;
            write_manifest(&out, &manifest, started)?;
        }
        Command::Pair {
            examples,
            triples,
            out,
            gazetteer,
            category,
            pipeline,
        } => {
            let config = pipeline.resolve()?;
            let args = StageArgs {
                examples: Some(examples),
                gazetteer,
                category: Some(category),
                ..Default::default()
            };
            let manifest = run_stage("pair", &triples, &out, &config, &args)?;
            write_manifest(&out, &manifest, started)?;
        }
        Command::Consistency {
            pairs,
            preds,
            breakdown,
            json,
            metric,
        } => {
            let pair_records: Vec<PairedRecord> = jsonl::read(&pairs)?;
            let predictions: Vec<Prediction> = jsonl::read(&preds)?;
            let scored = join_predictions(&pair_records, &predictions, metric.metric(), breakdown)?;
            let report = pairwise_consistency(&scored)?;
            emit(&report.to_text())?;
            if let Some(path) = json {
                jsonl::write_json(path, &report)?;
            }
        }
        Command::Stats {
            input,
            report,
            examples,
        } => {
            let triples: Vec<GeneratedTriple> = jsonl::read(&input)?;
            let originals: Option<Vec<Example>> = examples.map(jsonl::read).transpose()?;
            let value = stats_report(&triples, originals.as_deref(), report)?;
            emit(&format!("{}\n", serde_json::to_string_pretty(&value)?))?;
        }
        Command::ServeMock {
            host,
            port,
            model_id,
            gazetteer,
        } => {
            let gazetteer = match gazetteer {
                Some(p) => Gazetteer::load(p)?,
                None => Gazetteer::default(),
            };
            serve::serve(&host, port, serve::mock_service(&model_id, gazetteer))?;
        }
        Command::Conformance { url, timeout_secs } => {
            let options = RemoteOptions {
                timeout_secs,
                ..Default::default()
            };
            let client = RemoteClient::new(url, options)?;
            let report = run_conformance(&client);
            let mut lines = String::new();
            for o in &report.outcomes {
                match &o.failure {
                    None => lines.push_str(&format!("PASS {}\n", o.name)),
                    Some(msg) => lines.push_str(&format!("FAIL {}: {msg}\n", o.name)),
                }
            }
            emit(&lines)?;
            if !report.passed() {
                bail!("{} conformance checks failed", report.failures().len());
            }
        }
    }
    Ok(())
}

/// 1 for configuration and usage errors, 2 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<rgf_core::Error>() {
        Some(e) if e.is_config() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

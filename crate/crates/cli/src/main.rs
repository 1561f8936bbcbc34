use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use archsel_core::config::{BackendKind, RunConfig};
use archsel_core::error::{EXIT_INPUT, EXIT_INTERNAL};
use archsel_core::grouping::Linkage;
use archsel_core::io::{parse_matrix, read_text, InputError};
use archsel_core::optimizer::TieBreak;
use archsel_core::pipeline::{
    load_result, run_pipeline, run_whatif, write_outputs, PipelineResult, WhatIf,
};
use archsel_core::report;
use archsel_core::sensitivity::{estimate_runtime, RemovalOrder};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Recommends architecture choices from natural-language requirements.
#[derive(Parser)]
#[command(name = "archsel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run extraction, condition grouping and optimization end to end.
    Run(RunArgs),
    /// Re-solve a run under modified inputs.
    Whatif(WhatifArgs),
    /// Estimate condition-grouping cost for a number of requirements.
    Estimate(EstimateArgs),
    /// Check a decision matrix file and report every problem found.
    ValidateMatrix { path: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Live,
    Mock,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinkageArg {
    Average,
    Complete,
    Single,
}

#[derive(Clone, Copy, ValueEnum)]
enum TieBreakArg {
    FirstListed,
    ReportAll,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Requirements as a JSON array of {id, text} or CSV with id,text.
    #[arg(long)]
    requirements: Option<PathBuf>,
    /// Decision matrix CSV (group,choice,<QA codes>) or TOML/JSON.
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Mock backend fixture (JSON).
    #[arg(long)]
    mock_fixture: Option<PathBuf>,
    #[arg(long)]
    endpoint_url: Option<String>,
    /// Name of the environment variable holding the API credential.
    #[arg(long)]
    credential_env: Option<String>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Directory for result.json, report.txt and stats.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fail on quality-attribute labels outside the catalog.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    chunk_size: Option<usize>,
    #[arg(long, value_enum)]
    linkage: Option<LinkageArg>,
    /// Clusters merge while their distance is at most this value.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, value_enum)]
    tie_break: Option<TieBreakArg>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    concurrency: Option<usize>,
    /// Print JSON instead of the text report.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Args)]
struct WhatifArgs {
    #[command(subcommand)]
    analysis: WhatifCommand,
    /// Analyse a saved result.json instead of running the pipeline.
    #[arg(long, global = true)]
    result: Option<PathBuf>,
    /// Restrict to one concurrent condition group.
    #[arg(long, global = true)]
    ccg: Option<usize>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    InputOrder,
    BySensitiveQa,
}

#[derive(Subcommand)]
enum WhatifCommand {
    /// Drop ASRs and re-solve.
    RemoveAsr {
        #[arg(required = true)]
        ids: Vec<String>,
    },
    /// Multiply one attribute weight and re-solve.
    ScaleQa { qa: String, factor: f64 },
    /// Find requirement sets whose removal changes a decision.
    AirScan {
        #[arg(long, value_enum, default_value = "input-order")]
        order: OrderArg,
    },
}

#[derive(Args)]
struct EstimateArgs {
    /// Requirement counts; defaults to 100 1000 2000 5000.
    counts: Vec<u64>,
    #[arg(long, default_value_t = 0.15)]
    asr_ratio: f64,
    #[arg(long, default_value_t = 0.15)]
    conditional_ratio: f64,
    /// Seconds per LLM call.
    #[arg(long, default_value_t = 0.1)]
    latency: f64,
    #[arg(long)]
    json: bool,
}

fn build_config(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path).map_err(archsel_core::Error::from)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &args.requirements {
        config.input.requirements = Some(p.clone());
    }
    if let Some(p) = &args.matrix {
        config.input.matrix = Some(p.clone());
    }
    if let Some(b) = args.backend {
        config.backend.kind = match b {
            BackendArg::Live => BackendKind::Live,
            BackendArg::Mock => BackendKind::Mock,
        };
    }
    if let Some(p) = &args.mock_fixture {
        config.backend.mock_fixture = Some(p.clone());
    }
    if let Some(u) = &args.endpoint_url {
        config.backend.endpoint_url = Some(u.clone());
    }
    if let Some(v) = &args.credential_env {
        config.backend.credential_env = Some(v.clone());
    }
    if let Some(d) = &args.cache_dir {
        config.cache.dir = Some(d.clone());
    }
    if args.strict {
        config.extraction.strict = true;
    }
    if let Some(n) = args.chunk_size {
        config.extraction.chunk_size = n;
    }
    if let Some(l) = args.linkage {
        config.clustering.linkage = match l {
            LinkageArg::Average => Linkage::Average,
            LinkageArg::Complete => Linkage::Complete,
            LinkageArg::Single => Linkage::Single,
        };
    }
    if let Some(t) = args.threshold {
        config.clustering.merge_threshold = t;
    }
    if let Some(t) = args.tie_break {
        config.optimizer.tie_break = match t {
            TieBreakArg::FirstListed => TieBreak::FirstListed,
            TieBreakArg::ReportAll => TieBreak::ReportAll,
        };
    }
    if let Some(t) = args.temperature {
        config.backend.temperature = t;
    }
    if let Some(c) = args.concurrency {
        config.backend.concurrency = c;
    }
    Ok(config)
}

fn log_stats(result: &PipelineResult) {
    let s = &result.gateway_stats;
    log::info!(
        "LLM calls: {} completion, {} embedding, {} cache hits, {:.3} s",
        s.completion_calls,
        s.embedding_calls,
        s.cache_hits,
        s.total_latency.as_secs_f64()
    );
}

fn run(args: &RunArgs) -> anyhow::Result<()> {
    let config = build_config(args)?;
    match run_pipeline(&config) {
        Ok(result) => {
            log_stats(&result);
            if let Some(out) = &args.out {
                write_outputs(&result, out)?;
                log::info!("wrote {}", out.display());
            }
            if args.json {
                print!("{}", result.to_json());
            } else {
                print!("{}", report::render_report(&result));
            }
            Ok(())
        }
        Err(archsel_core::Error::Pipeline(failure)) => {
            log_stats(&failure.partial);
            if let Some(out) = &args.out {
                write_outputs(&failure.partial, out)?;
                log::warn!("partial result written to {}", out.display());
            }
            Err(archsel_core::Error::Pipeline(failure).into())
        }
        Err(e) => Err(e.into()),
    }
}

fn whatif(args: &WhatifArgs) -> anyhow::Result<()> {
    let result = match &args.result {
        Some(path) => load_result(path)?,
        None => {
            let config = build_config(&args.run)?;
            let result = run_pipeline(&config)?;
            log_stats(&result);
            result
        }
    };
    let analysis = match &args.analysis {
        WhatifCommand::RemoveAsr { ids } => WhatIf::RemoveAsr { ids: ids.clone() },
        WhatifCommand::ScaleQa { qa, factor } => WhatIf::ScaleQa {
            qa: qa.clone(),
            factor: *factor,
        },
        WhatifCommand::AirScan { order } => WhatIf::AirScan {
            order: match order {
                OrderArg::InputOrder => RemovalOrder::InputOrder,
                OrderArg::BySensitiveQa => RemovalOrder::BySensitiveQa,
            },
        },
    };
    let report = run_whatif(&result, args.ccg, &analysis).map_err(archsel_core::Error::from)?;
    if args.run.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report::render_whatif(&report));
    }
    Ok(())
}

fn estimate(args: &EstimateArgs) -> anyhow::Result<()> {
    let counts = if args.counts.is_empty() {
        vec![100, 1000, 2000, 5000]
    } else {
        args.counts.clone()
    };
    let latency = Duration::try_from_secs_f64(args.latency).map_err(|_| {
        archsel_core::Error::Sensitivity(
            archsel_core::sensitivity::SensitivityError::InvalidEstimate(format!(
                "latency {} is not a valid duration",
                args.latency
            )),
        )
    })?;
    let estimates = counts
        .iter()
        .map(|&n| estimate_runtime(n, args.asr_ratio, args.conditional_ratio, latency))
        .collect::<Result<Vec<_>, _>>()
        .map_err(archsel_core::Error::from)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&estimates)?);
    } else {
        print!("{}", report::render_estimates(&estimates));
    }
    Ok(())
}

fn validate(path: &Path) -> anyhow::Result<()> {
    let text = read_text(path).map_err(archsel_core::Error::from)?;
    let matrix = match parse_matrix(path, &text) {
        Ok(matrix) => matrix,
        Err(e) => {
            if let InputError::InvalidMatrix { violations, .. } = &e {
                for v in violations {
                    println!("{}: {v}", path.display());
                }
            }
            return Err(archsel_core::Error::from(e).into());
        }
    };
    let columns: Vec<String> = matrix.qa_columns().iter().map(|q| q.to_string()).collect();
    println!(
        "{}: valid, {} groups, {} choices, columns {}",
        path.display(),
        matrix.groups.len(),
        matrix.choice_count(),
        columns.join(", ")
    );
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let code = err
        .chain()
        .find_map(|e| e.downcast_ref::<archsel_core::Error>())
        .map(archsel_core::Error::exit_code)
        .unwrap_or(EXIT_INTERNAL);
    code as u8
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            return if usage_error {
                ExitCode::from(EXIT_INPUT as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match &cli.command {
        Command::Run(args) => run(args),
        Command::Whatif(args) => whatif(args),
        Command::Estimate(args) => estimate(args),
        Command::ValidateMatrix { path } => validate(path),
    }
    .with_context(|| "archsel failed");
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

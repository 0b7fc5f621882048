//! `vgrounder`: ground, evaluate, render, project and synthesize scenes.
//!
//! `ground` and `evaluate` print JSON only on stdout; diagnostics go to
//! stderr. Exit codes: 2 scene or query file could not be loaded, 3 scene
//! has no detections, 4 backend misconfigured, 64 bad arguments, 1 other.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use settings::{BackendArgs, PipelineArgs};

#[derive(Debug, Parser)]
#[command(name = "vgrounder", version, about = "Zero-shot 3D visual grounding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ground one query and print the chosen object as JSON.
    Ground {
        #[arg(long)]
        scene: PathBuf,
        /// Query text.
        #[arg(long)]
        query: String,
        /// Queries file used by the oracle backend [default: <scene>/queries.jsonl]
        #[arg(long)]
        queries: Option<PathBuf>,
        /// Directory for the trace and the images shown to the model.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Ground every query of a queries file and write an accuracy report.
    Evaluate {
        #[arg(long)]
        scene: PathBuf,
        /// [default: <scene>/queries.jsonl]
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Queries grounded concurrently (the scripted backend always runs one).
        #[arg(long)]
        parallel: Option<usize>,
        /// Write traces and reports but not images.
        #[arg(long)]
        skip_images: bool,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Render the bird's-eye and ring views, plain and annotated with all detections.
    Render {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Write per-object key-point visibility and keyframe JSON.
    Project {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Generate a synthetic scene directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Seed for colors and query wording; overrides the seed in `--spec` [default: 0]
        #[arg(long)]
        seed: Option<u64>,
        /// JSON scene description; the built-in demo room when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub enum CliError {
    SceneLoad(anyhow::Error),
    EmptyDetections,
    Backend(String),
    Usage(anyhow::Error),
    Other(anyhow::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::SceneLoad(_) => 2,
            CliError::EmptyDetections => 3,
            CliError::Backend(_) => 4,
            CliError::Usage(_) => 64,
            CliError::Other(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::SceneLoad(e) => write!(f, "cannot load scene: {e}"),
            CliError::EmptyDetections => write!(f, "scene has no detected objects"),
            CliError::Backend(m) => write!(f, "backend configuration: {m}"),
            CliError::Usage(e) | CliError::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Other(e)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(64)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Ground {
            scene,
            query,
            queries,
            out,
            backend,
            pipeline,
        } => commands::ground(&scene, &query, queries.as_deref(), out.as_deref(), &backend, &pipeline),
        Command::Evaluate {
            scene,
            queries,
            out,
            parallel,
            skip_images,
            backend,
            pipeline,
        } => commands::evaluate(
            &scene,
            queries.as_deref(),
            &out,
            parallel,
            skip_images,
            &backend,
            &pipeline,
        ),
        Command::Render { scene, out, pipeline } => commands::render(&scene, &out, &pipeline),
        Command::Project { scene, out, pipeline } => commands::project(&scene, &out, &pipeline),
        Command::Synth { out, seed, spec } => commands::synth(&out, seed, spec.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

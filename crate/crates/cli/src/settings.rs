//! Run settings: TOML file merged with command-line flags, and backend
//! construction.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use vgrounder::agent::PipelineConfig;
use vgrounder::eval::QueryRecord;
use vgrounder::render::RenderCamera;
use vgrounder::scene::Scene;
use vgrounder::vlm::{OracleBackend, RemoteBackend, RemoteConfig, ScriptedBackend, VlmBackend};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Scripted,
    Oracle,
}

/// Contents of a `--config` file. Every key is optional.
///
/// ```toml
/// backend = "remote"
/// endpoint = "https://api.openai.com/v1"
/// model = "gpt-4o"
/// parallel = 4
///
/// [pipeline]
/// top_k = 4
/// tau = 0.8
/// ```
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub backend: Option<BackendKind>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub script: Option<PathBuf>,
    pub parallel: Option<usize>,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// Model backend [default: remote]
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Chat-completions base URL for the remote backend.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name for the remote backend.
    #[arg(long)]
    pub model: Option<String>,
    /// JSON array of replies for the scripted backend.
    #[arg(long)]
    pub script: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// TOML settings file; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_views: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Horizontal field of view of the holistic renderings, degrees.
    #[arg(long)]
    pub fov: Option<f64>,
    /// Side of the square holistic renderings, pixels.
    #[arg(long)]
    pub image_size: Option<u32>,
}

/// Settings after merging file and flags.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub script: Option<PathBuf>,
    pub parallel: usize,
    pub pipeline: PipelineConfig,
}

pub fn resolve(
    pipeline: &PipelineArgs,
    backend: Option<&BackendArgs>,
    parallel: Option<usize>,
) -> Result<Resolved, CliError> {
    let file = match &pipeline.config {
        Some(path) => FileConfig::load(path).map_err(CliError::Usage)?,
        None => FileConfig::default(),
    };
    let mut p = file.pipeline;
    if let Some(v) = pipeline.n_views {
        p.n_views = v;
    }
    if let Some(v) = pipeline.top_k {
        p.top_k = v;
    }
    if let Some(v) = pipeline.tau {
        p.tau = v;
    }
    if let Some(v) = pipeline.fov {
        p.fov_deg = v;
    }
    if let Some(v) = pipeline.image_size {
        p.image_size = v;
    }
    p.validate().map_err(|e| CliError::Usage(e.into()))?;
    let parallel = parallel.or(file.parallel).unwrap_or(1);
    if parallel == 0 {
        return Err(CliError::Usage(anyhow::anyhow!("--parallel must be at least 1")));
    }
    let b = backend.cloned().unwrap_or(BackendArgs {
        backend: None,
        endpoint: None,
        model: None,
        script: None,
    });
    Ok(Resolved {
        backend: b.backend.or(file.backend).unwrap_or(BackendKind::Remote),
        endpoint: b.endpoint.or(file.endpoint),
        model: b.model.or(file.model),
        script: b.script.or(file.script),
        parallel,
        pipeline: p,
    })
}

/// Builds the selected backend. The oracle answers from `queries` and the
/// holistic cameras the pipeline will render.
pub fn build_backend(
    settings: &Resolved,
    scene: &Scene,
    queries: &[QueryRecord],
    view_cameras: Vec<RenderCamera>,
) -> Result<Box<dyn VlmBackend>, CliError> {
    let config_err = |m: String| CliError::Backend(m);
    match settings.backend {
        BackendKind::Remote => {
            let endpoint = settings
                .endpoint
                .as_deref()
                .ok_or_else(|| config_err("the remote backend needs --endpoint".into()))?;
            let model = settings
                .model
                .as_deref()
                .ok_or_else(|| config_err("the remote backend needs --model".into()))?;
            let config = RemoteConfig::from_env(endpoint, model).map_err(|e| config_err(e.to_string()))?;
            Ok(Box::new(
                RemoteBackend::new(config).map_err(|e| config_err(e.to_string()))?,
            ))
        }
        BackendKind::Scripted => {
            let path = settings
                .script
                .as_deref()
                .ok_or_else(|| config_err("the scripted backend needs --script".into()))?;
            Ok(Box::new(
                ScriptedBackend::from_file(path).map_err(|e| config_err(e.to_string()))?,
            ))
        }
        BackendKind::Oracle => Ok(Box::new(OracleBackend::new(
            &scene.detections,
            queries.iter().map(|q| (q.text.trim().to_string(), q.gt_id)),
            view_cameras,
        ))),
    }
}

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uplift_core::backend::{
    BackendError, ChatBackend, HttpBackend, HttpConfig, ScriptedBackend, DEFAULT_MAX_ATTEMPTS,
    DEFAULT_MODEL,
};
use uplift_core::eval::bench::DEFAULT_REPETITIONS;
use uplift_core::pipeline::{
    Mode, PipelineConfig, DEFAULT_FAILED_ERROR_THRESHOLD, DEFAULT_MAX_LOOP_ITERATIONS,
};
use uplift_core::transcript::RequestSettings;
use uplift_core::PromptSet;

use crate::error::CliError;

pub const DEFAULT_CONFIG: &str = "uplift.json";
pub const DEFAULT_SCRIPT_IN_DIR: &str = "default.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Script,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendKind,
    pub endpoint: String,
    pub model: String,
    pub script_path: Option<PathBuf>,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
    pub max_attempts: u32,
}

impl Default for BackendSection {
    fn default() -> Self {
        Self {
            kind: BackendKind::Http,
            endpoint: HttpConfig::default().endpoint,
            model: DEFAULT_MODEL.to_string(),
            script_path: None,
            temperature: None,
            max_output_tokens: None,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub mode: String,
    pub max_loop_iterations: u32,
    pub failed_error_threshold: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            mode: Mode::SystemManager.to_string(),
            max_loop_iterations: DEFAULT_MAX_LOOP_ITERATIONS,
            failed_error_threshold: DEFAULT_FAILED_ERROR_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptsSection {
    /// Directory holding the six template files; built-ins when unset.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub repetitions: usize,
    pub parallelism: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            repetitions: DEFAULT_REPETITIONS,
            parallelism: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub backend: BackendSection,
    pub pipeline: PipelineSection,
    pub prompts: PromptsSection,
    pub bench: BenchSection,
}

impl CliConfig {
    /// Reads `path` if given (it must exist), else `uplift.json` when present,
    /// else defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let (path, required) = match path {
            Some(p) => (p.to_path_buf(), true),
            None => (PathBuf::from(DEFAULT_CONFIG), false),
        };
        if !required && !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match (self.backend.kind, &self.backend.script_path) {
            (BackendKind::Script, None) => {
                return Err(CliError::Config(
                    "backend.script_path is required when backend.kind is script".into(),
                ))
            }
            (BackendKind::Http, Some(_)) => {
                return Err(CliError::Config(
                    "backend.script_path is only valid when backend.kind is script".into(),
                ))
            }
            _ => {}
        }
        self.mode()?;
        if self.bench.repetitions < 1 {
            return Err(CliError::Config(
                "bench.repetitions must be at least 1".into(),
            ));
        }
        if self.pipeline.failed_error_threshold < 1 {
            return Err(CliError::Config(
                "pipeline.failed_error_threshold must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn mode(&self) -> Result<Mode, CliError> {
        self.pipeline.mode.parse().map_err(CliError::Config)
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig, CliError> {
        Ok(PipelineConfig {
            mode: self.mode()?,
            max_loop_iterations: self.pipeline.max_loop_iterations,
            failed_error_threshold: self.pipeline.failed_error_threshold,
            request: RequestSettings {
                model: self.backend.model.clone(),
                temperature: self.backend.temperature,
                max_output_tokens: self.backend.max_output_tokens,
            },
            ..PipelineConfig::default()
        })
    }

    pub fn prompt_set(&self) -> Result<PromptSet, CliError> {
        match &self.prompts.dir {
            Some(dir) => PromptSet::load_dir(dir).map_err(|e| CliError::Config(e.to_string())),
            None => Ok(PromptSet::builtin()),
        }
    }

    fn http_config(&self) -> HttpConfig {
        HttpConfig {
            endpoint: self.backend.endpoint.clone(),
            max_attempts: self.backend.max_attempts,
            ..HttpConfig::default()
        }
    }

    /// Script file used for `run_id`. A script directory may hold one file
    /// per run (`<run_id>.json`) with `default.json` as the fallback.
    pub fn script_for(&self, run_id: &str) -> Option<PathBuf> {
        let path = self.backend.script_path.as_ref()?;
        if path.is_dir() {
            let own = path.join(format!("{run_id}.json"));
            Some(if own.is_file() {
                own
            } else {
                path.join(DEFAULT_SCRIPT_IN_DIR)
            })
        } else {
            Some(path.clone())
        }
    }

    pub fn backend_for(&self, run_id: &str) -> Result<Box<dyn ChatBackend>, BackendError> {
        match self.backend.kind {
            BackendKind::Http => Ok(Box::new(HttpBackend::from_env(self.http_config())?)),
            BackendKind::Script => {
                let path = self
                    .script_for(run_id)
                    .expect("validated: script backend has a script path");
                Ok(Box::new(ScriptedBackend::load(path)?))
            }
        }
    }

    /// Fails early on problems every run would hit: a missing credential
    /// or a missing script.
    pub fn preflight(&self) -> Result<(), CliError> {
        match self.backend.kind {
            BackendKind::Http => HttpBackend::from_env(self.http_config())
                .map(|_| ())
                .map_err(|e| CliError::Config(e.to_string())),
            BackendKind::Script => {
                let path = self.backend.script_path.as_ref().expect("validated");
                if path.exists() {
                    Ok(())
                } else {
                    Err(CliError::Config(format!(
                        "script {} does not exist",
                        path.display()
                    )))
                }
            }
        }
    }
}

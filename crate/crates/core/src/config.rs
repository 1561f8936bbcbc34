//! Run configuration, read from a TOML file with flat sections:
//!
//! ```toml
//! [input]
//! requirements = "requirements.json"
//! matrix = "matrix.csv"
//!
//! [backend]
//! kind = "live"                       # or "mock"
//! endpoint_url = "https://api.openai.com/v1"
//! credential_env = "OPENAI_API_KEY"   # name of the variable, never the key
//!
//! [cache]
//! dir = ".archsel-cache"
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::ExtractionConfig;
use crate::gateway::{
    Gateway, GatewayError, GatewaySettings, MockBackend, MockFixture, OpenAiBackend, ResponseCache,
};
use crate::grouping::ClusteringConfig;
use crate::io::{read_text, InputError};
use crate::optimizer::TieBreak;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Input(#[from] InputError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Live,
    #[default]
    Mock,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(BackendKind::Live),
            "mock" => Ok(BackendKind::Mock),
            other => Err(format!("unknown backend {other:?}; expected live or mock")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    pub requirements: Option<PathBuf>,
    pub matrix: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendKind,
    pub endpoint_url: Option<String>,
    /// Name of the environment variable holding the credential.
    pub credential_env: Option<String>,
    pub mock_fixture: Option<PathBuf>,
    pub completion_model: String,
    pub embedding_model: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub concurrency: usize,
}

impl Default for BackendSection {
    fn default() -> Self {
        let gw = GatewaySettings::default();
        BackendSection {
            kind: BackendKind::Mock,
            endpoint_url: None,
            credential_env: None,
            mock_fixture: None,
            completion_model: gw.completion_model,
            embedding_model: gw.embedding_model,
            temperature: gw.temperature,
            timeout_secs: 120,
            max_retries: gw.max_retries,
            concurrency: gw.concurrency,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSection {
    pub tie_break: TieBreak,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: InputSection,
    pub backend: BackendSection,
    pub cache: CacheSection,
    pub extraction: ExtractionConfig,
    pub clustering: ClusteringConfig,
    pub optimizer: OptimizerSection,
}

fn resolve(base: &Path, path: &mut Option<PathBuf>) {
    if let Some(p) = path {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read_text(path)?;
        let mut config = Self::from_toml(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut config.input.requirements);
        resolve(base, &mut config.input.matrix);
        resolve(base, &mut config.backend.mock_fixture);
        resolve(base, &mut config.cache.dir);
        Ok(config)
    }

    pub fn requirements_path(&self) -> Result<&Path, ConfigError> {
        self.input
            .requirements
            .as_deref()
            .ok_or_else(|| ConfigError::Invalid("no requirements file given".into()))
    }

    pub fn matrix_path(&self) -> Result<&Path, ConfigError> {
        self.input
            .matrix
            .as_deref()
            .ok_or_else(|| ConfigError::Invalid("no matrix file given".into()))
    }

    /// Checks the settings a backend needs. Input paths are checked when
    /// they are read.
    pub fn validate_backend(&self) -> Result<(), ConfigError> {
        let b = &self.backend;
        match b.kind {
            BackendKind::Live => {
                if b.endpoint_url
                    .as_deref()
                    .is_none_or(|u| u.trim().is_empty())
                {
                    return Err(ConfigError::Invalid(
                        "live backend needs endpoint_url".into(),
                    ));
                }
                if b.credential_env
                    .as_deref()
                    .is_none_or(|v| v.trim().is_empty())
                {
                    return Err(ConfigError::Invalid(
                        "live backend needs credential_env (the variable name)".into(),
                    ));
                }
            }
            BackendKind::Mock => {
                if b.mock_fixture.is_none() {
                    return Err(ConfigError::Invalid(
                        "mock backend needs mock_fixture".into(),
                    ));
                }
            }
        }
        if !(0.0..=2.0).contains(&b.temperature) {
            return Err(ConfigError::Invalid(format!(
                "temperature {} outside [0, 2]",
                b.temperature
            )));
        }
        if b.concurrency == 0 {
            return Err(ConfigError::Invalid(
                "concurrency must be at least 1".into(),
            ));
        }
        if self.extraction.chunk_size == 0 {
            return Err(ConfigError::Invalid("chunk_size must be at least 1".into()));
        }
        self.clustering
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn gateway_settings(&self) -> GatewaySettings {
        GatewaySettings {
            completion_model: self.backend.completion_model.clone(),
            embedding_model: self.backend.embedding_model.clone(),
            temperature: self.backend.temperature,
            max_retries: self.backend.max_retries,
            concurrency: self.backend.concurrency,
            ..GatewaySettings::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

pub fn load_fixture(path: &Path) -> Result<MockFixture, ConfigError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Builds the gateway described by `config`. A live backend reads its
/// credential here, so a missing variable fails before any request.
pub fn build_gateway(config: &RunConfig) -> Result<Gateway, BuildError> {
    config.validate_backend()?;
    let b = &config.backend;
    let backend: Box<dyn crate::gateway::LlmBackend> = match b.kind {
        BackendKind::Mock => {
            let path = b.mock_fixture.as_deref().expect("validated");
            Box::new(MockBackend::new(load_fixture(path)?))
        }
        BackendKind::Live => Box::new(OpenAiBackend::from_env(
            b.endpoint_url.as_deref().expect("validated"),
            b.credential_env.as_deref().expect("validated"),
            Duration::from_secs(b.timeout_secs),
        )?),
    };
    let gateway = Gateway::new(backend, config.gateway_settings());
    Ok(match &config.cache.dir {
        Some(dir) => gateway.with_cache(ResponseCache::new(dir)),
        None => gateway,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_defaults() {
        let text = r#"
[input]
requirements = "reqs.json"
[backend]
kind = "live"
endpoint_url = "http://localhost:1/v1"
credential_env = "MY_KEY"
[clustering]
linkage = "complete"
merge_threshold = 0.2
[optimizer]
tie_break = "report-all"
"#;
        let c = RunConfig::from_toml(text, Path::new("c.toml")).unwrap();
        assert_eq!(c.backend.kind, BackendKind::Live);
        assert_eq!(c.clustering.merge_threshold, 0.2);
        assert_eq!(c.extraction.chunk_size, 20);
        assert_eq!(c.optimizer.tie_break, TieBreak::ReportAll);
        c.validate_backend().unwrap();
    }

    #[test]
    fn rejects_stored_credentials_and_unknown_keys() {
        let text = "[backend]\napi_key = \"sk-secret\"\n";
        assert!(matches!(
            RunConfig::from_toml(text, Path::new("c.toml")),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn backend_requirements() {
        let mut c = RunConfig::default();
        assert!(c.validate_backend().is_err());
        c.backend.kind = BackendKind::Live;
        c.backend.endpoint_url = Some("http://x".into());
        assert!(c.validate_backend().is_err());
        c.backend.credential_env = Some("ARCHSEL_CONFIG_TEST_UNSET".into());
        c.validate_backend().unwrap();
        assert!(matches!(
            build_gateway(&c),
            Err(BuildError::Gateway(GatewayError::MissingCredential(_)))
        ));
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "[input]\nmatrix = \"m.csv\"\n[cache]\ndir = \"/abs/cache\"\n",
        )
        .unwrap();
        let c = RunConfig::load(&path).unwrap();
        assert_eq!(c.input.matrix.unwrap(), dir.path().join("m.csv"));
        assert_eq!(c.cache.dir.unwrap(), PathBuf::from("/abs/cache"));
    }
}

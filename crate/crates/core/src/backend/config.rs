//! Backend configuration file: JSON mapping each role to a mock or remote
//! endpoint. The `PATHFINDER_BACKENDS` environment variable may point at a
//! config file when no explicit path is given.

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::mock::{
    MockDescriber, MockDiagnoser, MockEmbedder, MockNavigator, MockRephraser, MockTriage,
};
use super::remote::{
    HttpEndpoint, RemoteDescriber, RemoteDiagnoser, RemoteEmbedder, RemoteNavigator,
    RemoteRephraser, RemoteTriage,
};
use super::{BackendError, BackendSet};

pub const BACKENDS_ENV_VAR: &str = "PATHFINDER_BACKENDS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    #[default]
    Mock,
    Remote,
}

/// One backend endpoint: in-process mock or remote HTTP service.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    #[serde(default)]
    pub mode: BackendMode,
    /// Base URL, required iff mode is remote.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// Mock flavor, e.g. navigator "stain-density" | "uniform",
    /// triage "saturation-logistic" | "fixed:<score>".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
}

fn default_timeout_s() -> f64 {
    10.0
}

fn default_retries() -> u32 {
    2
}

impl EndpointConfig {
    fn validate(&self, kind: &str) -> Result<(), BackendError> {
        match self.mode {
            BackendMode::Remote if self.url.is_none() => Err(BackendError::BadConfig {
                reason: format!("{kind}: remote mode requires a url"),
            }),
            BackendMode::Mock if self.url.is_some() => Err(BackendError::BadConfig {
                reason: format!("{kind}: mock mode must not set a url"),
            }),
            _ if self.timeout_s <= 0.0 => Err(BackendError::BadConfig {
                reason: format!("{kind}: timeout must be positive"),
            }),
            _ => Ok(()),
        }
    }

    fn endpoint(&self) -> Result<HttpEndpoint, BackendError> {
        HttpEndpoint::new(
            self.url.as_deref().expect("validated url"),
            Duration::from_secs_f64(self.timeout_s),
            self.retries,
        )
    }

    fn variant<'a>(&'a self, default: &'a str) -> &'a str {
        self.variant.as_deref().unwrap_or(default)
    }
}

/// Full backend configuration: one endpoint per role plus the shared
/// embedding dimensionality and mock seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    /// Seed for the deterministic mocks.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub navigator: EndpointConfig,
    #[serde(default)]
    pub describer: EndpointConfig,
    #[serde(default)]
    pub embedder: EndpointConfig,
    #[serde(default)]
    pub triage: EndpointConfig,
    #[serde(default)]
    pub diagnoser: EndpointConfig,
    /// Optional; omit to disable rephrasing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rephraser: Option<EndpointConfig>,
}

fn default_embedding_dim() -> usize {
    768
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            embedding_dim: default_embedding_dim(),
            seed: 0,
            navigator: EndpointConfig::default(),
            describer: EndpointConfig::default(),
            embedder: EndpointConfig::default(),
            triage: EndpointConfig::default(),
            diagnoser: EndpointConfig::default(),
            rephraser: None,
        }
    }
}

impl BackendConfig {
    /// All mocks, with the given seed and embedding dimension.
    pub fn mock(seed: u64, embedding_dim: usize) -> Self {
        Self {
            embedding_dim,
            seed,
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| BackendError::BadConfig {
            reason: format!("cannot read {}: {e}", path.display()),
        })?;
        serde_json::from_str(&text).map_err(|e| BackendError::BadConfig {
            reason: format!("cannot parse {}: {e}", path.display()),
        })
    }

    /// Load from an explicit path, else from `PATHFINDER_BACKENDS`, else the
    /// all-mock default.
    pub fn resolve(path: Option<&Path>) -> Result<Self, BackendError> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(BACKENDS_ENV_VAR) {
                Some(p) => Self::load(Path::new(&p)),
                None => Ok(Self::default()),
            },
        }
    }

    pub fn build(&self) -> Result<BackendSet, BackendError> {
        for (kind, endpoint) in [
            ("navigator", &self.navigator),
            ("describer", &self.describer),
            ("embedder", &self.embedder),
            ("triage", &self.triage),
            ("diagnoser", &self.diagnoser),
        ] {
            endpoint.validate(kind)?;
        }
        if let Some(r) = &self.rephraser {
            r.validate("rephraser")?;
        }
        if self.embedding_dim == 0 {
            return Err(BackendError::BadConfig {
                reason: "embedding_dim must be at least 1".to_string(),
            });
        }

        let navigator: Arc<dyn super::NavigatorBackend> = match self.navigator.mode {
            BackendMode::Remote => Arc::new(RemoteNavigator::new(self.navigator.endpoint()?)),
            BackendMode::Mock => match self.navigator.variant("stain-density") {
                "stain-density" => Arc::new(MockNavigator::stain_density()),
                "uniform" => Arc::new(MockNavigator::uniform()),
                other => {
                    return Err(BackendError::BadConfig {
                        reason: format!("unknown navigator variant {other:?}"),
                    })
                }
            },
        };
        let describer: Arc<dyn super::DescriberBackend> = match self.describer.mode {
            BackendMode::Remote => Arc::new(RemoteDescriber::new(self.describer.endpoint()?)),
            BackendMode::Mock => Arc::new(MockDescriber::new()),
        };
        let embedder: Arc<dyn super::EmbedderBackend> = match self.embedder.mode {
            BackendMode::Remote => Arc::new(RemoteEmbedder::new(
                self.embedder.endpoint()?,
                self.embedding_dim,
            )),
            BackendMode::Mock => Arc::new(MockEmbedder::new(self.seed, self.embedding_dim)),
        };
        let triage: Arc<dyn super::TriageBackend> = match self.triage.mode {
            BackendMode::Remote => Arc::new(RemoteTriage::new(self.triage.endpoint()?)),
            BackendMode::Mock => match self.triage.variant("saturation-logistic") {
                "saturation-logistic" => Arc::new(MockTriage::saturation_logistic()),
                other => match other.strip_prefix("fixed:").and_then(|s| s.parse().ok()) {
                    Some(score) => Arc::new(MockTriage::fixed(score)),
                    None => {
                        return Err(BackendError::BadConfig {
                            reason: format!("unknown triage variant {other:?}"),
                        })
                    }
                },
            },
        };
        let diagnoser: Arc<dyn super::DiagnoserBackend> = match self.diagnoser.mode {
            BackendMode::Remote => Arc::new(RemoteDiagnoser::new(self.diagnoser.endpoint()?)),
            BackendMode::Mock => Arc::new(MockDiagnoser::new()),
        };
        let rephraser: Option<Arc<dyn super::RephraserBackend>> = match &self.rephraser {
            None => None,
            Some(cfg) => Some(match cfg.mode {
                BackendMode::Remote => Arc::new(RemoteRephraser::new(cfg.endpoint()?)),
                BackendMode::Mock => Arc::new(MockRephraser::new()),
            }),
        };

        Ok(BackendSet {
            navigator,
            describer,
            embedder,
            triage,
            diagnoser,
            rephraser,
            embedding_dim: self.embedding_dim,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_builds_mocks() {
        let set = BackendConfig::default().build().unwrap();
        assert_eq!(set.embedding_dim, 768);
        assert!(set.rephraser.is_none());
    }

    #[test]
    fn remote_requires_url() {
        let mut cfg = BackendConfig::default();
        cfg.navigator.mode = BackendMode::Remote;
        assert!(matches!(
            cfg.build(),
            Err(BackendError::BadConfig { .. })
        ));
    }

    #[test]
    fn fixed_triage_variant_parses() {
        let mut cfg = BackendConfig::default();
        cfg.triage.variant = Some("fixed:0.9".to_string());
        assert!(cfg.build().is_ok());
        cfg.triage.variant = Some("fixed:zzz".to_string());
        assert!(cfg.build().is_err());
    }
}

//! Backend contracts for the five model roles (plus the optional rephraser),
//! deterministic in-process mocks, HTTP clients, and the stub server.
//!
//! The engine only ever talks to these traits. Mocks are pure functions of
//! their inputs and configured seed, so whole pipelines are byte-reproducible
//! without any server. The remote clients speak the wire protocol described
//! in [`wire`] against `POST /v1/{navigate|describe|embed|triage|diagnose|rephrase}`.

pub mod config;
pub mod mock;
pub mod recording;
pub mod remote;
pub mod server;
pub mod wire;

pub use config::{BackendConfig, BackendMode, EndpointConfig};
pub use mock::{
    MockDescriber, MockDiagnoser, MockEmbedder, MockNavigator, MockRephraser, MockTriage,
};
pub use server::MockServer;

use std::sync::Arc;

use thiserror::Error;

use crate::navigator::Heatmap;
use crate::slide::{LevelRaster, PatchPixels};
use crate::triage::PaddedGrid;

#[derive(Debug, Error)]
pub enum BackendError {
    /// Transport-level failure after the retry budget was exhausted.
    #[error("transport failure for {url} after {attempts} attempt(s): {message}")]
    Transport {
        url: String,
        attempts: u32,
        message: String,
    },
    /// The service replied with an error envelope.
    #[error("backend reported an error: {message}")]
    Service { message: String },
    #[error("malformed backend response: {reason}")]
    MalformedResponse { reason: String },
    #[error("backend returned an empty response")]
    EmptyResponse,
    #[error("backend score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("embedding has dimension {actual}, expected {expected}")]
    WrongDimension { expected: usize, actual: usize },
    #[error("invalid backend input: {reason}")]
    InvalidInput { reason: String },
    #[error("bad backend configuration: {reason}")]
    BadConfig { reason: String },
}

/// Input to one navigator call: the thumbnail with previously selected cells
/// blacked out, the selection mask, and the conditioning vector (absent on
/// the first, unconditioned iteration).
#[derive(Debug, Clone, PartialEq)]
pub struct NavigateRequest {
    pub thumbnail: LevelRaster,
    pub grid_side: usize,
    /// Row-major `grid_side²` flags; true marks previously selected cells.
    pub mask: Vec<bool>,
    pub embedding: Option<Vec<f64>>,
}

/// Produces an importance heatmap over the thumbnail.
pub trait NavigatorBackend: Send + Sync {
    fn navigate(&self, request: &NavigateRequest) -> Result<Heatmap, BackendError>;
}

/// Produces a natural-language description of one patch.
pub trait DescriberBackend: Send + Sync {
    fn describe(&self, patch: &PatchPixels) -> Result<String, BackendError>;
}

/// Produces fixed-length embeddings for description text and patch images.
pub trait EmbedderBackend: Send + Sync {
    fn embed_text(&self, text: &str) -> Result<Vec<f32>, BackendError>;
    fn embed_image(&self, patch: &PatchPixels) -> Result<Vec<f32>, BackendError>;
    /// Dimensionality of every vector this backend returns.
    fn dim(&self) -> usize;
}

/// Scores a padded feature grid; higher means riskier, in [0, 1].
pub trait TriageBackend: Send + Sync {
    fn score(&self, grid: &PaddedGrid) -> Result<f64, BackendError>;
}

/// Picks one of the four diagnosis option texts given the assembled prompt.
pub trait DiagnoserBackend: Send + Sync {
    fn diagnose(&self, prompt: &str) -> Result<String, BackendError>;
}

/// Rewrites a description while preserving its meaning.
pub trait RephraserBackend: Send + Sync {
    fn rephrase(&self, text: &str) -> Result<String, BackendError>;
}

/// One backend per role, shareable across workers.
#[derive(Clone)]
pub struct BackendSet {
    pub navigator: Arc<dyn NavigatorBackend>,
    pub describer: Arc<dyn DescriberBackend>,
    pub embedder: Arc<dyn EmbedderBackend>,
    pub triage: Arc<dyn TriageBackend>,
    pub diagnoser: Arc<dyn DiagnoserBackend>,
    pub rephraser: Option<Arc<dyn RephraserBackend>>,
    pub embedding_dim: usize,
}

impl BackendSet {
    /// All-mock set with the standard signal-aware mocks.
    pub fn mocks(seed: u64, embedding_dim: usize) -> Self {
        Self {
            navigator: Arc::new(MockNavigator::stain_density()),
            describer: Arc::new(MockDescriber::new()),
            embedder: Arc::new(MockEmbedder::new(seed, embedding_dim)),
            triage: Arc::new(MockTriage::saturation_logistic()),
            diagnoser: Arc::new(MockDiagnoser::new()),
            rephraser: Some(Arc::new(MockRephraser::new())),
            embedding_dim,
        }
    }

    /// Resolve a configuration into live backends (mocks or HTTP clients).
    pub fn from_config(config: &BackendConfig) -> Result<Self, BackendError> {
        config.build()
    }
}

//! HTTP clients for remote model backends.
//!
//! One blocking POST per call with a per-attempt timeout. Transport failures
//! and 5xx responses are retried up to the configured budget; an `ok: false`
//! envelope is a service error and is not retried.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::navigator::Heatmap;
use crate::slide::PatchPixels;
use crate::triage::PaddedGrid;

use super::wire::{
    DescribeBody, DiagnoseBody, EmbedBody, Envelope, HeatmapPayload, ImagePayload, NavigateBody,
    RephraseBody, ScoreResult, TextResult, TriageBody,
};
use super::{
    BackendError, DescriberBackend, DiagnoserBackend, EmbedderBackend, NavigateRequest,
    NavigatorBackend, RephraserBackend, TriageBackend,
};

/// Shared POST-with-retries machinery for all remote backends.
#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    base_url: String,
    client: reqwest::blocking::Client,
    retries: u32,
}

impl HttpEndpoint {
    pub fn new(base_url: &str, timeout: Duration, retries: u32) -> Result<Self, BackendError> {
        if timeout.is_zero() {
            return Err(BackendError::BadConfig {
                reason: "timeout must be positive".to_string(),
            });
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::BadConfig {
                reason: e.to_string(),
            })?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            client,
            retries,
        })
    }

    fn post<B: Serialize, R: DeserializeOwned>(
        &self,
        route: &str,
        body: &B,
    ) -> Result<R, BackendError> {
        let url = format!("{}{route}", self.base_url);
        let attempts = self.retries + 1;
        let mut last_error = String::new();
        for _ in 0..attempts {
            match self.client.post(&url).json(body).send() {
                Err(e) => last_error = e.to_string(),
                Ok(response) => {
                    let status = response.status();
                    if status.is_server_error() {
                        last_error = format!("server error {status}");
                        continue;
                    }
                    let envelope: Envelope<R> =
                        response
                            .json()
                            .map_err(|e| BackendError::MalformedResponse {
                                reason: e.to_string(),
                            })?;
                    if !envelope.ok {
                        return Err(BackendError::Service {
                            message: envelope
                                .error
                                .unwrap_or_else(|| "unspecified error".to_string()),
                        });
                    }
                    return envelope.result.ok_or(BackendError::MalformedResponse {
                        reason: "ok envelope without result".to_string(),
                    });
                }
            }
        }
        Err(BackendError::Transport {
            url,
            attempts,
            message: last_error,
        })
    }
}

pub struct RemoteNavigator {
    endpoint: HttpEndpoint,
}

impl RemoteNavigator {
    pub fn new(endpoint: HttpEndpoint) -> Self {
        Self { endpoint }
    }
}

impl NavigatorBackend for RemoteNavigator {
    fn navigate(&self, request: &NavigateRequest) -> Result<Heatmap, BackendError> {
        let payload: HeatmapPayload = self
            .endpoint
            .post("/v1/navigate", &NavigateBody::from_request(request))?;
        let heatmap = payload.to_heatmap()?;
        heatmap
            .validate(request.thumbnail.width, request.thumbnail.height)
            .map_err(|e| BackendError::MalformedResponse {
                reason: e.to_string(),
            })?;
        Ok(heatmap)
    }
}

pub struct RemoteDescriber {
    endpoint: HttpEndpoint,
}

impl RemoteDescriber {
    pub fn new(endpoint: HttpEndpoint) -> Self {
        Self { endpoint }
    }
}

impl DescriberBackend for RemoteDescriber {
    fn describe(&self, patch: &PatchPixels) -> Result<String, BackendError> {
        let body = DescribeBody {
            patch: ImagePayload::from_patch(patch),
        };
        let result: TextResult = self.endpoint.post("/v1/describe", &body)?;
        if result.text.is_empty() {
            return Err(BackendError::EmptyResponse);
        }
        Ok(result.text)
    }
}

pub struct RemoteEmbedder {
    endpoint: HttpEndpoint,
    dim: usize,
}

impl RemoteEmbedder {
    pub fn new(endpoint: HttpEndpoint, dim: usize) -> Self {
        Self { endpoint, dim }
    }

    fn check_dim(&self, vector: Vec<f32>) -> Result<Vec<f32>, BackendError> {
        if vector.len() != self.dim {
            return Err(BackendError::WrongDimension {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(BackendError::MalformedResponse {
                reason: "non-finite embedding component".to_string(),
            });
        }
        Ok(vector)
    }
}

impl EmbedderBackend for RemoteEmbedder {
    fn embed_text(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        let body = EmbedBody {
            text: Some(text.to_string()),
            image: None,
        };
        let result: super::wire::VectorResult = self.endpoint.post("/v1/embed", &body)?;
        self.check_dim(result.vector)
    }

    fn embed_image(&self, patch: &PatchPixels) -> Result<Vec<f32>, BackendError> {
        let body = EmbedBody {
            text: None,
            image: Some(ImagePayload::from_patch(patch)),
        };
        let result: super::wire::VectorResult = self.endpoint.post("/v1/embed", &body)?;
        self.check_dim(result.vector)
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

pub struct RemoteTriage {
    endpoint: HttpEndpoint,
}

impl RemoteTriage {
    pub fn new(endpoint: HttpEndpoint) -> Self {
        Self { endpoint }
    }
}

impl TriageBackend for RemoteTriage {
    fn score(&self, grid: &PaddedGrid) -> Result<f64, BackendError> {
        let result: ScoreResult = self
            .endpoint
            .post("/v1/triage", &TriageBody::from_grid(grid))?;
        if !result.score.is_finite() || !(0.0..=1.0).contains(&result.score) {
            return Err(BackendError::ScoreOutOfRange(result.score));
        }
        Ok(result.score)
    }
}

pub struct RemoteDiagnoser {
    endpoint: HttpEndpoint,
}

impl RemoteDiagnoser {
    pub fn new(endpoint: HttpEndpoint) -> Self {
        Self { endpoint }
    }
}

impl DiagnoserBackend for RemoteDiagnoser {
    fn diagnose(&self, prompt: &str) -> Result<String, BackendError> {
        let body = DiagnoseBody {
            prompt: prompt.to_string(),
        };
        let result: TextResult = self.endpoint.post("/v1/diagnose", &body)?;
        if result.text.is_empty() {
            return Err(BackendError::EmptyResponse);
        }
        Ok(result.text)
    }
}

pub struct RemoteRephraser {
    endpoint: HttpEndpoint,
}

impl RemoteRephraser {
    pub fn new(endpoint: HttpEndpoint) -> Self {
        Self { endpoint }
    }
}

impl RephraserBackend for RemoteRephraser {
    fn rephrase(&self, text: &str) -> Result<String, BackendError> {
        let body = RephraseBody {
            text: text.to_string(),
        };
        let result: TextResult = self.endpoint.post("/v1/rephrase", &body)?;
        if result.text.is_empty() {
            return Err(BackendError::EmptyResponse);
        }
        Ok(result.text)
    }
}

//! Call-logging wrappers around backends, used by tests to assert on request
//! contents (conditioning presence, mask state) and call counts.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crate::navigator::{GridCell, Heatmap};
use crate::slide::PatchPixels;
use crate::triage::PaddedGrid;

use super::{
    BackendError, DescriberBackend, DiagnoserBackend, EmbedderBackend, NavigateRequest,
    NavigatorBackend, RephraserBackend, TriageBackend,
};

/// What one navigator call carried.
#[derive(Debug, Clone, PartialEq)]
pub struct NavigatorCall {
    /// Cells flagged as already selected in the request mask.
    pub masked_cells: Vec<GridCell>,
    /// Whether a conditioning vector was present.
    pub conditioned: bool,
    pub embedding_len: Option<usize>,
}

pub struct RecordingNavigator {
    inner: Arc<dyn NavigatorBackend>,
    calls: Mutex<Vec<NavigatorCall>>,
}

impl RecordingNavigator {
    pub fn new(inner: Arc<dyn NavigatorBackend>) -> Arc<Self> {
        Arc::new(Self {
            inner,
            calls: Mutex::new(Vec::new()),
        })
    }

    pub fn calls(&self) -> Vec<NavigatorCall> {
        self.calls.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap().len()
    }
}

impl NavigatorBackend for RecordingNavigator {
    fn navigate(&self, request: &NavigateRequest) -> Result<Heatmap, BackendError> {
        let masked_cells = request
            .mask
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(i, _)| GridCell::new(i / request.grid_side, i % request.grid_side))
            .collect();
        self.calls.lock().unwrap().push(NavigatorCall {
            masked_cells,
            conditioned: request.embedding.is_some(),
            embedding_len: request.embedding.as_ref().map(Vec::len),
        });
        self.inner.navigate(request)
    }
}

macro_rules! counting_wrapper {
    ($name:ident, $trait:ident) => {
        pub struct $name {
            inner: Arc<dyn $trait>,
            count: AtomicUsize,
        }

        impl $name {
            pub fn new(inner: Arc<dyn $trait>) -> Arc<Self> {
                Arc::new(Self {
                    inner,
                    count: AtomicUsize::new(0),
                })
            }

            pub fn call_count(&self) -> usize {
                self.count.load(Ordering::SeqCst)
            }
        }
    };
}

counting_wrapper!(CountingDescriber, DescriberBackend);
counting_wrapper!(CountingEmbedder, EmbedderBackend);
counting_wrapper!(CountingTriage, TriageBackend);
counting_wrapper!(CountingDiagnoser, DiagnoserBackend);
counting_wrapper!(CountingRephraser, RephraserBackend);

impl DescriberBackend for CountingDescriber {
    fn describe(&self, patch: &PatchPixels) -> Result<String, BackendError> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.inner.describe(patch)
    }
}

impl EmbedderBackend for CountingEmbedder {
    fn embed_text(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.inner.embed_text(text)
    }

    fn embed_image(&self, patch: &PatchPixels) -> Result<Vec<f32>, BackendError> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.inner.embed_image(patch)
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }
}

impl TriageBackend for CountingTriage {
    fn score(&self, grid: &PaddedGrid) -> Result<f64, BackendError> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.inner.score(grid)
    }
}

impl DiagnoserBackend for CountingDiagnoser {
    fn diagnose(&self, prompt: &str) -> Result<String, BackendError> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.inner.diagnose(prompt)
    }
}

impl RephraserBackend for CountingRephraser {
    fn rephrase(&self, text: &str) -> Result<String, BackendError> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.inner.rephrase(text)
    }
}

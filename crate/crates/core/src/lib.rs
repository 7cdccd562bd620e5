//! Orchestration engine for a multi-agent whole-slide-image (WSI) diagnosis
//! pipeline: triage gating, iterative text-conditioned navigation, patch
//! description gathering, trajectory generation, and majority-voted diagnosis.
//!
//! All model inference sits behind the pluggable backend contracts in
//! [`backend`]: deterministic in-process mocks for desk-scale runs and tests,
//! and HTTP clients speaking a small JSON protocol for real model servers.
//!
//! Module map:
//!
//! - [`slide`] — slide rasters, tiling, saturation filtering, synthesis, and
//!   the on-disk slide directory format
//! - [`triage`] — patch-feature assembly (grid padding) and the benign/risky gate
//! - [`navigator`] — importance maps, masked probabilistic sampling, running
//!   description-embedding state, and the sampler strategies
//! - [`trajectory`] — the iterative navigate→crop→describe→mask loop and
//!   trajectory persistence
//! - [`diagnosis`] — prompt assembly, majority voting, the full pipeline, and
//!   the evaluation harness
//! - [`backend`] — backend contracts, mocks, remote clients, wire protocol,
//!   and the mock stub server
//! - [`dataset`] — dataset manifests and synthetic dataset generation

pub mod backend;
pub mod dataset;
pub mod diagnosis;
pub mod navigator;
pub mod seed;
pub mod slide;
pub mod trajectory;
pub mod triage;

pub use backend::{BackendConfig, BackendError, BackendSet};
pub use diagnosis::{DiagnosisClass, EvalReport, Prediction, VoteResult};
pub use navigator::{EmbeddingState, GridCell, Heatmap, ImportanceMap, ProbabilityGrid};
pub use slide::{LevelRaster, PatchCoord, PatchPixels, SlideRaster};
pub use trajectory::{Trajectory, TrajectorySet, TrajectoryStep};
pub use triage::{FeatureMatrix, GridDims, PaddedGrid, TriageVerdict};

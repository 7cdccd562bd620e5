//! Triage input preparation and the benign/risky gate.
//!
//! Patch features are laid out on the smallest square grid that holds them,
//! padding by repeating the leading rows; scoring itself happens behind a
//! [`TriageBackend`].

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, EmbedderBackend, TriageBackend};
use crate::slide::{
    self, PatchCoord, SlideError, SlideRaster, MIN_TRIAGE_PATCHES, SATURATION_THRESHOLD,
};

/// Patches are tiled at this size for triage feature extraction.
pub const TRIAGE_PATCH_SIZE: u32 = 512;
/// Magnification of the level used for triage tiling.
pub const TRIAGE_MAGNIFICATION: f64 = 10.0;
/// Scores at or above this are classified risky.
pub const DEFAULT_DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum TriageError {
    #[error("feature matrix must have at least one row")]
    EmptyFeatures,
    #[error("feature row {row} has dimension {actual}, expected {expected}")]
    DimensionMismatch {
        row: usize,
        expected: usize,
        actual: usize,
    },
    #[error("coords length {coords} does not match row count {rows}")]
    CoordMismatch { coords: usize, rows: usize },
    #[error("triage score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error(transparent)]
    Slide(#[from] SlideError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Per-patch feature vectors aligned with their spatially sorted coords.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub dim: usize,
    pub rows: Vec<Vec<f32>>,
    pub coords: Vec<PatchCoord>,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<Vec<f32>>, coords: Vec<PatchCoord>) -> Result<Self, TriageError> {
        if rows.is_empty() {
            return Err(TriageError::EmptyFeatures);
        }
        let dim = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(TriageError::DimensionMismatch {
                    row: i,
                    expected: dim,
                    actual: row.len(),
                });
            }
        }
        if coords.len() != rows.len() {
            return Err(TriageError::CoordMismatch {
                coords: coords.len(),
                rows: rows.len(),
            });
        }
        Ok(Self { dim, rows, coords })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Square grid side and padding count for N feature rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridDims {
    /// Smallest side with `side² ≥ N`.
    pub side: usize,
    /// Number of repeated rows: `side² − N`.
    pub pad: usize,
}

/// Smallest square grid that holds `n` rows.
pub fn grid_dims(n: usize) -> Result<GridDims, TriageError> {
    if n == 0 {
        return Err(TriageError::EmptyFeatures);
    }
    let mut side = (n as f64).sqrt() as usize;
    while side * side < n {
        side += 1;
    }
    Ok(GridDims {
        side,
        pad: side * side - n,
    })
}

/// Feature rows padded out to a full `side × side` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedGrid {
    pub side: usize,
    pub dim: usize,
    /// `side²` rows; the last `pad_count` repeat the first `pad_count`.
    pub rows: Vec<Vec<f32>>,
    pub pad_count: usize,
}

/// Pad a feature matrix to a square grid by repeating its leading rows.
pub fn pad_features(features: &FeatureMatrix) -> Result<PaddedGrid, TriageError> {
    let dims = grid_dims(features.len())?;
    let mut rows = features.rows.clone();
    rows.extend_from_slice(&features.rows[..dims.pad]);
    Ok(PaddedGrid {
        side: dims.side,
        dim: features.dim,
        rows,
        pad_count: dims.pad,
    })
}

/// Benign/risky verdict from the triage gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriageVerdict {
    pub risky: bool,
    pub score: f64,
}

/// Knobs for [`prepare_triage_input_with`]; defaults follow the production
/// pipeline (512 px patches at 10×, 150-patch minimum, threshold 15).
#[derive(Debug, Clone, Copy)]
pub struct TriageInputSpec {
    pub patch_size: u32,
    pub magnification: f64,
    pub min_patches: usize,
    pub saturation_threshold: f64,
}

impl Default for TriageInputSpec {
    fn default() -> Self {
        Self {
            patch_size: TRIAGE_PATCH_SIZE,
            magnification: TRIAGE_MAGNIFICATION,
            min_patches: MIN_TRIAGE_PATCHES,
            saturation_threshold: SATURATION_THRESHOLD,
        }
    }
}

/// Full triage feature pipeline: tile → filter background → top up to the
/// minimum → spatial sort → embed each patch → pad to a square grid.
pub fn prepare_triage_input<R: Rng>(
    slide: &SlideRaster,
    embedder: &dyn EmbedderBackend,
    rng: &mut R,
) -> Result<PaddedGrid, TriageError> {
    prepare_triage_input_with(slide, embedder, &TriageInputSpec::default(), rng)
}

pub fn prepare_triage_input_with<R: Rng>(
    slide: &SlideRaster,
    embedder: &dyn EmbedderBackend,
    spec: &TriageInputSpec,
    rng: &mut R,
) -> Result<PaddedGrid, TriageError> {
    let level_index = slide.level_at_magnification(spec.magnification)?;
    let coords = slide::tile_slide(slide, level_index, spec.patch_size)?;
    let kept = slide::filter_background(slide, &coords, spec.saturation_threshold);
    let kept = slide::ensure_min_patches(
        slide,
        level_index,
        spec.patch_size,
        kept,
        spec.min_patches,
        spec.saturation_threshold,
        rng,
    )?;
    let sorted = slide::sort_spatial(kept);

    let rows = sorted
        .iter()
        .map(|&coord| {
            let patch = slide::extract_patch(slide, coord)?;
            Ok(embedder.embed_image(&patch)?)
        })
        .collect::<Result<Vec<_>, TriageError>>()?;

    let features = FeatureMatrix::new(rows, sorted)?;
    pad_features(&features)
}

/// Score a padded grid and apply the decision threshold (risky on ties).
pub fn run_triage(
    grid: &PaddedGrid,
    backend: &dyn TriageBackend,
    threshold: f64,
) -> Result<TriageVerdict, TriageError> {
    let score = backend.score(grid)?;
    if !score.is_finite() || !(0.0..=1.0).contains(&score) {
        return Err(TriageError::ScoreOutOfRange(score));
    }
    Ok(TriageVerdict {
        risky: score >= threshold,
        score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f32>>) -> FeatureMatrix {
        let coords = (0..rows.len())
            .map(|i| PatchCoord {
                level_index: 0,
                x: 0,
                y: i as u32,
                size: 1,
            })
            .collect();
        FeatureMatrix::new(rows, coords).unwrap()
    }

    #[test]
    fn grid_dims_examples() {
        assert_eq!(grid_dims(150).unwrap(), GridDims { side: 13, pad: 19 });
        assert_eq!(grid_dims(256).unwrap(), GridDims { side: 16, pad: 0 });
        assert_eq!(grid_dims(1).unwrap(), GridDims { side: 1, pad: 0 });
        assert!(matches!(grid_dims(0), Err(TriageError::EmptyFeatures)));
    }

    #[test]
    fn pad_repeats_leading_rows() {
        let m = matrix(vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]]);
        let grid = pad_features(&m).unwrap();
        assert_eq!(grid.side, 2);
        assert_eq!(grid.pad_count, 1);
        assert_eq!(grid.rows.len(), 4);
        assert_eq!(grid.rows[3], grid.rows[0]);
        assert_eq!(&grid.rows[..3], &m.rows[..]);
    }

    #[test]
    fn pad_is_noop_on_perfect_square() {
        let m = matrix(vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]]);
        let grid = pad_features(&m).unwrap();
        assert_eq!(grid.pad_count, 0);
        assert_eq!(grid.rows, m.rows);
    }

    #[test]
    fn ragged_rows_rejected() {
        let coords = vec![
            PatchCoord {
                level_index: 0,
                x: 0,
                y: 0,
                size: 1,
            };
            2
        ];
        let err = FeatureMatrix::new(vec![vec![1.0], vec![1.0, 2.0]], coords).unwrap_err();
        assert!(matches!(err, TriageError::DimensionMismatch { row: 1, .. }));
    }
}

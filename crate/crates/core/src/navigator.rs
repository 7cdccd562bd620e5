//! Navigation math: importance maps, masked probabilistic sampling, the
//! running description-embedding state, and the sampler strategies.
//!
//! A navigation step turns a backend heatmap into grid scores, renormalizes
//! over the unmasked cells, samples one cell by inverse CDF over row-major
//! order with a seeded PRNG, and masks it against re-selection. The same
//! masking machinery realizes without-replacement draws for the one-shot
//! samplers.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{
    BackendError, BackendSet, DescriberBackend, EmbedderBackend, NavigateRequest, NavigatorBackend,
};
use crate::slide::{self, LevelRaster, PatchCoord, SlideError, SlideRaster, SATURATION_THRESHOLD};

/// Default grid side for 512×512 thumbnails (256 cells of 32×32).
pub const DEFAULT_GRID_SIDE: usize = 16;

#[derive(Debug, Error)]
pub enum NavError {
    #[error("all grid cells are masked")]
    AllCellsMasked,
    #[error("cell ({row},{col}) out of bounds for grid side {side}")]
    CellOutOfBounds { row: usize, col: usize, side: usize },
    #[error("importance scores must be finite and non-negative")]
    BadScores,
    #[error("embedding dimension must be at least 1")]
    ZeroDim,
    #[error("embedding dimension mismatch: state {state}, input {input}")]
    EmbeddingDimMismatch { state: usize, input: usize },
    #[error("heatmap {width}x{height} not divisible into a {side}x{side} grid")]
    IndivisibleHeatmap { width: u32, height: u32, side: usize },
    #[error("heatmap invalid: {reason}")]
    BadHeatmap { reason: String },
    #[error("requested {requested} draws but only {available} unmasked cells")]
    TooManyDraws { requested: usize, available: usize },
    #[error("no viewport records supplied")]
    EmptyViewports,
    #[error("no viewport records match slide {0}")]
    NoMatchingViewports(String),
    #[error("viewport record invalid: {reason}")]
    InvalidViewport { reason: String },
    #[error("viewport log {path}: line {line}: {reason}")]
    MalformedViewportLine {
        path: String,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Slide(#[from] SlideError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Row/column address of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub row: usize,
    pub col: usize,
}

impl GridCell {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Dense scalar field returned by a navigator backend, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f32>,
}

impl Heatmap {
    /// Reject shape mismatches and negative/non-finite values.
    pub fn validate(&self, expected_w: u32, expected_h: u32) -> Result<(), NavError> {
        if self.width != expected_w || self.height != expected_h {
            return Err(NavError::BadHeatmap {
                reason: format!(
                    "shape {}x{} does not match requested {expected_w}x{expected_h}",
                    self.width, self.height
                ),
            });
        }
        if self.values.len() != self.width as usize * self.height as usize {
            return Err(NavError::BadHeatmap {
                reason: format!(
                    "payload length {} does not match {}x{}",
                    self.values.len(),
                    self.width,
                    self.height
                ),
            });
        }
        if self.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(NavError::BadHeatmap {
                reason: "negative or non-finite value".to_string(),
            });
        }
        Ok(())
    }
}

/// Grid of non-negative importance scores with a selected-cell mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMap {
    pub grid_side: usize,
    /// Row-major `grid_side²` scores.
    pub scores: Vec<f64>,
    /// True marks previously selected cells.
    pub masked: Vec<bool>,
}

impl ImportanceMap {
    pub fn new(grid_side: usize, scores: Vec<f64>) -> Self {
        assert_eq!(scores.len(), grid_side * grid_side);
        let masked = vec![false; scores.len()];
        Self {
            grid_side,
            scores,
            masked,
        }
    }

    #[inline]
    pub fn index(&self, cell: GridCell) -> usize {
        cell.row * self.grid_side + cell.col
    }

    pub fn unmasked_count(&self) -> usize {
        self.masked.iter().filter(|m| !**m).count()
    }
}

/// Sampling distribution over grid cells; masked cells carry probability 0
/// and the rest sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityGrid {
    pub grid_side: usize,
    pub probs: Vec<f64>,
}

/// Normalize unmasked scores into sampling probabilities.
///
/// Masked cells get exactly 0. If every unmasked score is 0 the distribution
/// falls back to uniform over the unmasked cells, which keeps the loop alive
/// on blank navigator output.
pub fn normalize_map(map: &ImportanceMap) -> Result<ProbabilityGrid, NavError> {
    if map.scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(NavError::BadScores);
    }
    let unmasked: f64 = map
        .scores
        .iter()
        .zip(&map.masked)
        .filter(|(_, m)| !**m)
        .map(|(s, _)| *s)
        .sum();
    let unmasked_count = map.unmasked_count();
    if unmasked_count == 0 {
        return Err(NavError::AllCellsMasked);
    }
    let probs = map
        .scores
        .iter()
        .zip(&map.masked)
        .map(|(s, m)| {
            if *m {
                0.0
            } else if unmasked > 0.0 {
                s / unmasked
            } else {
                1.0 / unmasked_count as f64
            }
        })
        .collect();
    Ok(ProbabilityGrid {
        grid_side: map.grid_side,
        probs,
    })
}

/// Sample one cell by inverse CDF over row-major order.
///
/// Zero-probability (masked) cells can never be returned.
pub fn sample_cell<R: Rng>(probs: &ProbabilityGrid, rng: &mut R) -> GridCell {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, p) in probs.probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last_positive = Some(i);
            if u < acc {
                return cell_of(i, probs.grid_side);
            }
        }
    }
    // Rounding left acc slightly below 1; fall back to the last live cell.
    let i = last_positive.expect("probability grid has a positive cell");
    cell_of(i, probs.grid_side)
}

#[inline]
fn cell_of(index: usize, side: usize) -> GridCell {
    GridCell::new(index / side, index % side)
}

/// Mark a cell as selected; idempotent.
pub fn mask_cell(map: &ImportanceMap, cell: GridCell) -> Result<ImportanceMap, NavError> {
    if cell.row >= map.grid_side || cell.col >= map.grid_side {
        return Err(NavError::CellOutOfBounds {
            row: cell.row,
            col: cell.col,
            side: map.grid_side,
        });
    }
    let mut out = map.clone();
    out.masked[out.index(cell)] = true;
    Ok(out)
}

/// Running mean of description embeddings. `count == 0` means unconditioned:
/// consumers must omit the conditioning vector entirely.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingState {
    pub mean: Vec<f64>,
    pub count: u32,
}

impl EmbeddingState {
    /// The vector to condition on, absent until a description is absorbed.
    pub fn conditioning_vector(&self) -> Option<&[f64]> {
        (self.count > 0).then_some(self.mean.as_slice())
    }
}

/// Fresh unconditioned state.
pub fn init_embedding(dim: usize) -> Result<EmbeddingState, NavError> {
    if dim == 0 {
        return Err(NavError::ZeroDim);
    }
    Ok(EmbeddingState {
        mean: vec![0.0; dim],
        count: 0,
    })
}

/// Fold one embedding into the running mean.
pub fn update_embedding(state: &EmbeddingState, new_vec: &[f32]) -> Result<EmbeddingState, NavError> {
    if new_vec.len() != state.mean.len() {
        return Err(NavError::EmbeddingDimMismatch {
            state: state.mean.len(),
            input: new_vec.len(),
        });
    }
    let count = state.count as f64;
    let mean = state
        .mean
        .iter()
        .zip(new_vec)
        .map(|(m, v)| (m * count + f64::from(*v)) / (count + 1.0))
        .collect();
    Ok(EmbeddingState {
        mean,
        count: state.count + 1,
    })
}

/// Per-cell mean heatmap intensity over a `grid_side × grid_side` grid.
///
/// No normalization happens here; [`normalize_map`] owns that.
pub fn scores_from_heatmap(heatmap: &Heatmap, grid_side: usize) -> Result<ImportanceMap, NavError> {
    heatmap.validate(heatmap.width, heatmap.height)?;
    let (w, h) = (heatmap.width as usize, heatmap.height as usize);
    if grid_side == 0 || w % grid_side != 0 || h % grid_side != 0 {
        return Err(NavError::IndivisibleHeatmap {
            width: heatmap.width,
            height: heatmap.height,
            side: grid_side,
        });
    }
    let (bw, bh) = (w / grid_side, h / grid_side);
    let mut scores = Vec::with_capacity(grid_side * grid_side);
    for row in 0..grid_side {
        for col in 0..grid_side {
            let mut sum = 0.0f64;
            for y in row * bh..(row + 1) * bh {
                let base = y * w + col * bw;
                for v in &heatmap.values[base..base + bw] {
                    sum += f64::from(*v);
                }
            }
            scores.push(sum / (bw * bh) as f64);
        }
    }
    Ok(ImportanceMap::new(grid_side, scores))
}

/// One logged viewing rectangle from a pathologist session, at base-level
/// pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewportRecord {
    pub case_id: String,
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
    pub zoom: f64,
    pub t_start: f64,
    pub t_end: f64,
}

/// Read viewport records from a JSONL file, one record per line.
pub fn read_viewports(path: &Path) -> Result<Vec<ViewportRecord>, NavError> {
    let file = File::open(path).map_err(SlideError::Io)?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(SlideError::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let record =
            serde_json::from_str(&line).map_err(|e| NavError::MalformedViewportLine {
                path: path.display().to_string(),
                line: i + 1,
                reason: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

/// Accumulate viewport dwell time into grid scores.
///
/// Each record contributes `t_end − t_start` seconds, split over the cells
/// its rectangle overlaps in proportion to overlapped pixel count.
pub fn imitated_weights(
    records: &[ViewportRecord],
    slide: &SlideRaster,
    grid_side: usize,
) -> Result<ImportanceMap, NavError> {
    if records.is_empty() {
        return Err(NavError::EmptyViewports);
    }
    let matching: Vec<&ViewportRecord> = records
        .iter()
        .filter(|r| r.case_id == slide.slide_id)
        .collect();
    if matching.is_empty() {
        return Err(NavError::NoMatchingViewports(slide.slide_id.clone()));
    }
    let base = slide.level(0)?;
    let (w, h) = (u64::from(base.width), u64::from(base.height));
    let side = grid_side as u64;
    let mut scores = vec![0.0f64; grid_side * grid_side];
    for r in matching {
        let valid = r.width >= 1
            && r.height >= 1
            && u64::from(r.x) + u64::from(r.width) <= w
            && u64::from(r.y) + u64::from(r.height) <= h
            && r.t_end >= r.t_start;
        if !valid {
            return Err(NavError::InvalidViewport {
                reason: format!(
                    "case {} rect ({},{}) {}x{} t [{}, {}]",
                    r.case_id, r.x, r.y, r.width, r.height, r.t_start, r.t_end
                ),
            });
        }
        let dwell = r.t_end - r.t_start;
        let area = u64::from(r.width) * u64::from(r.height);
        let (x0, x1) = (u64::from(r.x), u64::from(r.x) + u64::from(r.width));
        let (y0, y1) = (u64::from(r.y), u64::from(r.y) + u64::from(r.height));
        // Pixel p is in cell c iff p ∈ [ceil(cD/side), ceil((c+1)D/side)).
        let col_range = (x0 * side / w)..=((x1 - 1) * side / w);
        let row_range = (y0 * side / h)..=((y1 - 1) * side / h);
        for row in row_range {
            let cy0 = (row * h).div_ceil(side);
            let cy1 = ((row + 1) * h).div_ceil(side);
            let oy = y1.min(cy1).saturating_sub(y0.max(cy0));
            for col in col_range.clone() {
                let cx0 = (col * w).div_ceil(side);
                let cx1 = ((col + 1) * w).div_ceil(side);
                let ox = x1.min(cx1).saturating_sub(x0.max(cx0));
                let overlap = ox * oy;
                if overlap > 0 {
                    scores[row as usize * grid_side + col as usize] +=
                        dwell * overlap as f64 / area as f64;
                }
            }
        }
    }
    Ok(ImportanceMap::new(grid_side, scores))
}

/// Black out the masked cells of a thumbnail before it is sent to the
/// navigator backend.
pub fn masked_thumbnail(thumb: &LevelRaster, masked: &[bool], grid_side: usize) -> LevelRaster {
    assert_eq!(masked.len(), grid_side * grid_side);
    let mut out = thumb.clone();
    let (w, h) = (thumb.width as usize, thumb.height as usize);
    for (idx, is_masked) in masked.iter().enumerate() {
        if !is_masked {
            continue;
        }
        let (row, col) = (idx / grid_side, idx % grid_side);
        let y0 = row * h / grid_side;
        let y1 = (row + 1) * h / grid_side;
        let x0 = col * w / grid_side;
        let x1 = (col + 1) * w / grid_side;
        for y in y0..y1 {
            let start = (y * w + x0) * 3;
            out.pixels[start..start + (x1 - x0) * 3].fill(0);
        }
    }
    out
}

/// Map a grid cell onto a pyramid level: proportional offsets and a square
/// side of `floor(min(W, H) / grid_side)`, clamped in bounds.
pub fn cell_region_on_level(
    cell: GridCell,
    grid_side: usize,
    width: u32,
    height: u32,
) -> (u32, u32, u32) {
    let side = grid_side as f64;
    let size = (u64::from(width.min(height)) / grid_side as u64) as u32;
    let x = (cell.col as f64 * f64::from(width) / side).round() as u32;
    let y = (cell.row as f64 * f64::from(height) / side).round() as u32;
    (x.min(width - size), y.min(height - size), size)
}

/// Iterative navigation over one slide: masked thumbnail in, heatmap out,
/// one sampled cell per step, with the embedding state conditioning every
/// step after the first absorbed description.
pub struct NavigationSession<'a> {
    slide: &'a SlideRaster,
    grid_side: usize,
    masked: Vec<bool>,
    state: EmbeddingState,
    selected: Vec<GridCell>,
}

impl<'a> NavigationSession<'a> {
    pub fn new(
        slide: &'a SlideRaster,
        grid_side: usize,
        embedding_dim: usize,
    ) -> Result<Self, NavError> {
        Ok(Self {
            slide,
            grid_side,
            masked: vec![false; grid_side * grid_side],
            state: init_embedding(embedding_dim)?,
            selected: Vec::new(),
        })
    }

    pub fn grid_side(&self) -> usize {
        self.grid_side
    }

    pub fn selected(&self) -> &[GridCell] {
        &self.selected
    }

    pub fn state(&self) -> &EmbeddingState {
        &self.state
    }

    pub fn unmasked_remaining(&self) -> usize {
        self.masked.iter().filter(|m| !**m).count()
    }

    /// Run one navigation step: query the backend with the masked thumbnail
    /// and current conditioning state, sample a cell, and mask it.
    pub fn next_cell<R: Rng>(
        &mut self,
        nav: &dyn NavigatorBackend,
        rng: &mut R,
    ) -> Result<GridCell, NavError> {
        let thumb = masked_thumbnail(&self.slide.thumbnail, &self.masked, self.grid_side);
        let (tw, th) = (thumb.width, thumb.height);
        let request = NavigateRequest {
            thumbnail: thumb,
            grid_side: self.grid_side,
            mask: self.masked.clone(),
            embedding: self.state.conditioning_vector().map(<[f64]>::to_vec),
        };
        let heatmap = nav.navigate(&request)?;
        heatmap.validate(tw, th)?;
        let mut map = scores_from_heatmap(&heatmap, self.grid_side)?;
        map.masked.copy_from_slice(&self.masked);
        let probs = normalize_map(&map)?;
        let cell = sample_cell(&probs, rng);
        self.masked[cell.row * self.grid_side + cell.col] = true;
        self.selected.push(cell);
        Ok(cell)
    }

    /// Fold a description embedding into the conditioning state.
    pub fn absorb(&mut self, embedding: &[f32]) -> Result<(), NavError> {
        self.state = update_embedding(&self.state, embedding)?;
        Ok(())
    }
}

/// Patch-selection strategies evaluated against each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Iterative loop: one navigator call per pick, conditioned on gathered
    /// description embeddings, masking between picks.
    TextConditioned,
    /// One navigator call, then k draws without replacement from the fixed
    /// distribution.
    VisionOnly,
    /// Draws from pathologist dwell-time weights, without replacement.
    Imitated,
    /// Every cell whose underlying 10× patch passes the saturation filter.
    Exhaustive,
}

/// Draw `k` distinct cells by masking and renormalizing between draws.
pub fn draw_without_replacement<R: Rng>(
    map: &ImportanceMap,
    k: usize,
    rng: &mut R,
) -> Result<Vec<GridCell>, NavError> {
    let available = map.unmasked_count();
    if k > available {
        return Err(NavError::TooManyDraws {
            requested: k,
            available,
        });
    }
    let mut map = map.clone();
    let mut cells = Vec::with_capacity(k);
    for _ in 0..k {
        let probs = normalize_map(&map)?;
        let cell = sample_cell(&probs, rng);
        map = mask_cell(&map, cell)?;
        cells.push(cell);
    }
    Ok(cells)
}

/// Run one sampler strategy and return the selected cells.
///
/// `viewports` is only consulted by [`SamplerKind::Imitated`]; `k` is ignored
/// by [`SamplerKind::Exhaustive`], which returns every foreground cell in
/// row-major order.
#[allow(clippy::too_many_arguments)]
pub fn run_sampler<R: Rng>(
    kind: SamplerKind,
    slide: &SlideRaster,
    state: EmbeddingState,
    backends: &BackendSet,
    viewports: Option<&[ViewportRecord]>,
    k: usize,
    grid_side: usize,
    rng: &mut R,
) -> Result<Vec<GridCell>, NavError> {
    match kind {
        SamplerKind::TextConditioned => {
            let total = grid_side * grid_side;
            if k > total {
                return Err(NavError::TooManyDraws {
                    requested: k,
                    available: total,
                });
            }
            let mut session = NavigationSession {
                slide,
                grid_side,
                masked: vec![false; total],
                state,
                selected: Vec::new(),
            };
            for _ in 0..k {
                let cell = session.next_cell(backends.navigator.as_ref(), rng)?;
                let patch = ten_x_patch(slide, cell, grid_side)?;
                let description = backends.describer.describe(&patch)?;
                let embedding = backends.embedder.embed_text(&description)?;
                session.absorb(&embedding)?;
            }
            Ok(session.selected)
        }
        SamplerKind::VisionOnly => {
            let request = NavigateRequest {
                thumbnail: slide.thumbnail.clone(),
                grid_side,
                mask: vec![false; grid_side * grid_side],
                embedding: None,
            };
            let heatmap = backends.navigator.navigate(&request)?;
            heatmap.validate(slide.thumbnail.width, slide.thumbnail.height)?;
            let map = scores_from_heatmap(&heatmap, grid_side)?;
            draw_without_replacement(&map, k, rng)
        }
        SamplerKind::Imitated => {
            let records = viewports.ok_or(NavError::EmptyViewports)?;
            let map = imitated_weights(records, slide, grid_side)?;
            draw_without_replacement(&map, k, rng)
        }
        SamplerKind::Exhaustive => {
            let mut cells = Vec::new();
            for row in 0..grid_side {
                for col in 0..grid_side {
                    let cell = GridCell::new(row, col);
                    let patch = ten_x_patch(slide, cell, grid_side)?;
                    if slide::saturation(&patch) >= SATURATION_THRESHOLD {
                        cells.push(cell);
                    }
                }
            }
            Ok(cells)
        }
    }
}

/// Crop coordinates of a grid cell on the 10× level.
fn ten_x_patch(
    slide: &SlideRaster,
    cell: GridCell,
    grid_side: usize,
) -> Result<crate::slide::PatchPixels, NavError> {
    let level_index = slide.level_at_magnification(10.0)?;
    let level = slide.level(level_index)?;
    let (x, y, size) = cell_region_on_level(cell, grid_side, level.width, level.height);
    Ok(slide::extract_patch(
        slide,
        PatchCoord {
            level_index,
            x,
            y,
            size,
        },
    )?)
}

#[cfg(test)]
mod tests;

//! Iterative trajectory generation: navigate → crop at 10× → describe →
//! mask → fold the description embedding into the conditioning state, then
//! persist the resulting examination sequences as JSONL.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendSet;
use crate::navigator::{
    cell_region_on_level, GridCell, NavError, NavigationSession, DEFAULT_GRID_SIDE,
};
use crate::slide::{self, PatchCoord, SlideError, SlideRaster};

#[derive(Debug, Error)]
pub enum TrajectoryError {
    /// A backend failed mid-trajectory; the steps completed so far are
    /// preserved so batch jobs can resume or report partial work.
    #[error("trajectory aborted at iteration {iteration}: {source}")]
    Aborted {
        iteration: u32,
        completed: Vec<TrajectoryStep>,
        #[source]
        source: NavError,
    },
    #[error("trajectory length {length} must be in 1..={max}")]
    LengthOutOfRange { length: usize, max: usize },
    #[error("{path}: line {line}: {reason}")]
    MalformedLine {
        path: String,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Slide(#[from] SlideError),
    #[error(transparent)]
    Nav(#[from] NavError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One examined patch: where the navigator looked and what the describer saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    /// 1-based, strictly increasing within a trajectory.
    pub iteration: u32,
    pub cell: GridCell,
    /// Crop location on the 10× level.
    pub patch: PatchCoord,
    pub description: String,
    /// Present when a rephraser backend is configured; stored alongside the
    /// original, which remains the text that was embedded.
    pub rephrased: Option<String>,
}

/// One simulated examination pass over a slide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub slide_id: String,
    pub seed: u64,
    pub steps: Vec<TrajectoryStep>,
}

/// A bundle of trajectories for one slide, each with a distinct seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub slide_id: String,
    pub trajectories: Vec<Trajectory>,
}

/// Map a thumbnail grid cell onto the 10× level: proportional offsets with a
/// square crop of `floor(min(W, H) / grid_side)`, clamped in bounds.
pub fn cell_to_patch(
    cell: GridCell,
    slide: &SlideRaster,
    grid_side: usize,
) -> Result<PatchCoord, SlideError> {
    let level_index = slide.level_at_magnification(10.0)?;
    let level = slide.level(level_index)?;
    let (x, y, size) = cell_region_on_level(cell, grid_side, level.width, level.height);
    Ok(PatchCoord {
        level_index,
        x,
        y,
        size,
    })
}

/// Generate one trajectory of `length` steps with the default 16×16 grid.
pub fn generate_trajectory(
    slide: &SlideRaster,
    backends: &BackendSet,
    length: usize,
    seed: u64,
) -> Result<Trajectory, TrajectoryError> {
    generate_trajectory_with(slide, backends, DEFAULT_GRID_SIDE, length, seed)
}

pub fn generate_trajectory_with(
    slide: &SlideRaster,
    backends: &BackendSet,
    grid_side: usize,
    length: usize,
    seed: u64,
) -> Result<Trajectory, TrajectoryError> {
    let max = grid_side * grid_side;
    if length == 0 || length > max {
        return Err(TrajectoryError::LengthOutOfRange { length, max });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut session = NavigationSession::new(slide, grid_side, backends.embedding_dim)?;
    let mut steps: Vec<TrajectoryStep> = Vec::with_capacity(length);

    for iteration in 1..=length as u32 {
        let mut step = || -> Result<TrajectoryStep, NavError> {
            let cell = session.next_cell(backends.navigator.as_ref(), &mut rng)?;
            let patch = cell_to_patch(cell, slide, grid_side)?;
            let pixels = slide::extract_patch(slide, patch)?;
            let description = backends.describer.describe(&pixels)?;
            let rephrased = match &backends.rephraser {
                Some(r) => Some(r.rephrase(&description)?),
                None => None,
            };
            let embedding = backends.embedder.embed_text(&description)?;
            session.absorb(&embedding)?;
            Ok(TrajectoryStep {
                iteration,
                cell,
                patch,
                description,
                rephrased,
            })
        };
        match step() {
            Ok(step) => steps.push(step),
            Err(source) => {
                return Err(TrajectoryError::Aborted {
                    iteration,
                    completed: steps,
                    source,
                })
            }
        }
    }

    Ok(Trajectory {
        slide_id: slide.slide_id.clone(),
        seed,
        steps,
    })
}

/// Generate `n` independent trajectories; trajectory `k` (0-based) uses seed
/// `base_seed ^ k`, so a set is fully determined by its base seed.
pub fn generate_set(
    slide: &SlideRaster,
    n: usize,
    length: usize,
    backends: &BackendSet,
    base_seed: u64,
) -> Result<TrajectorySet, TrajectoryError> {
    generate_set_with(slide, DEFAULT_GRID_SIDE, n, length, backends, base_seed)
}

pub fn generate_set_with(
    slide: &SlideRaster,
    grid_side: usize,
    n: usize,
    length: usize,
    backends: &BackendSet,
    base_seed: u64,
) -> Result<TrajectorySet, TrajectoryError> {
    let trajectories = (0..n)
        .map(|k| generate_trajectory_with(slide, backends, grid_side, length, base_seed ^ k as u64))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrajectorySet {
        slide_id: slide.slide_id.clone(),
        trajectories,
    })
}

#[derive(Serialize, Deserialize)]
struct StepLine {
    slide_id: String,
    traj_seed: u64,
    iteration: u32,
    cell: GridCell,
    patch: PatchCoord,
    description: String,
    rephrased: Option<String>,
}

/// Write a trajectory set as JSONL, one step per line.
pub fn write_trajectories(set: &TrajectorySet, path: &Path) -> Result<(), TrajectoryError> {
    let mut out = BufWriter::new(File::create(path)?);
    for traj in &set.trajectories {
        for step in &traj.steps {
            let line = StepLine {
                slide_id: set.slide_id.clone(),
                traj_seed: traj.seed,
                iteration: step.iteration,
                cell: step.cell,
                patch: step.patch,
                description: step.description.clone(),
                rephrased: step.rephrased.clone(),
            };
            serde_json::to_writer(&mut out, &line).map_err(|e| std::io::Error::other(e))?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read a JSONL trajectory file written by [`write_trajectories`].
pub fn read_trajectories(path: &Path) -> Result<TrajectorySet, TrajectoryError> {
    let file = File::open(path)?;
    let malformed = |line: usize, reason: String| TrajectoryError::MalformedLine {
        path: path.display().to_string(),
        line,
        reason,
    };

    let mut set = TrajectorySet {
        slide_id: String::new(),
        trajectories: Vec::new(),
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: StepLine =
            serde_json::from_str(&line).map_err(|e| malformed(line_no, e.to_string()))?;
        if set.slide_id.is_empty() {
            set.slide_id = parsed.slide_id.clone();
        } else if parsed.slide_id != set.slide_id {
            return Err(malformed(
                line_no,
                format!("slide_id {:?} differs from {:?}", parsed.slide_id, set.slide_id),
            ));
        }
        let step = TrajectoryStep {
            iteration: parsed.iteration,
            cell: parsed.cell,
            patch: parsed.patch,
            description: parsed.description,
            rephrased: parsed.rephrased,
        };
        let start_new = parsed.iteration == 1;
        if start_new {
            set.trajectories.push(Trajectory {
                slide_id: parsed.slide_id,
                seed: parsed.traj_seed,
                steps: vec![step],
            });
        } else {
            let current = set.trajectories.last_mut().ok_or_else(|| {
                malformed(line_no, "first step of a trajectory must have iteration 1".into())
            })?;
            let expected = current.steps.len() as u32 + 1;
            if parsed.iteration != expected || parsed.traj_seed != current.seed {
                return Err(malformed(
                    line_no,
                    format!(
                        "expected iteration {expected} of trajectory seed {}, got iteration {} seed {}",
                        current.seed, parsed.iteration, parsed.traj_seed
                    ),
                ));
            }
            current.steps.push(step);
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests;

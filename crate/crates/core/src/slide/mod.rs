//! Slide rasters: loading, synthesis, tiling, and background filtering.
//!
//! A slide on disk is a directory with a `meta.json` describing the pyramid
//! levels plus one binary PPM (P6) per level and a 512×512 PPM thumbnail:
//!
//! ```text
//! slide_0001/
//!   meta.json        {slide_id, levels: [{width, height, magnification, file}], thumbnail}
//!   level_00.ppm     highest resolution first
//!   thumb.ppm        512×512
//! ```
//!
//! Rasters are plain RGB8 row-major buffers and are immutable once loaded, so
//! they can be shared read-only across workers.

mod pnm;
mod synth;

pub use pnm::{read_ppm, write_pgm, write_ppm};
pub use synth::{synth_slide, LesionRect, SynthParams};

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Background patches with mean HSV saturation below this are discarded.
pub const SATURATION_THRESHOLD: f64 = 15.0;
/// Side length of the slide thumbnail level.
pub const THUMBNAIL_SIZE: u32 = 512;
/// Every slide keeps at least this many patches after filtering.
pub const MIN_TRIAGE_PATCHES: usize = 150;
/// Random-position draws allowed when topping up foreground patches.
pub const TOP_UP_BUDGET: usize = 10_000;

#[derive(Debug, Error)]
pub enum SlideError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed slide metadata at {path}: {source}")]
    MalformedMeta {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("level count mismatch: metadata declares {declared} levels, found {found} payloads")]
    LevelCountMismatch { declared: usize, found: usize },
    #[error("pixel buffer length mismatch: expected {expected} bytes, got {actual}")]
    PixelBufferMismatch { expected: usize, actual: usize },
    #[error("malformed PNM file {path}: {reason}")]
    MalformedPnm { path: PathBuf, reason: String },
    #[error("level {level}: payload is {actual_w}x{actual_h} but metadata declares {meta_w}x{meta_h}")]
    LevelDimensionMismatch {
        level: usize,
        meta_w: u32,
        meta_h: u32,
        actual_w: u32,
        actual_h: u32,
    },
    #[error("level {level} breaks the highest-to-lowest resolution ordering")]
    LevelOrder { level: usize },
    #[error("level {level} does not match the base level aspect ratio")]
    AspectRatio { level: usize },
    #[error("thumbnail is {width}x{height}, expected {expected}x{expected}")]
    BadThumbnail { width: u32, height: u32, expected: u32 },
    #[error("patch size {patch_size} exceeds level dimensions {width}x{height}")]
    PatchTooLarge {
        patch_size: u32,
        width: u32,
        height: u32,
    },
    #[error("patch at ({x},{y}) size {size} out of bounds for level {level} ({width}x{height})")]
    PatchOutOfBounds {
        level: usize,
        x: u32,
        y: u32,
        size: u32,
        width: u32,
        height: u32,
    },
    #[error("no level with index {0}")]
    NoSuchLevel(usize),
    #[error("no level at {0}x magnification")]
    NoLevelAtMagnification(f64),
    #[error("lesion rectangle ({x},{y}) {width}x{height} out of slide bounds")]
    RectOutOfBounds {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    #[error("slide dimensions must be at least 64x64, got {width}x{height}")]
    SlideTooSmall { width: u32, height: u32 },
    #[error("insufficient foreground: found {found} passing patches of {needed} after {budget} draws")]
    InsufficientForeground {
        needed: usize,
        found: usize,
        budget: usize,
    },
}

/// One pyramid level: RGB8, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelRaster {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl LevelRaster {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, SlideError> {
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(SlideError::PixelBufferMismatch {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// RGB triple at (x, y). Caller guarantees bounds.
    #[inline]
    pub fn rgb(&self, x: u32, y: u32) -> (u8, u8, u8) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        (self.pixels[i], self.pixels[i + 1], self.pixels[i + 2])
    }
}

/// Multi-level RGB raster standing in for a WSI pyramid.
#[derive(Debug, Clone, PartialEq)]
pub struct SlideRaster {
    pub slide_id: String,
    /// Ordered from highest to lowest resolution.
    pub levels: Vec<LevelRaster>,
    /// Optical magnification of each level (e.g. 10.0 means 10×).
    pub magnifications: Vec<f64>,
    /// 512×512 overview used by the navigation loop.
    pub thumbnail: LevelRaster,
}

impl SlideRaster {
    pub fn level(&self, index: usize) -> Result<&LevelRaster, SlideError> {
        self.levels.get(index).ok_or(SlideError::NoSuchLevel(index))
    }

    /// Index of the level at the given magnification (exact within 1e-6).
    pub fn level_at_magnification(&self, magnification: f64) -> Result<usize, SlideError> {
        self.magnifications
            .iter()
            .position(|m| (m - magnification).abs() < 1e-6)
            .ok_or(SlideError::NoLevelAtMagnification(magnification))
    }

    fn validate(&self) -> Result<(), SlideError> {
        let base = &self.levels[0];
        for (i, level) in self.levels.iter().enumerate().skip(1) {
            if level.width > self.levels[i - 1].width || level.height > self.levels[i - 1].height {
                return Err(SlideError::LevelOrder { level: i });
            }
            // Same aspect ratio within one pixel of rounding.
            let expect_h = (level.width as f64 * base.height as f64 / base.width as f64).round();
            if (expect_h - level.height as f64).abs() > 1.0 {
                return Err(SlideError::AspectRatio { level: i });
            }
        }
        if self.thumbnail.width != THUMBNAIL_SIZE || self.thumbnail.height != THUMBNAIL_SIZE {
            return Err(SlideError::BadThumbnail {
                width: self.thumbnail.width,
                height: self.thumbnail.height,
                expected: THUMBNAIL_SIZE,
            });
        }
        Ok(())
    }
}

/// Square patch location at a given pyramid level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchCoord {
    pub level_index: usize,
    pub x: u32,
    pub y: u32,
    pub size: u32,
}

/// Pixels cropped for one patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchPixels {
    pub coord: PatchCoord,
    pub pixels: Vec<u8>,
}

#[derive(Serialize, Deserialize)]
struct LevelMeta {
    width: u32,
    height: u32,
    magnification: f64,
    file: String,
}

#[derive(Serialize, Deserialize)]
struct SlideMeta {
    slide_id: String,
    levels: Vec<LevelMeta>,
    thumbnail: String,
}

/// Load a slide directory (see module docs for the format).
pub fn load_slide(dir: &Path) -> Result<SlideRaster, SlideError> {
    let meta_path = dir.join("meta.json");
    let meta_text = fs::read_to_string(&meta_path)?;
    let meta: SlideMeta =
        serde_json::from_str(&meta_text).map_err(|source| SlideError::MalformedMeta {
            path: meta_path,
            source,
        })?;

    let present = meta
        .levels
        .iter()
        .filter(|l| dir.join(&l.file).is_file())
        .count();
    if present != meta.levels.len() {
        return Err(SlideError::LevelCountMismatch {
            declared: meta.levels.len(),
            found: present,
        });
    }

    let mut levels = Vec::with_capacity(meta.levels.len());
    let mut magnifications = Vec::with_capacity(meta.levels.len());
    for (i, lm) in meta.levels.iter().enumerate() {
        let (w, h, pixels) = pnm::read_ppm(&dir.join(&lm.file))?;
        if w != lm.width || h != lm.height {
            return Err(SlideError::LevelDimensionMismatch {
                level: i,
                meta_w: lm.width,
                meta_h: lm.height,
                actual_w: w,
                actual_h: h,
            });
        }
        levels.push(LevelRaster::new(w, h, pixels)?);
        magnifications.push(lm.magnification);
    }

    let (tw, th, tpixels) = pnm::read_ppm(&dir.join(&meta.thumbnail))?;
    let slide = SlideRaster {
        slide_id: meta.slide_id,
        levels,
        magnifications,
        thumbnail: LevelRaster::new(tw, th, tpixels)?,
    };
    slide.validate()?;
    Ok(slide)
}

/// Write a slide directory; inverse of [`load_slide`].
pub fn write_slide(slide: &SlideRaster, dir: &Path) -> Result<(), SlideError> {
    slide.validate()?;
    fs::create_dir_all(dir)?;
    let mut levels = Vec::with_capacity(slide.levels.len());
    for (i, (level, mag)) in slide
        .levels
        .iter()
        .zip(&slide.magnifications)
        .enumerate()
    {
        let file = format!("level_{i:02}.ppm");
        pnm::write_ppm(&dir.join(&file), level.width, level.height, &level.pixels)?;
        levels.push(LevelMeta {
            width: level.width,
            height: level.height,
            magnification: *mag,
            file,
        });
    }
    pnm::write_ppm(
        &dir.join("thumb.ppm"),
        slide.thumbnail.width,
        slide.thumbnail.height,
        &slide.thumbnail.pixels,
    )?;
    let meta = SlideMeta {
        slide_id: slide.slide_id.clone(),
        levels,
        thumbnail: "thumb.ppm".to_string(),
    };
    fs::write(
        dir.join("meta.json"),
        serde_json::to_string_pretty(&meta).expect("meta serializes"),
    )?;
    Ok(())
}

/// Non-overlapping row-major patch grid over a level; partial edge patches
/// are dropped so every patch keeps the same shape.
pub fn tile_slide(
    slide: &SlideRaster,
    level_index: usize,
    patch_size: u32,
) -> Result<Vec<PatchCoord>, SlideError> {
    let level = slide.level(level_index)?;
    if patch_size == 0 || patch_size > level.width || patch_size > level.height {
        return Err(SlideError::PatchTooLarge {
            patch_size,
            width: level.width,
            height: level.height,
        });
    }
    let cols = level.width / patch_size;
    let rows = level.height / patch_size;
    let mut coords = Vec::with_capacity((cols * rows) as usize);
    for row in 0..rows {
        for col in 0..cols {
            coords.push(PatchCoord {
                level_index,
                x: col * patch_size,
                y: row * patch_size,
                size: patch_size,
            });
        }
    }
    Ok(coords)
}

/// Mean HSV saturation of a patch on the 0–255 scale.
///
/// Per pixel, S = 0 when max(R,G,B) = 0, else 255·(max−min)/max.
pub fn saturation(patch: &PatchPixels) -> f64 {
    mean_saturation_of_bytes(&patch.pixels)
}

fn mean_saturation_of_bytes(pixels: &[u8]) -> f64 {
    debug_assert_eq!(pixels.len() % 3, 0);
    let mut sum = 0.0f64;
    for px in pixels.chunks_exact(3) {
        sum += pixel_saturation(px[0], px[1], px[2]);
    }
    sum / (pixels.len() / 3) as f64
}

#[inline]
fn pixel_saturation(r: u8, g: u8, b: u8) -> f64 {
    let max = r.max(g).max(b);
    if max == 0 {
        return 0.0;
    }
    let min = r.min(g).min(b);
    255.0 * f64::from(max - min) / f64::from(max)
}

/// Mean saturation of a level region without copying pixels out.
pub(crate) fn region_saturation(level: &LevelRaster, x: u32, y: u32, size: u32) -> f64 {
    let mut sum = 0.0f64;
    let w = level.width as usize;
    for row in y..y + size {
        let start = (row as usize * w + x as usize) * 3;
        let line = &level.pixels[start..start + size as usize * 3];
        for px in line.chunks_exact(3) {
            sum += pixel_saturation(px[0], px[1], px[2]);
        }
    }
    sum / (size as u64 * size as u64) as f64
}

/// Keep patches whose mean saturation is at least `threshold`; order preserved.
pub fn filter_background(
    slide: &SlideRaster,
    coords: &[PatchCoord],
    threshold: f64,
) -> Vec<PatchCoord> {
    coords
        .iter()
        .filter(|c| {
            let level = &slide.levels[c.level_index];
            region_saturation(level, c.x, c.y, c.size) >= threshold
        })
        .copied()
        .collect()
}

/// Top up `kept` with uniformly random (possibly overlapping) patch positions
/// at the given level until at least `minimum` pass the saturation filter.
///
/// `kept` is never shrunk or reordered. Fails with `InsufficientForeground`
/// once [`TOP_UP_BUDGET`] random draws have been spent.
pub fn ensure_min_patches<R: Rng>(
    slide: &SlideRaster,
    level_index: usize,
    patch_size: u32,
    kept: Vec<PatchCoord>,
    minimum: usize,
    threshold: f64,
    rng: &mut R,
) -> Result<Vec<PatchCoord>, SlideError> {
    if kept.len() >= minimum {
        return Ok(kept);
    }
    let level = slide.level(level_index)?;
    if patch_size == 0 || patch_size > level.width || patch_size > level.height {
        return Err(SlideError::PatchTooLarge {
            patch_size,
            width: level.width,
            height: level.height,
        });
    }
    let mut result = kept;
    let max_x = level.width - patch_size;
    let max_y = level.height - patch_size;
    for _ in 0..TOP_UP_BUDGET {
        if result.len() >= minimum {
            return Ok(result);
        }
        let x = rng.gen_range(0..=max_x);
        let y = rng.gen_range(0..=max_y);
        if region_saturation(level, x, y, patch_size) >= threshold {
            result.push(PatchCoord {
                level_index,
                x,
                y,
                size: patch_size,
            });
        }
    }
    if result.len() >= minimum {
        return Ok(result);
    }
    Err(SlideError::InsufficientForeground {
        needed: minimum,
        found: result.len(),
        budget: TOP_UP_BUDGET,
    })
}

/// Row-major spatial order: sort by (y, x) ascending.
pub fn sort_spatial(mut coords: Vec<PatchCoord>) -> Vec<PatchCoord> {
    coords.sort_by_key(|c| (c.y, c.x));
    coords
}

/// Copy the pixels of one patch out of a slide level.
pub fn extract_patch(slide: &SlideRaster, coord: PatchCoord) -> Result<PatchPixels, SlideError> {
    let level = slide.level(coord.level_index)?;
    let in_bounds = coord.size >= 1
        && coord.x.checked_add(coord.size).is_some_and(|r| r <= level.width)
        && coord.y.checked_add(coord.size).is_some_and(|b| b <= level.height);
    if !in_bounds {
        return Err(SlideError::PatchOutOfBounds {
            level: coord.level_index,
            x: coord.x,
            y: coord.y,
            size: coord.size,
            width: level.width,
            height: level.height,
        });
    }
    let size = coord.size as usize;
    let mut pixels = Vec::with_capacity(size * size * 3);
    let w = level.width as usize;
    for row in coord.y..coord.y + coord.size {
        let start = (row as usize * w + coord.x as usize) * 3;
        pixels.extend_from_slice(&level.pixels[start..start + size * 3]);
    }
    Ok(PatchPixels { coord, pixels })
}

#[cfg(test)]
mod tests;

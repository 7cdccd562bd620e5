//! Deterministic synthetic slides: pale low-saturation background with
//! stain-like lesion rectangles whose hue encodes the diagnosis class.
//!
//! Desk-scale stand-ins for scanner WSIs; every pixel is a pure function of
//! the seed, so slides are byte-reproducible across platforms.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diagnosis::DiagnosisClass;

use super::{LevelRaster, SlideError, SlideRaster, THUMBNAIL_SIZE};

/// Mean stain saturation of benign (class I) lesion tissue.
pub const BENIGN_LESION_SATURATION: f64 = 35.0;
/// Mean stain saturation of risky (class II–IV) lesion tissue.
pub const RISKY_LESION_SATURATION: f64 = 220.0;

/// Hue (degrees) encoding each diagnosis class in synthetic stains.
pub fn lesion_hue(label: DiagnosisClass) -> f64 {
    match label {
        DiagnosisClass::I => 30.0,
        DiagnosisClass::II => 120.0,
        DiagnosisClass::III => 210.0,
        DiagnosisClass::IV => 300.0,
    }
}

/// Mean stain saturation used for a class's lesion texture.
pub fn lesion_saturation(label: DiagnosisClass) -> f64 {
    match label {
        DiagnosisClass::I => BENIGN_LESION_SATURATION,
        _ => RISKY_LESION_SATURATION,
    }
}

/// Axis-aligned lesion rectangle at full resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LesionRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
    pub label: DiagnosisClass,
}

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub width: u32,
    pub height: u32,
    pub lesions: Vec<LesionRect>,
    pub seed: u64,
}

/// Generate a synthetic slide: one full-resolution level at 10× plus the
/// 512×512 thumbnail. Deterministic for a given set of parameters.
pub fn synth_slide(params: &SynthParams) -> Result<SlideRaster, SlideError> {
    let SynthParams {
        width,
        height,
        ref lesions,
        seed,
    } = *params;
    if width < 64 || height < 64 {
        return Err(SlideError::SlideTooSmall { width, height });
    }
    for rect in lesions {
        let fits = rect.width >= 1
            && rect.height >= 1
            && rect.x.checked_add(rect.width).is_some_and(|r| r <= width)
            && rect.y.checked_add(rect.height).is_some_and(|b| b <= height);
        if !fits {
            return Err(SlideError::RectOutOfBounds {
                x: rect.x,
                y: rect.y,
                width: rect.width,
                height: rect.height,
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = vec![0u8; width as usize * height as usize * 3];

    // Pale background: shared luminance jitter plus a one-count channel
    // wobble keeps per-pixel saturation well under the filter threshold.
    const BASE: [i32; 3] = [238, 235, 233];
    for px in pixels.chunks_exact_mut(3) {
        let luma: i32 = rng.gen_range(-6..=6);
        for (c, base) in px.iter_mut().zip(BASE) {
            let wobble: i32 = rng.gen_range(-1..=1);
            *c = (base + luma + wobble).clamp(0, 255) as u8;
        }
    }

    for rect in lesions {
        let hue = lesion_hue(rect.label);
        let sat = lesion_saturation(rect.label);
        for y in rect.y..rect.y + rect.height {
            let row = y as usize * width as usize;
            for x in rect.x..rect.x + rect.width {
                let h = hue + rng.gen_range(-8.0..8.0);
                let s = (sat + rng.gen_range(-10.0..10.0)).clamp(0.0, 255.0);
                let v = (205.0 + rng.gen_range(-15.0..15.0)).clamp(0.0, 255.0);
                let (r, g, b) = hsv_to_rgb(h.rem_euclid(360.0), s / 255.0, v / 255.0);
                let i = (row + x as usize) * 3;
                pixels[i] = r;
                pixels[i + 1] = g;
                pixels[i + 2] = b;
            }
        }
    }

    let full = LevelRaster::new(width, height, pixels)?;
    let thumbnail = downsample(&full, THUMBNAIL_SIZE, THUMBNAIL_SIZE);
    Ok(SlideRaster {
        slide_id: format!("synth-{seed:016x}"),
        levels: vec![full],
        magnifications: vec![10.0],
        thumbnail,
    })
}

/// Box-average downsample (nearest-neighbor when upscaling a tiny source).
fn downsample(src: &LevelRaster, out_w: u32, out_h: u32) -> LevelRaster {
    let mut pixels = Vec::with_capacity(out_w as usize * out_h as usize * 3);
    for oy in 0..out_h as u64 {
        let y0 = (oy * src.height as u64 / out_h as u64) as u32;
        let y1 = (((oy + 1) * src.height as u64 / out_h as u64) as u32).clamp(y0 + 1, src.height);
        for ox in 0..out_w as u64 {
            let x0 = (ox * src.width as u64 / out_w as u64) as u32;
            let x1 = (((ox + 1) * src.width as u64 / out_w as u64) as u32).clamp(x0 + 1, src.width);
            let mut sums = [0u64; 3];
            for y in y0..y1 {
                let row = y as usize * src.width as usize;
                for x in x0..x1 {
                    let i = (row + x as usize) * 3;
                    sums[0] += u64::from(src.pixels[i]);
                    sums[1] += u64::from(src.pixels[i + 1]);
                    sums[2] += u64::from(src.pixels[i + 2]);
                }
            }
            let count = u64::from(x1 - x0) * u64::from(y1 - y0);
            for sum in sums {
                pixels.push(((sum + count / 2) / count) as u8);
            }
        }
    }
    LevelRaster {
        width: out_w,
        height: out_h,
        pixels,
    }
}

/// h in [0, 360), s and v in [0, 1].
fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (u8, u8, u8) {
    let c = v * s;
    let x = c * (1.0 - ((h / 60.0).rem_euclid(2.0) - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match h {
        h if h < 60.0 => (c, x, 0.0),
        h if h < 120.0 => (x, c, 0.0),
        h if h < 180.0 => (0.0, c, x),
        h if h < 240.0 => (0.0, x, c),
        h if h < 300.0 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let scale = |f: f64| ((f + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    (scale(r), scale(g), scale(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hsv_primaries() {
        assert_eq!(hsv_to_rgb(0.0, 1.0, 1.0), (255, 0, 0));
        assert_eq!(hsv_to_rgb(120.0, 1.0, 1.0), (0, 255, 0));
        assert_eq!(hsv_to_rgb(240.0, 1.0, 1.0), (0, 0, 255));
        assert_eq!(hsv_to_rgb(0.0, 0.0, 0.5), (128, 128, 128));
    }

    #[test]
    fn hsv_saturation_round_trips_through_pixel_saturation() {
        // saturation() recovers S because max = v and min = v(1 - s).
        for s in [0.1, 0.3, 0.6, 0.9] {
            let (r, g, b) = hsv_to_rgb(210.0, s, 0.8);
            let sat = super::super::pixel_saturation(r, g, b);
            assert!((sat - s * 255.0).abs() < 2.0, "s={s} got {sat}");
        }
    }
}

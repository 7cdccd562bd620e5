//! Deterministic in-process mocks for every backend role.
//!
//! Each mock is a pure function of its input and configured seed, so repeated
//! calls agree byte-for-byte and whole pipelines stay reproducible. They are
//! signal-aware against the synthetic slide palette: the navigator reads
//! stain density, the describer maps hue bands to diagnosis keywords, and the
//! triage mock thresholds a saturation proxy carried in feature row 0.

use crate::diagnosis::DiagnosisClass;
use crate::navigator::Heatmap;
use crate::slide::{self, PatchPixels};
use crate::triage::PaddedGrid;

use super::{
    BackendError, DescriberBackend, DiagnoserBackend, EmbedderBackend, NavigateRequest,
    NavigatorBackend, RephraserBackend, TriageBackend,
};

/// Saturation below this reads as plain background tissue.
const UNREMARKABLE_MAX_SAT: f64 = slide::SATURATION_THRESHOLD;
/// Saturation below this (but above background) reads as benign nevus tissue.
const BENIGN_MAX_SAT: f64 = 80.0;

/// Ramp mapping patch saturation to a high-stain risk indicator in [0, 1].
/// Benign stain (~35) maps to exactly 0; risky stain (~220) saturates to 1.
fn stain_indicator(saturation: f64) -> f64 {
    ((saturation - 60.0) / 60.0).clamp(0.0, 1.0)
}

fn mean_rgb(pixels: &[u8]) -> (f64, f64, f64) {
    let mut sums = [0u64; 3];
    for px in pixels.chunks_exact(3) {
        sums[0] += u64::from(px[0]);
        sums[1] += u64::from(px[1]);
        sums[2] += u64::from(px[2]);
    }
    let n = (pixels.len() / 3) as f64;
    (
        sums[0] as f64 / n,
        sums[1] as f64 / n,
        sums[2] as f64 / n,
    )
}

/// Hue in degrees [0, 360) of an RGB triple; 0 for grays.
fn hue_of(r: f64, g: f64, b: f64) -> f64 {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    if delta <= f64::EPSILON {
        return 0.0;
    }
    let h = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    (h * 60.0).rem_euclid(360.0)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// splitmix64 stream over an initial state.
struct Stream(u64);

impl Stream {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [-1, 1).
    fn next_signed(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    }
}

/// Heatmap mock: per-pixel stain density, or a constant field for the
/// uniform-selection ablation. Accepts (and ignores) the conditioning vector.
#[derive(Debug, Clone, Copy)]
pub enum MockNavigator {
    StainDensity,
    Uniform,
}

impl MockNavigator {
    pub fn stain_density() -> Self {
        Self::StainDensity
    }

    pub fn uniform() -> Self {
        Self::Uniform
    }
}

impl NavigatorBackend for MockNavigator {
    fn navigate(&self, request: &NavigateRequest) -> Result<Heatmap, BackendError> {
        let thumb = &request.thumbnail;
        let values = match self {
            Self::StainDensity => thumb
                .pixels
                .chunks_exact(3)
                .map(|px| {
                    let max = px[0].max(px[1]).max(px[2]);
                    if max == 0 {
                        0.0
                    } else {
                        let min = px[0].min(px[1]).min(px[2]);
                        f32::from(max - min) / f32::from(max)
                    }
                })
                .collect(),
            Self::Uniform => vec![1.0f32; thumb.pixels.len() / 3],
        };
        Ok(Heatmap {
            width: thumb.width,
            height: thumb.height,
            values,
        })
    }
}

/// Description mock keyed on the patch's quantized mean color: saturation
/// band separates background / benign / risky tissue, hue band picks the
/// diagnosis keyword for risky stains.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockDescriber;

impl MockDescriber {
    pub fn new() -> Self {
        Self
    }
}

impl DescriberBackend for MockDescriber {
    fn describe(&self, patch: &PatchPixels) -> Result<String, BackendError> {
        if patch.pixels.is_empty() {
            return Err(BackendError::InvalidInput {
                reason: "empty patch".to_string(),
            });
        }
        let sat = slide::saturation(patch);
        let (r, g, b) = mean_rgb(&patch.pixels);
        let hue = hue_of(r, g, b);
        let body = if sat < UNREMARKABLE_MAX_SAT {
            "unremarkable epidermis and dermis with no significant atypia"
        } else if sat < BENIGN_MAX_SAT {
            "scattered melanocytic nests with mild cytologic atypia, consistent with a dysplastic nevus"
        } else if (75.0..165.0).contains(&hue) {
            "confluent junctional melanocytic proliferation with severe atypia, melanoma in situ"
        } else if (165.0..255.0).contains(&hue) {
            "atypical melanocytes invading the papillary dermis, invasive melanoma with thin Breslow depth"
        } else if (255.0..345.0).contains(&hue) {
            "advanced invasive melanoma with nodular dermal growth and brisk mitotic activity"
        } else {
            "scattered melanocytic nests with mild cytologic atypia, consistent with a dysplastic nevus"
        };
        let grade = (sat / 32.0).floor().min(8.0) as u8;
        let tone = format!(
            "{}-{}-{}",
            (r / 32.0) as u8,
            (g / 32.0) as u8,
            (b / 32.0) as u8
        );
        Ok(format!("{body}; stain grade {grade}/8, tone {tone}"))
    }
}

/// Seeded feature-hash embedder.
///
/// Text embeddings sum hashed unit contributions per whitespace token and are
/// L2-normalized. Image embeddings carry engineered lead components — the
/// high-stain indicator in row 0 (the saturation proxy the triage mock
/// thresholds) and mean RGB next — followed by hashed filler, roughly
/// unit-norm overall.
#[derive(Debug, Clone, Copy)]
pub struct MockEmbedder {
    seed: u64,
    dim: usize,
}

impl MockEmbedder {
    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim >= 1, "embedding dimension must be at least 1");
        Self { seed, dim }
    }
}

impl EmbedderBackend for MockEmbedder {
    fn embed_text(&self, text: &str) -> Result<Vec<f32>, BackendError> {
        if text.trim().is_empty() {
            return Err(BackendError::InvalidInput {
                reason: "empty text".to_string(),
            });
        }
        let mut acc = vec![0.0f64; self.dim];
        for token in text.split_whitespace() {
            let mut stream = Stream(self.seed ^ fnv1a64(token.to_lowercase().as_bytes()));
            for slot in acc.iter_mut() {
                *slot += stream.next_signed();
            }
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in acc.iter_mut() {
                *v /= norm;
            }
        }
        Ok(acc.into_iter().map(|v| v as f32).collect())
    }

    fn embed_image(&self, patch: &PatchPixels) -> Result<Vec<f32>, BackendError> {
        if patch.pixels.is_empty() {
            return Err(BackendError::InvalidInput {
                reason: "empty patch".to_string(),
            });
        }
        let sat = slide::saturation(patch);
        let (r, g, b) = mean_rgb(&patch.pixels);
        let mut out = vec![0.0f32; self.dim];
        let lead = [stain_indicator(sat), r / 255.0, g / 255.0, b / 255.0];
        for (slot, value) in out.iter_mut().zip(lead) {
            *slot = value as f32;
        }
        if self.dim > lead.len() {
            let key = [
                (r as u64).min(255),
                (g as u64).min(255),
                (b as u64).min(255),
                sat as u64,
            ];
            let mut bytes = Vec::with_capacity(32);
            for k in key {
                bytes.extend_from_slice(&k.to_le_bytes());
            }
            let mut stream = Stream(self.seed ^ fnv1a64(&bytes));
            let scale = 1.0 / (self.dim as f64).sqrt();
            for slot in out.iter_mut().skip(lead.len()) {
                *slot = (stream.next_signed() * scale) as f32;
            }
        }
        Ok(out)
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Triage mock: logistic of the gap between the mean row-0 saturation proxy
/// and a decision threshold. A fixed-score variant serves protocol tests.
#[derive(Debug, Clone, Copy)]
pub enum MockTriage {
    SaturationLogistic { threshold: f64, gain: f64 },
    Fixed(f64),
}

impl MockTriage {
    pub fn saturation_logistic() -> Self {
        Self::SaturationLogistic {
            threshold: 0.03,
            gain: 60.0,
        }
    }

    pub fn fixed(score: f64) -> Self {
        Self::Fixed(score)
    }
}

impl TriageBackend for MockTriage {
    fn score(&self, grid: &PaddedGrid) -> Result<f64, BackendError> {
        match *self {
            Self::Fixed(score) => Ok(score),
            Self::SaturationLogistic { threshold, gain } => {
                let mean = grid
                    .rows
                    .iter()
                    .map(|row| row.first().copied().unwrap_or(0.0) as f64)
                    .sum::<f64>()
                    / grid.rows.len().max(1) as f64;
                Ok(1.0 / (1.0 + (-gain * (mean - threshold)).exp()))
            }
        }
    }
}

/// Keyword-priority diagnoser over the prompt's description lines.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockDiagnoser;

impl MockDiagnoser {
    pub fn new() -> Self {
        Self
    }
}

impl DiagnoserBackend for MockDiagnoser {
    fn diagnose(&self, prompt: &str) -> Result<String, BackendError> {
        // Skip the option lines themselves; they contain every keyword.
        let text = prompt
            .lines()
            .filter(|line| !line.contains("diagnosis: ("))
            .collect::<Vec<_>>()
            .join("\n")
            .to_lowercase();
        let label = if text.contains("advanced") {
            DiagnosisClass::IV
        } else if text.contains("invasive") {
            DiagnosisClass::III
        } else if text.contains("in situ") || text.contains("severe") {
            DiagnosisClass::II
        } else {
            DiagnosisClass::II
        };
        Ok(label.option_text().to_string())
    }
}

/// Phrase-table rephraser; longest phrases substitute first.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockRephraser;

impl MockRephraser {
    pub fn new() -> Self {
        Self
    }
}

const REPHRASE_TABLE: [(&str, &str); 6] = [
    ("unremarkable epidermis", "epidermis without notable change"),
    ("unremarkable", "without notable features"),
    ("scattered", "dispersed"),
    ("confluent", "coalescing"),
    ("mild", "subtle"),
    ("brisk", "lively"),
];

impl RephraserBackend for MockRephraser {
    fn rephrase(&self, text: &str) -> Result<String, BackendError> {
        if text.trim().is_empty() {
            return Err(BackendError::InvalidInput {
                reason: "empty text".to_string(),
            });
        }
        let mut out = text.to_string();
        for (from, to) in REPHRASE_TABLE {
            out = out.replace(from, to);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slide::PatchCoord;

    fn patch_of(rgb: (u8, u8, u8), size: u32) -> PatchPixels {
        let mut pixels = Vec::with_capacity((size * size * 3) as usize);
        for _ in 0..size * size {
            pixels.extend_from_slice(&[rgb.0, rgb.1, rgb.2]);
        }
        PatchPixels {
            coord: PatchCoord {
                level_index: 0,
                x: 0,
                y: 0,
                size,
            },
            pixels,
        }
    }

    #[test]
    fn navigator_all_white_is_all_zero() {
        let request = NavigateRequest {
            thumbnail: crate::slide::LevelRaster::new(4, 4, vec![255u8; 48]).unwrap(),
            grid_side: 2,
            mask: vec![false; 4],
            embedding: None,
        };
        let heat = MockNavigator::stain_density().navigate(&request).unwrap();
        assert!(heat.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn describer_bands() {
        let gray = MockDescriber::new().describe(&patch_of((128, 128, 128), 4)).unwrap();
        assert!(gray.contains("unremarkable"), "{gray}");

        // Hue 210 (class III palette), high saturation.
        let lesion = MockDescriber::new().describe(&patch_of((51, 128, 204), 4)).unwrap();
        assert!(lesion.contains("invasive"), "{lesion}");
        assert!(!lesion.contains("advanced"), "{lesion}");

        let twice = MockDescriber::new().describe(&patch_of((51, 128, 204), 4)).unwrap();
        assert_eq!(lesion, twice);
    }

    #[test]
    fn embedder_is_deterministic_and_sized() {
        let e = MockEmbedder::new(7, 8);
        let a = e.embed_text("epidermis unremarkable").unwrap();
        let b = e.embed_text("epidermis unremarkable").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        let c = e.embed_text("something else entirely").unwrap();
        assert_ne!(a, c);
        assert!(e.embed_text("   ").is_err());
    }

    #[test]
    fn diagnoser_priority_scan() {
        let d = MockDiagnoser::new();
        let pick = |descs: &str| d.diagnose(descs).unwrap();
        assert_eq!(pick("- advanced invasive melanoma"), DiagnosisClass::IV.option_text());
        assert_eq!(pick("- invasive melanoma"), DiagnosisClass::III.option_text());
        assert_eq!(pick("- melanoma in situ"), DiagnosisClass::II.option_text());
        assert_eq!(pick("- a nevus, nothing more"), DiagnosisClass::II.option_text());
    }

    #[test]
    fn diagnoser_ignores_option_lines() {
        let prompt = crate::diagnosis::assemble_prompt(&["plain nevus tissue".to_string()]).unwrap();
        // The option list mentions "advanced invasive"; only descriptions count.
        assert_eq!(
            MockDiagnoser::new().diagnose(&prompt).unwrap(),
            DiagnosisClass::II.option_text()
        );
    }

    #[test]
    fn rephraser_table() {
        let r = MockRephraser::new();
        assert_eq!(
            r.rephrase("unremarkable epidermis").unwrap(),
            "epidermis without notable change"
        );
        assert!(r.rephrase("").is_err());
    }

    #[test]
    fn triage_mock_separates_signal() {
        let low = PaddedGrid {
            side: 2,
            dim: 4,
            rows: vec![vec![0.0, 0.5, 0.5, 0.5]; 4],
            pad_count: 0,
        };
        let high = PaddedGrid {
            side: 2,
            dim: 4,
            rows: vec![vec![1.0, 0.5, 0.2, 0.6]; 4],
            pad_count: 0,
        };
        let mock = MockTriage::saturation_logistic();
        assert!(mock.score(&low).unwrap() < 0.5);
        assert!(mock.score(&high).unwrap() > 0.5);
        assert_eq!(MockTriage::fixed(0.73).score(&low).unwrap(), 0.73);
    }
}

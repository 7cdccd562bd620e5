//! JSON wire protocol shared by the remote clients and the stub server.
//!
//! Every call is an HTTP POST with a JSON body and a `{ok, result, error}`
//! envelope in the response. Image payloads are base64 of raw RGB bytes with
//! explicit dimensions; heatmaps and feature grids are base64 of little-endian
//! 32-bit floats, row-major.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::navigator::Heatmap;
use crate::slide::{LevelRaster, PatchCoord, PatchPixels};
use crate::triage::PaddedGrid;

use super::{BackendError, NavigateRequest};

/// Response envelope used by every route.
#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl<T> Envelope<T> {
    pub fn ok(result: T) -> Self {
        Self {
            ok: true,
            result: Some(result),
            error: None,
        }
    }

    pub fn err(message: impl Into<String>) -> Self {
        Self {
            ok: false,
            result: None,
            error: Some(message.into()),
        }
    }
}

/// Raw image: base64 RGB bytes with explicit shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImagePayload {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub data_b64: String,
}

impl ImagePayload {
    pub fn from_raster(raster: &LevelRaster) -> Self {
        Self {
            width: raster.width,
            height: raster.height,
            channels: 3,
            data_b64: BASE64.encode(&raster.pixels),
        }
    }

    pub fn from_patch(patch: &PatchPixels) -> Self {
        Self {
            width: patch.coord.size,
            height: patch.coord.size,
            channels: 3,
            data_b64: BASE64.encode(&patch.pixels),
        }
    }

    pub fn to_raster(&self) -> Result<LevelRaster, BackendError> {
        let pixels = self.decode_bytes()?;
        LevelRaster::new(self.width, self.height, pixels).map_err(|e| {
            BackendError::MalformedResponse {
                reason: e.to_string(),
            }
        })
    }

    /// Square patches only; patch payloads reuse the image encoding.
    pub fn to_patch(&self) -> Result<PatchPixels, BackendError> {
        if self.width != self.height {
            return Err(BackendError::InvalidInput {
                reason: format!("patch payload must be square, got {}x{}", self.width, self.height),
            });
        }
        let pixels = self.decode_bytes()?;
        Ok(PatchPixels {
            coord: PatchCoord {
                level_index: 0,
                x: 0,
                y: 0,
                size: self.width,
            },
            pixels,
        })
    }

    fn decode_bytes(&self) -> Result<Vec<u8>, BackendError> {
        if self.channels != 3 {
            return Err(BackendError::InvalidInput {
                reason: format!("expected 3 channels, got {}", self.channels),
            });
        }
        let bytes = BASE64
            .decode(&self.data_b64)
            .map_err(|e| BackendError::MalformedResponse {
                reason: format!("bad base64: {e}"),
            })?;
        let expected = self.width as usize * self.height as usize * 3;
        if bytes.len() != expected {
            return Err(BackendError::MalformedResponse {
                reason: format!("payload is {} bytes, expected {expected}", bytes.len()),
            });
        }
        Ok(bytes)
    }
}

/// Encode f32 values as base64 little-endian bytes.
pub fn encode_f32s(values: &[f32]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    BASE64.encode(bytes)
}

/// Decode base64 little-endian bytes into f32 values.
pub fn decode_f32s(data_b64: &str) -> Result<Vec<f32>, BackendError> {
    let bytes = BASE64
        .decode(data_b64)
        .map_err(|e| BackendError::MalformedResponse {
            reason: format!("bad base64: {e}"),
        })?;
    if bytes.len() % 4 != 0 {
        return Err(BackendError::MalformedResponse {
            reason: format!("float payload of {} bytes is not a multiple of 4", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NavigateBody {
    pub thumbnail: ImagePayload,
    pub grid_side: usize,
    /// Row-major selection flags, true = previously selected.
    pub mask: Vec<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl NavigateBody {
    pub fn from_request(request: &NavigateRequest) -> Self {
        Self {
            thumbnail: ImagePayload::from_raster(&request.thumbnail),
            grid_side: request.grid_side,
            mask: request.mask.clone(),
            embedding: request.embedding.clone(),
        }
    }

    pub fn to_request(&self) -> Result<NavigateRequest, BackendError> {
        Ok(NavigateRequest {
            thumbnail: self.thumbnail.to_raster()?,
            grid_side: self.grid_side,
            mask: self.mask.clone(),
            embedding: self.embedding.clone(),
        })
    }
}

/// Row-major little-endian f32 heatmap.
#[derive(Debug, Serialize, Deserialize)]
pub struct HeatmapPayload {
    pub width: u32,
    pub height: u32,
    pub data_b64: String,
}

impl HeatmapPayload {
    pub fn from_heatmap(heatmap: &Heatmap) -> Self {
        Self {
            width: heatmap.width,
            height: heatmap.height,
            data_b64: encode_f32s(&heatmap.values),
        }
    }

    pub fn to_heatmap(&self) -> Result<Heatmap, BackendError> {
        let values = decode_f32s(&self.data_b64)?;
        if values.len() != self.width as usize * self.height as usize {
            return Err(BackendError::MalformedResponse {
                reason: format!(
                    "heatmap payload has {} values for {}x{}",
                    values.len(),
                    self.width,
                    self.height
                ),
            });
        }
        Ok(Heatmap {
            width: self.width,
            height: self.height,
            values,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DescribeBody {
    pub patch: ImagePayload,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedBody {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image: Option<ImagePayload>,
}

/// Flattened row-major feature grid, little-endian f32.
#[derive(Debug, Serialize, Deserialize)]
pub struct TriageBody {
    pub side: usize,
    pub dim: usize,
    pub pad_count: usize,
    pub rows_b64: String,
}

impl TriageBody {
    pub fn from_grid(grid: &PaddedGrid) -> Self {
        let flat: Vec<f32> = grid.rows.iter().flatten().copied().collect();
        Self {
            side: grid.side,
            dim: grid.dim,
            pad_count: grid.pad_count,
            rows_b64: encode_f32s(&flat),
        }
    }

    pub fn to_grid(&self) -> Result<PaddedGrid, BackendError> {
        let flat = decode_f32s(&self.rows_b64)?;
        let expected = self.side * self.side * self.dim;
        if flat.len() != expected {
            return Err(BackendError::MalformedResponse {
                reason: format!(
                    "grid payload has {} values, expected {expected}",
                    flat.len()
                ),
            });
        }
        Ok(PaddedGrid {
            side: self.side,
            dim: self.dim,
            rows: flat.chunks_exact(self.dim.max(1)).map(<[f32]>::to_vec).collect(),
            pad_count: self.pad_count,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DiagnoseBody {
    pub prompt: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RephraseBody {
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TextResult {
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VectorResult {
    pub vector: Vec<f32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreResult {
    pub score: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_codec_round_trips() {
        let values = vec![0.0f32, 1.5, -2.25, f32::MIN_POSITIVE, 1e30];
        let decoded = decode_f32s(&encode_f32s(&values)).unwrap();
        assert_eq!(values, decoded);
    }

    #[test]
    fn image_payload_round_trips() {
        let raster = LevelRaster::new(2, 2, vec![9u8; 12]).unwrap();
        let payload = ImagePayload::from_raster(&raster);
        assert_eq!(payload.to_raster().unwrap(), raster);
    }

    #[test]
    fn decode_rejects_bad_length() {
        let payload = ImagePayload {
            width: 2,
            height: 2,
            channels: 3,
            data_b64: BASE64.encode([0u8; 5]),
        };
        assert!(payload.to_raster().is_err());
    }
}

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::drawing::PrimitiveDrawing;
use crate::ir::CoordinateMode;

/// Default bound on the coefficient of variation of implied scales.
pub const DEFAULT_SCALE_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleResolution {
    pub mode: CoordinateMode,
    /// Meters per pixel; `None` in normalized mode.
    pub meters_per_pixel: Option<f64>,
    /// Coefficient of variation of the per-annotation implied scales.
    pub consistency: f64,
}

impl ScaleResolution {
    pub fn normalized() -> Self {
        Self {
            mode: CoordinateMode::Normalized,
            meters_per_pixel: None,
            consistency: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("dimension annotations disagree on scale (cv {cv:.4} > {tolerance}): implied m/px {implied:?}")]
pub struct ScaleConflictError {
    pub implied: Vec<f64>,
    pub cv: f64,
    pub tolerance: f64,
}

pub fn infer_scale(drawing: &PrimitiveDrawing) -> Result<ScaleResolution, ScaleConflictError> {
    infer_scale_with(drawing, DEFAULT_SCALE_TOLERANCE)
}

/// Each annotation implies `value / pixel_length`; agreement is measured by
/// the sample coefficient of variation. Without annotations the drawing is
/// treated as normalized.
pub fn infer_scale_with(
    drawing: &PrimitiveDrawing,
    tolerance: f64,
) -> Result<ScaleResolution, ScaleConflictError> {
    let implied: Vec<f64> = drawing
        .dimension_annotations
        .iter()
        .filter_map(|a| {
            let len = drawing.segments.get(a.segment_index)?.pixel_length();
            (len > 0.0).then(|| a.value / len)
        })
        .collect();
    if implied.is_empty() {
        return Ok(ScaleResolution::normalized());
    }
    let n = implied.len() as f64;
    let mean = implied.iter().sum::<f64>() / n;
    let cv = if implied.len() > 1 {
        let var = implied.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        var.sqrt() / mean
    } else {
        0.0
    };
    if cv > tolerance {
        return Err(ScaleConflictError {
            implied,
            cv,
            tolerance,
        });
    }
    Ok(ScaleResolution {
        mode: CoordinateMode::Metric,
        meters_per_pixel: Some(mean),
        consistency: cv,
    })
}

//! Structured drawing documents: classified line segments, text labels,
//! support glyphs, load arrows and dimension annotations in pixel space.
//!
//! Pixel coordinates use a y-up convention, so a load arrow pointing in
//! direction `(0, -1)` acts downward.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Pixel = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrokeClass {
    Structural,
    Dimension,
    Annotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub p1: Pixel,
    pub p2: Pixel,
    pub stroke_class: StrokeClass,
}

impl Segment {
    pub fn pixel_length(&self) -> f64 {
        (self.p2[0] - self.p1[0]).hypot(self.p2[1] - self.p1[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Label {
    pub anchor: Pixel,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlyphKind {
    Pin,
    RollerX,
    RollerY,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupportGlyph {
    pub anchor: Pixel,
    pub kind: GlyphKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadArrow {
    pub anchor: Pixel,
    pub direction: Pixel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub magnitude_label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionAnnotation {
    pub segment_index: usize,
    /// Annotated length in meters.
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimitiveDrawing {
    #[serde(default)]
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub labels: Vec<Label>,
    #[serde(default)]
    pub support_glyphs: Vec<SupportGlyph>,
    #[serde(default)]
    pub load_arrows: Vec<LoadArrow>,
    #[serde(default)]
    pub dimension_annotations: Vec<DimensionAnnotation>,
}

impl PrimitiveDrawing {
    pub fn structural_segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments
            .iter()
            .filter(|s| s.stroke_class == StrokeClass::Structural)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("drawing error at line {line}, field {field}: {message}")]
pub struct DrawingParseError {
    pub line: usize,
    pub field: String,
    pub message: String,
}

impl DrawingParseError {
    fn field(field: String, message: impl Into<String>) -> Self {
        Self {
            line: 0,
            field,
            message: message.into(),
        }
    }
}

/// Parses a drawing document. An empty document (or `{}`) yields an empty drawing.
pub fn parse_drawing(text: &str) -> Result<PrimitiveDrawing, DrawingParseError> {
    if text.trim().is_empty() {
        return Ok(PrimitiveDrawing::default());
    }
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut drawing: PrimitiveDrawing = serde_path_to_error::deserialize(de).map_err(|err| {
        let field = err.path().to_string();
        let inner = err.into_inner();
        DrawingParseError {
            line: inner.line(),
            field,
            message: inner.to_string(),
        }
    })?;

    let finite = |p: &Pixel| p.iter().all(|c| c.is_finite());
    for (i, s) in drawing.segments.iter().enumerate() {
        if !finite(&s.p1) || !finite(&s.p2) {
            return Err(DrawingParseError::field(
                format!("segments[{i}]"),
                "segment endpoint is not finite",
            ));
        }
    }
    for (i, a) in drawing.dimension_annotations.iter().enumerate() {
        let field = format!("dimension_annotations[{i}].segment_index");
        match drawing.segments.get(a.segment_index) {
            None => {
                return Err(DrawingParseError::field(
                    field,
                    format!(
                        "segment index {} out of range ({} segments)",
                        a.segment_index,
                        drawing.segments.len()
                    ),
                ))
            }
            Some(s) if s.stroke_class != StrokeClass::Dimension => {
                return Err(DrawingParseError::field(
                    field,
                    format!("segment {} is not a dimension line", a.segment_index),
                ))
            }
            Some(s) if s.pixel_length() == 0.0 => {
                return Err(DrawingParseError::field(field, "dimension line has zero length"))
            }
            Some(_) => {}
        }
        if !(a.value.is_finite() && a.value > 0.0) {
            return Err(DrawingParseError::field(
                format!("dimension_annotations[{i}].value"),
                "annotated length must be positive",
            ));
        }
    }
    for (i, arrow) in drawing.load_arrows.iter_mut().enumerate() {
        let [dx, dy] = arrow.direction;
        let norm = dx.hypot(dy);
        if !finite(&arrow.anchor) || !(norm.is_finite() && norm > 0.0) {
            return Err(DrawingParseError::field(
                format!("load_arrows[{i}].direction"),
                "arrow direction must be a finite non-zero vector",
            ));
        }
        arrow.direction = [dx / norm, dy / norm];
    }
    Ok(drawing)
}

pub fn write_drawing(drawing: &PrimitiveDrawing) -> String {
    let mut text = serde_json::to_string_pretty(drawing).expect("drawing always serializes");
    text.push('\n');
    text
}

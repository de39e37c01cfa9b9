//! Attaching physical meaning to a recovered topology: supports, loads,
//! materials, sections and the requested analysis.

use std::collections::BTreeMap;

use thiserror::Error;

use super::drawing::{GlyphKind, Pixel, PrimitiveDrawing};
use super::scale::ScaleResolution;
use super::topology::Topology;
use crate::ir::{
    bounding_box, AnalysisMode, AnalysisSpec, BoundaryCondition, CoordinateMode, Dof, Element,
    ElementKind, IrModel, Load, Material, Node, Section,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemanticsError {
    #[error("topology is empty; nothing to attach semantics to")]
    EmptyTopology,
    #[error("load arrow {arrow}: cannot parse magnitude {label:?}")]
    UnparsableMagnitude { arrow: usize, label: Option<String> },
    #[error("{what} {index} lies {distance:.2} px from the nearest node (tolerance {tolerance} px)")]
    TooFarFromNode {
        what: &'static str,
        index: usize,
        distance: f64,
        tolerance: f64,
    },
    #[error("context line {line}: {message}")]
    Directive { line: usize, message: String },
}

pub fn glyph_dofs(kind: GlyphKind) -> Vec<Dof> {
    match kind {
        GlyphKind::Pin => vec![Dof::Ux, Dof::Uy],
        GlyphKind::RollerX => vec![Dof::Ux],
        GlyphKind::RollerY => vec![Dof::Uy],
        GlyphKind::Fixed => vec![Dof::Ux, Dof::Uy, Dof::Rz],
    }
}

/// Parses a force label such as `10 kN`, `2.5kN`, `-300 N` or a bare number (newtons).
pub fn parse_force(label: &str) -> Option<f64> {
    let t = label.trim();
    let split = t
        .find(|c: char| c.is_ascii_alphabetic() && c != 'e' && c != 'E')
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num.trim().parse().ok()?;
    let factor = match unit.trim() {
        "" | "N" => 1.0,
        "kN" | "KN" | "kn" => 1e3,
        "MN" => 1e6,
        _ => return None,
    };
    let v = value * factor;
    v.is_finite().then_some(v)
}

/// Directives read from the line-oriented context text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContextDirectives {
    pub material: Option<Material>,
    pub section: Option<Section>,
    pub element_kind: Option<ElementKind>,
    pub analysis: AnalysisSpec,
    pub pinned: Vec<String>,
}

fn directive_err(line: usize, message: impl Into<String>) -> SemanticsError {
    SemanticsError::Directive {
        line,
        message: message.into(),
    }
}

fn number(line: usize, key: &str, value: &str) -> Result<f64, SemanticsError> {
    value
        .trim()
        .parse::<f64>()
        .map_err(|_| directive_err(line, format!("{key}: expected a number, got {value:?}")))
}

fn key_values(line: usize, text: &str) -> Result<Vec<(String, f64)>, SemanticsError> {
    text.split_whitespace()
        .map(|tok| {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| directive_err(line, format!("expected key=value, got {tok:?}")))?;
            Ok((k.to_string(), number(line, k, v)?))
        })
        .collect()
}

/// Splits each line on commas; every clause is `key: value` or `key value`.
/// Clauses with unknown keys are ignored so free prose may accompany directives.
pub fn parse_context(text: &str) -> Result<ContextDirectives, SemanticsError> {
    let mut ctx = ContextDirectives::default();
    let mut mode: Option<AnalysisMode> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix("constraint:") {
            ctx.pinned.push(rest.trim().to_string());
            continue;
        }
        for clause in content.split(',') {
            let clause = clause.trim();
            let cut = clause
                .find(|c: char| c == ':' || c.is_whitespace())
                .unwrap_or(clause.len());
            let key = clause[..cut].to_ascii_lowercase();
            let value = clause[cut..].trim_start_matches(':').trim();
            match key.as_str() {
                "material" => {
                    let mut m = Material {
                        id: 1,
                        youngs_modulus: f64::NAN,
                        poisson_ratio: 0.3,
                        density: f64::NAN,
                    };
                    for (k, v) in key_values(line, value)? {
                        match k.as_str() {
                            "E" | "youngs_modulus" => m.youngs_modulus = v,
                            "nu" | "poisson_ratio" => m.poisson_ratio = v,
                            "rho" | "density" => m.density = v,
                            other => return Err(directive_err(line, format!("unknown material key {other:?}"))),
                        }
                    }
                    if m.youngs_modulus.is_nan() || m.density.is_nan() {
                        return Err(directive_err(line, "material requires E and rho"));
                    }
                    ctx.material = Some(m);
                }
                "section" => {
                    let mut s = Section {
                        id: 1,
                        material: 1,
                        area: f64::NAN,
                        moment_of_inertia: None,
                    };
                    for (k, v) in key_values(line, value)? {
                        match k.as_str() {
                            "A" | "area" => s.area = v,
                            "I" | "inertia" | "moment_of_inertia" => s.moment_of_inertia = Some(v),
                            other => return Err(directive_err(line, format!("unknown section key {other:?}"))),
                        }
                    }
                    if s.area.is_nan() {
                        return Err(directive_err(line, "section requires A"));
                    }
                    ctx.section = Some(s);
                }
                "element" => {
                    ctx.element_kind = Some(match value {
                        "truss" | "truss_bar" => ElementKind::TrussBar,
                        "frame" | "frame_beam" => ElementKind::FrameBeam,
                        other => return Err(directive_err(line, format!("unknown element kind {other:?}"))),
                    })
                }
                "mode" => {
                    mode = Some(match value {
                        "static" => AnalysisMode::Static,
                        "modal" => AnalysisMode::Modal,
                        "topology_optimization" | "topopt" => AnalysisMode::TopologyOptimization,
                        other => return Err(directive_err(line, format!("unknown mode {other:?}"))),
                    })
                }
                "volfrac" => ctx.analysis.opt_volume_fraction = Some(number(line, "volfrac", value)?),
                "modal_count" => {
                    ctx.analysis.modal_count = Some(
                        value
                            .parse()
                            .map_err(|_| directive_err(line, "modal_count: expected a positive integer"))?,
                    )
                }
                "max_iterations" | "iters" => {
                    ctx.analysis.opt_max_iterations = Some(
                        value
                            .parse()
                            .map_err(|_| directive_err(line, "max_iterations: expected a positive integer"))?,
                    )
                }
                _ => {}
            }
        }
    }
    ctx.analysis.mode = mode.unwrap_or_default();
    match ctx.analysis.mode {
        AnalysisMode::Static => {
            ctx.analysis.modal_count = None;
            ctx.analysis.opt_volume_fraction = None;
            ctx.analysis.opt_max_iterations = None;
        }
        AnalysisMode::Modal => {
            ctx.analysis.opt_volume_fraction = None;
            ctx.analysis.opt_max_iterations = None;
        }
        AnalysisMode::TopologyOptimization => ctx.analysis.modal_count = None,
    }
    Ok(ctx)
}

/// Maps pixel positions to model coordinates. Metric scales multiply by the
/// resolved meters-per-pixel; normalized mode fits the points into the unit
/// square preserving aspect ratio.
pub fn pixel_to_model(points: &[Pixel], scale: &ScaleResolution) -> Vec<(f64, f64)> {
    match (scale.mode, scale.meters_per_pixel) {
        (CoordinateMode::Metric, Some(mpp)) => {
            points.iter().map(|p| (p[0] * mpp, p[1] * mpp)).collect()
        }
        _ => {
            let Some((lo, hi)) = bounding_box(points.iter().map(|p| (p[0], p[1]))) else {
                return Vec::new();
            };
            let extent = (hi.0 - lo.0).max(hi.1 - lo.1);
            let k = if extent > 0.0 { 1.0 / extent } else { 0.0 };
            points
                .iter()
                .map(|p| ((p[0] - lo.0) * k, (p[1] - lo.1) * k))
                .collect()
        }
    }
}

pub fn attach_semantics(
    drawing: &PrimitiveDrawing,
    topology: &Topology,
    scale: &ScaleResolution,
    context_text: &str,
) -> Result<IrModel, SemanticsError> {
    let ctx = parse_context(context_text)?;
    attach_with_directives(drawing, topology, scale, &ctx)
}

pub fn attach_with_directives(
    drawing: &PrimitiveDrawing,
    topology: &Topology,
    scale: &ScaleResolution,
    ctx: &ContextDirectives,
) -> Result<IrModel, SemanticsError> {
    if topology.is_empty() {
        return Err(SemanticsError::EmptyTopology);
    }
    let tolerance = topology.snap_tolerance;
    let pixels: Vec<Pixel> = topology.nodes.iter().map(|n| n.pixel).collect();
    let nodes: Vec<Node> = topology
        .nodes
        .iter()
        .zip(pixel_to_model(&pixels, scale))
        .map(|(n, (x, y))| Node::new(n.id, x, y))
        .collect();

    let near = |what: &'static str, index: usize, p: Pixel| {
        let (id, distance) = topology.nearest_node(p).expect("topology is non-empty");
        if distance > tolerance {
            Err(SemanticsError::TooFarFromNode {
                what,
                index,
                distance,
                tolerance,
            })
        } else {
            Ok(id)
        }
    };

    let mut bcs = Vec::new();
    for (i, g) in drawing.support_glyphs.iter().enumerate() {
        bcs.push(BoundaryCondition {
            node: near("support glyph", i, g.anchor)?,
            dofs: glyph_dofs(g.kind),
        });
    }

    let mut loads: BTreeMap<u32, Load> = BTreeMap::new();
    for (i, arrow) in drawing.load_arrows.iter().enumerate() {
        let node = near("load arrow", i, arrow.anchor)?;
        let magnitude = arrow
            .magnitude_label
            .as_deref()
            .and_then(parse_force)
            .ok_or_else(|| SemanticsError::UnparsableMagnitude {
                arrow: i,
                label: arrow.magnitude_label.clone(),
            })?;
        let entry = loads.entry(node).or_insert(Load {
            node,
            fx: 0.0,
            fy: 0.0,
            mz: 0.0,
        });
        entry.fx += magnitude * arrow.direction[0];
        entry.fy += magnitude * arrow.direction[1];
    }

    let section = ctx.section;
    let kind = ctx.element_kind.unwrap_or(match section {
        Some(Section {
            moment_of_inertia: Some(_),
            ..
        }) => ElementKind::FrameBeam,
        _ => ElementKind::TrussBar,
    });
    let elements = topology
        .edges
        .iter()
        .map(|e| Element {
            id: e.id,
            kind,
            nodes: e.nodes,
            section: 1,
        })
        .collect();

    let mut provenance = vec![match scale.meters_per_pixel {
        Some(mpp) => format!("scale: metric {mpp} m/px (cv {:.4})", scale.consistency),
        None => "scale: normalized (no dimension annotations)".to_string(),
    }];
    provenance.extend(ctx.pinned.iter().map(|c| format!("constraint: {c}")));

    Ok(IrModel {
        nodes,
        elements,
        materials: ctx.material.into_iter().collect(),
        sections: section.into_iter().collect(),
        bcs,
        loads: loads.into_values().filter(|l| !l.is_zero()).collect(),
        analysis: ctx.analysis,
        coordinate_mode: scale.mode,
        provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perception::drawing::{LoadArrow, Segment, StrokeClass, SupportGlyph};
    use crate::perception::topology::infer_topology;

    fn beam_drawing() -> PrimitiveDrawing {
        PrimitiveDrawing {
            segments: vec![Segment {
                p1: [0.0, 0.0],
                p2: [200.0, 0.0],
                stroke_class: StrokeClass::Structural,
            }],
            support_glyphs: vec![SupportGlyph { anchor: [0.0, 0.0], kind: GlyphKind::Fixed }],
            load_arrows: vec![LoadArrow {
                anchor: [200.0, 1.0],
                direction: [0.0, -1.0],
                magnitude_label: Some("10 kN".into()),
            }],
            ..Default::default()
        }
    }

    fn metric() -> ScaleResolution {
        ScaleResolution {
            mode: CoordinateMode::Metric,
            meters_per_pixel: Some(0.01),
            consistency: 0.0,
        }
    }

    const CONTEXT: &str = "material: E=210e9 nu=0.3 rho=7850\nsection: A=0.01 I=1e-6\n";

    #[test]
    fn fixed_glyph_maps_to_all_dofs() {
        let d = beam_drawing();
        let t = infer_topology(&d, 3.0).unwrap();
        let m = attach_semantics(&d, &t, &metric(), CONTEXT).unwrap();
        assert_eq!(m.bcs, vec![BoundaryCondition { node: 1, dofs: vec![Dof::Ux, Dof::Uy, Dof::Rz] }]);
        assert_eq!(m.elements[0].kind, ElementKind::FrameBeam);
        assert!((m.nodes[1].x - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kilonewton_arrow_converts() {
        let d = beam_drawing();
        let t = infer_topology(&d, 3.0).unwrap();
        let m = attach_semantics(&d, &t, &metric(), CONTEXT).unwrap();
        assert_eq!(m.loads.len(), 1);
        assert_eq!(m.loads[0].node, 2);
        assert_eq!(m.loads[0].fy, -10_000.0);
        assert_eq!(m.loads[0].fx, 0.0);
    }

    #[test]
    fn topology_optimization_context() {
        let ctx = parse_context("mode: topology_optimization, volfrac 0.5").unwrap();
        assert_eq!(ctx.analysis.mode, AnalysisMode::TopologyOptimization);
        assert_eq!(ctx.analysis.opt_volume_fraction, Some(0.5));
    }

    #[test]
    fn glyph_mapping_table() {
        assert_eq!(glyph_dofs(GlyphKind::Pin), vec![Dof::Ux, Dof::Uy]);
        assert_eq!(glyph_dofs(GlyphKind::RollerY), vec![Dof::Uy]);
        assert_eq!(glyph_dofs(GlyphKind::RollerX), vec![Dof::Ux]);
    }

    #[test]
    fn force_labels() {
        assert_eq!(parse_force("10 kN"), Some(10_000.0));
        assert_eq!(parse_force("2.5kN"), Some(2_500.0));
        assert_eq!(parse_force("-300 N"), Some(-300.0));
        assert_eq!(parse_force("1e3 N"), Some(1_000.0));
        assert_eq!(parse_force("12"), Some(12.0));
        assert_eq!(parse_force("ten kN"), None);
        assert_eq!(parse_force("5 lbf"), None);
    }

    #[test]
    fn bad_magnitude_is_an_error() {
        let mut d = beam_drawing();
        d.load_arrows[0].magnitude_label = Some("heavy".into());
        let t = infer_topology(&d, 3.0).unwrap();
        assert!(matches!(
            attach_semantics(&d, &t, &metric(), CONTEXT),
            Err(SemanticsError::UnparsableMagnitude { arrow: 0, .. })
        ));
    }

    #[test]
    fn distant_glyph_is_an_error() {
        let mut d = beam_drawing();
        d.support_glyphs[0].anchor = [50.0, 50.0];
        let t = infer_topology(&d, 3.0).unwrap();
        assert!(matches!(
            attach_semantics(&d, &t, &metric(), CONTEXT),
            Err(SemanticsError::TooFarFromNode { what: "support glyph", .. })
        ));
    }

    #[test]
    fn normalized_coordinates_fit_unit_box() {
        let d = beam_drawing();
        let t = infer_topology(&d, 3.0).unwrap();
        let m = attach_semantics(&d, &t, &ScaleResolution::normalized(), CONTEXT).unwrap();
        assert_eq!(m.coordinate_mode, CoordinateMode::Normalized);
        assert_eq!((m.nodes[1].x, m.nodes[1].y), (1.0, 0.0));
    }

    #[test]
    fn pinned_constraints_are_collected() {
        let ctx = parse_context("constraint: keep all annotated members\nmode: modal, modal_count: 3").unwrap();
        assert_eq!(ctx.pinned, vec!["keep all annotated members".to_string()]);
        assert_eq!(ctx.analysis, AnalysisSpec::modal(3));
    }

    #[test]
    fn bad_directive_number() {
        assert!(matches!(
            parse_context("material: E=abc rho=1"),
            Err(SemanticsError::Directive { line: 1, .. })
        ));
    }
}

//! Solver-agnostic intermediate representation of a planar structural model.
//!
//! An [`IrModel`] carries geometry (nodes and elements), material sections,
//! boundary conditions, nodal loads and the requested analysis. The serialized
//! form is a JSON document whose layout is documented in `docs/ir-schema.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = u32;
pub type ElementId = u32;
pub type MaterialId = u32;
pub type SectionId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

impl Node {
    pub fn new(id: NodeId, x: f64, y: f64) -> Self {
        Self { id, x, y }
    }

    pub fn distance_to(&self, other: &Node) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    TrussBar,
    FrameBeam,
}

impl ElementKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::TrussBar => "truss_bar",
            ElementKind::FrameBeam => "frame_beam",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Element {
    pub id: ElementId,
    pub kind: ElementKind,
    pub nodes: [NodeId; 2],
    pub section: SectionId,
}

impl Element {
    /// Node pair with the smaller id first.
    pub fn unordered_nodes(&self) -> (NodeId, NodeId) {
        let [a, b] = self.nodes;
        (a.min(b), a.max(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub id: MaterialId,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Section {
    pub id: SectionId,
    pub material: MaterialId,
    pub area: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment_of_inertia: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dof {
    Ux,
    Uy,
    Rz,
}

impl Dof {
    pub const ALL: [Dof; 3] = [Dof::Ux, Dof::Uy, Dof::Rz];

    pub fn as_str(self) -> &'static str {
        match self {
            Dof::Ux => "ux",
            Dof::Uy => "uy",
            Dof::Rz => "rz",
        }
    }

    pub fn parse(s: &str) -> Option<Dof> {
        match s {
            "ux" => Some(Dof::Ux),
            "uy" => Some(Dof::Uy),
            "rz" => Some(Dof::Rz),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Dof {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryCondition {
    pub node: NodeId,
    pub dofs: Vec<Dof>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub node: NodeId,
    #[serde(default)]
    pub fx: f64,
    #[serde(default)]
    pub fy: f64,
    #[serde(default)]
    pub mz: f64,
}

impl Load {
    pub fn is_zero(&self) -> bool {
        self.fx == 0.0 && self.fy == 0.0 && self.mz == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisMode {
    #[default]
    Static,
    Modal,
    TopologyOptimization,
}

impl AnalysisMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AnalysisMode::Static => "static",
            AnalysisMode::Modal => "modal",
            AnalysisMode::TopologyOptimization => "topology_optimization",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    pub mode: AnalysisMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modal_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opt_volume_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opt_max_iterations: Option<u32>,
}

impl AnalysisSpec {
    pub fn static_analysis() -> Self {
        Self::default()
    }

    pub fn modal(count: u32) -> Self {
        Self {
            mode: AnalysisMode::Modal,
            modal_count: Some(count),
            ..Self::default()
        }
    }

    pub fn topology(volume_fraction: Option<f64>, max_iterations: Option<u32>) -> Self {
        Self {
            mode: AnalysisMode::TopologyOptimization,
            opt_volume_fraction: volume_fraction,
            opt_max_iterations: max_iterations,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateMode {
    #[default]
    Metric,
    Normalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct IrModel {
    pub nodes: Vec<Node>,
    pub elements: Vec<Element>,
    pub materials: Vec<Material>,
    pub sections: Vec<Section>,
    pub bcs: Vec<BoundaryCondition>,
    pub loads: Vec<Load>,
    pub analysis: AnalysisSpec,
    pub coordinate_mode: CoordinateMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub provenance: Vec<String>,
}

impl IrModel {
    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn section(&self, id: SectionId) -> Option<&Section> {
        self.sections.iter().find(|s| s.id == id)
    }

    pub fn material(&self, id: MaterialId) -> Option<&Material> {
        self.materials.iter().find(|m| m.id == id)
    }

    pub fn element(&self, id: ElementId) -> Option<&Element> {
        self.elements.iter().find(|e| e.id == id)
    }

    pub fn bc_for(&self, node: NodeId) -> Option<&BoundaryCondition> {
        self.bcs.iter().find(|b| b.node == node)
    }

    /// Nodes attached to at least one frame element carry a rotational DOF.
    pub fn rotational_nodes(&self) -> BTreeSet<NodeId> {
        self.elements
            .iter()
            .filter(|e| e.kind == ElementKind::FrameBeam)
            .flat_map(|e| e.nodes)
            .collect()
    }

    /// Diagonal of the axis-aligned node bounding box (0 for fewer than two nodes).
    pub fn bounding_diagonal(&self) -> f64 {
        bounding_box(self.nodes.iter().map(|n| (n.x, n.y)))
            .map(|(lo, hi)| (hi.0 - lo.0).hypot(hi.1 - lo.1))
            .unwrap_or(0.0)
    }
}

pub(crate) fn bounding_box(
    points: impl IntoIterator<Item = (f64, f64)>,
) -> Option<((f64, f64), (f64, f64))> {
    let mut it = points.into_iter();
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), (x, y)| {
        ((lo.0.min(x), lo.1.min(y)), (hi.0.max(x), hi.1.max(y)))
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CanonicalizationError {
    #[error("{entity} {id} is declared more than once")]
    DuplicateId { entity: &'static str, id: u32 },
    #[error("{from} refers to missing {entity} {id}")]
    DanglingReference {
        from: String,
        entity: &'static str,
        id: u32,
    },
}

/// Sort every entity list by id, store element node pairs ascending, merge
/// boundary conditions and loads that target the same node.
pub fn canonicalize(model: &IrModel) -> Result<IrModel, CanonicalizationError> {
    check_unique("node", model.nodes.iter().map(|n| n.id))?;
    check_unique("element", model.elements.iter().map(|e| e.id))?;
    check_unique("material", model.materials.iter().map(|m| m.id))?;
    check_unique("section", model.sections.iter().map(|s| s.id))?;

    let node_ids: BTreeSet<_> = model.nodes.iter().map(|n| n.id).collect();
    let material_ids: BTreeSet<_> = model.materials.iter().map(|m| m.id).collect();
    let section_ids: BTreeSet<_> = model.sections.iter().map(|s| s.id).collect();

    let dangling = |from: String, entity, id| CanonicalizationError::DanglingReference { from, entity, id };
    for s in &model.sections {
        if !material_ids.contains(&s.material) {
            return Err(dangling(format!("section {}", s.id), "material", s.material));
        }
    }
    for e in &model.elements {
        for n in e.nodes {
            if !node_ids.contains(&n) {
                return Err(dangling(format!("element {}", e.id), "node", n));
            }
        }
        if !section_ids.contains(&e.section) {
            return Err(dangling(format!("element {}", e.id), "section", e.section));
        }
    }
    for b in &model.bcs {
        if !node_ids.contains(&b.node) {
            return Err(dangling("boundary condition".into(), "node", b.node));
        }
    }
    for l in &model.loads {
        if !node_ids.contains(&l.node) {
            return Err(dangling("load".into(), "node", l.node));
        }
    }

    let mut out = model.clone();
    out.nodes.sort_by_key(|n| n.id);
    out.materials.sort_by_key(|m| m.id);
    out.sections.sort_by_key(|s| s.id);
    for e in &mut out.elements {
        let (a, b) = e.unordered_nodes();
        e.nodes = [a, b];
    }
    out.elements.sort_by_key(|e| e.id);

    let mut bcs: BTreeMap<NodeId, BTreeSet<Dof>> = BTreeMap::new();
    for b in &model.bcs {
        bcs.entry(b.node).or_default().extend(b.dofs.iter().copied());
    }
    out.bcs = bcs
        .into_iter()
        .map(|(node, dofs)| BoundaryCondition {
            node,
            dofs: dofs.into_iter().collect(),
        })
        .collect();

    let mut loads: BTreeMap<NodeId, Load> = BTreeMap::new();
    for l in &model.loads {
        let acc = loads.entry(l.node).or_insert(Load {
            node: l.node,
            fx: 0.0,
            fy: 0.0,
            mz: 0.0,
        });
        acc.fx += l.fx;
        acc.fy += l.fy;
        acc.mz += l.mz;
    }
    out.loads = loads.into_values().collect();
    Ok(out)
}

fn check_unique(
    entity: &'static str,
    ids: impl Iterator<Item = u32>,
) -> Result<(), CanonicalizationError> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(CanonicalizationError::DuplicateId { entity, id });
        }
    }
    Ok(())
}

/// Id-level differences for one entity class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdDelta {
    pub added: Vec<u32>,
    pub removed: Vec<u32>,
    pub modified: Vec<u32>,
}

impl IdDelta {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.modified.is_empty()
    }

    fn between<T: PartialEq>(old: &BTreeMap<u32, T>, new: &BTreeMap<u32, T>) -> Self {
        let mut delta = IdDelta::default();
        for (id, value) in old {
            match new.get(id) {
                None => delta.removed.push(*id),
                Some(v) if v != value => delta.modified.push(*id),
                Some(_) => {}
            }
        }
        delta.added = new.keys().filter(|id| !old.contains_key(id)).copied().collect();
        delta
    }
}

/// Differences between two canonical models. Boundary conditions and loads
/// are keyed by node id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSet {
    pub nodes: IdDelta,
    pub elements: IdDelta,
    pub materials: IdDelta,
    pub sections: IdDelta,
    pub bcs: IdDelta,
    pub loads: IdDelta,
    pub analysis_changed: bool,
    pub degenerative: bool,
}

impl ChangeSet {
    pub fn is_empty(&self) -> bool {
        self.deltas().iter().all(|d| d.is_empty()) && !self.analysis_changed
    }

    fn deltas(&self) -> [&IdDelta; 6] {
        [
            &self.nodes,
            &self.elements,
            &self.materials,
            &self.sections,
            &self.bcs,
            &self.loads,
        ]
    }
}

pub fn diff(old: &IrModel, new: &IrModel) -> ChangeSet {
    fn keyed<T: Clone>(items: &[T], key: impl Fn(&T) -> u32) -> BTreeMap<u32, T> {
        items.iter().map(|i| (key(i), i.clone())).collect()
    }
    let mut cs = ChangeSet {
        nodes: IdDelta::between(&keyed(&old.nodes, |n| n.id), &keyed(&new.nodes, |n| n.id)),
        elements: IdDelta::between(
            &keyed(&old.elements, |e| e.id),
            &keyed(&new.elements, |e| e.id),
        ),
        materials: IdDelta::between(
            &keyed(&old.materials, |m| m.id),
            &keyed(&new.materials, |m| m.id),
        ),
        sections: IdDelta::between(
            &keyed(&old.sections, |s| s.id),
            &keyed(&new.sections, |s| s.id),
        ),
        bcs: IdDelta::between(&keyed(&old.bcs, |b| b.node), &keyed(&new.bcs, |b| b.node)),
        loads: IdDelta::between(&keyed(&old.loads, |l| l.node), &keyed(&new.loads, |l| l.node)),
        analysis_changed: old.analysis != new.analysis,
        degenerative: false,
    };
    cs.degenerative = cs.deltas().iter().any(|d| !d.removed.is_empty());
    cs
}

#[derive(Debug, Error)]
#[error("schema error at {path}: {message}")]
pub struct SchemaParseError {
    /// Location of the offending field, e.g. `sections[0].area`; `.` for the document root.
    pub path: String,
    pub message: String,
    pub line: usize,
    pub column: usize,
}

pub fn serialize(model: &IrModel) -> String {
    let mut text = serde_json::to_string_pretty(model).expect("IR values always serialize");
    text.push('\n');
    text
}

pub fn deserialize(text: &str) -> Result<IrModel, SchemaParseError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        SchemaParseError {
            path,
            message: inner.to_string(),
            line: inner.line(),
            column: inner.column(),
        }
    })
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn canonicalize_sorts_nodes() {
        let mut m = two_bar_truss();
        m.nodes = vec![m.nodes[1], m.nodes[0], m.nodes[2]];
        let c = canonicalize(&m).unwrap();
        let ids: Vec<_> = c.nodes.iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![1, 2, 3]);
    }

    #[test]
    fn canonicalize_orders_element_pair() {
        let mut m = two_bar_truss();
        m.nodes.push(Node::new(5, 3.0, 3.0));
        m.elements[0].nodes = [5, 2];
        let c = canonicalize(&m).unwrap();
        assert_eq!(c.elements[0].nodes, [2, 5]);
    }

    #[test]
    fn canonical_model_serializes_identically() {
        let c = canonicalize(&two_bar_truss()).unwrap();
        let again = canonicalize(&c).unwrap();
        assert_eq!(serialize(&c), serialize(&again));
    }

    #[test]
    fn canonicalize_rejects_dangling() {
        let mut m = two_bar_truss();
        m.elements[0].nodes = [1, 99];
        assert!(matches!(
            canonicalize(&m),
            Err(CanonicalizationError::DanglingReference { id: 99, .. })
        ));
    }

    #[test]
    fn canonicalize_merges_bcs_and_loads() {
        let mut m = two_bar_truss();
        m.bcs.push(BoundaryCondition { node: 1, dofs: vec![Dof::Rz, Dof::Ux] });
        m.loads.push(Load { node: 3, fx: 5.0, fy: 1.0, mz: 0.0 });
        let c = canonicalize(&m).unwrap();
        assert_eq!(c.bcs.len(), 2);
        assert_eq!(c.bcs[0].dofs, vec![Dof::Ux, Dof::Uy, Dof::Rz]);
        assert_eq!(c.loads, vec![Load { node: 3, fx: 5.0, fy: -9_999.0, mz: 0.0 }]);
    }

    #[test]
    fn diff_identity_is_empty() {
        let m = canonicalize(&two_bar_truss()).unwrap();
        let cs = diff(&m, &m);
        assert!(cs.is_empty());
        assert!(!cs.degenerative);
    }

    #[test]
    fn diff_addition_is_not_degenerative() {
        let old = canonicalize(&two_bar_truss()).unwrap();
        let mut new = old.clone();
        new.nodes.push(Node::new(4, 5.0, 5.0));
        let cs = diff(&old, &new);
        assert_eq!(cs.nodes.added, vec![4]);
        assert!(!cs.degenerative);
    }

    #[test]
    fn diff_removal_matches_set_difference() {
        let old = canonicalize(&two_bar_truss()).unwrap();
        let mut new = old.clone();
        new.nodes.retain(|n| n.id == 3);
        let cs = diff(&old, &new);
        let old_ids: BTreeSet<u32> = old.nodes.iter().map(|n| n.id).collect();
        let new_ids: BTreeSet<u32> = new.nodes.iter().map(|n| n.id).collect();
        let expected: Vec<u32> = old_ids.difference(&new_ids).copied().collect();
        assert_eq!(cs.nodes.removed, expected);
        assert_eq!(cs.nodes.removed.len(), 2);
        assert!(cs.degenerative);
    }

    #[test]
    fn diff_reports_modifications() {
        let old = canonicalize(&two_bar_truss()).unwrap();
        let mut new = old.clone();
        new.nodes[2].y = 1.5;
        let cs = diff(&old, &new);
        assert_eq!(cs.nodes.modified, vec![3]);
        assert!(!cs.degenerative);
    }

    #[test]
    fn round_trip_two_bar_truss() {
        let m = canonicalize(&two_bar_truss()).unwrap();
        assert_eq!(deserialize(&serialize(&m)).unwrap(), m);
    }

    #[test]
    fn bad_area_reports_path() {
        let m = canonicalize(&two_bar_truss()).unwrap();
        let text = serialize(&m).replace("\"area\": 0.001", "\"area\": \"abc\"");
        let err = deserialize(&text).unwrap_err();
        assert_eq!(err.path, "sections[0].area");
    }

    #[test]
    fn empty_node_array_parses() {
        let mut m = canonicalize(&two_bar_truss()).unwrap();
        m.nodes.clear();
        m.elements.clear();
        m.bcs.clear();
        m.loads.clear();
        let back = deserialize(&serialize(&m)).unwrap();
        assert!(back.nodes.is_empty());
    }

    #[test]
    fn unknown_and_missing_fields_are_rejected() {
        let err = deserialize(r#"{"nodes": []}"#).unwrap_err();
        assert!(err.message.contains("elements"), "{}", err.message);
        let m = canonicalize(&two_bar_truss()).unwrap();
        let text = serialize(&m).replacen("\"x\"", "\"xx\"", 1);
        assert_eq!(deserialize(&text).unwrap_err().path, "nodes[0].xx");
    }
}

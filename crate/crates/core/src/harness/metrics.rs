use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ir::{bounding_box, Dof, IrModel, NodeId};
use crate::validation::check_l1;

/// Matching radius as a fraction of the truth bounding-box diagonal.
pub const DEFAULT_MATCH_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub schema_valid: bool,
    pub node_accuracy: f64,
    pub connectivity_f1: f64,
    pub bc_detection: f64,
    /// Mean of node accuracy and connectivity F1.
    pub overall: f64,
    /// Unknown when only the IR was compared.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution_success: Option<bool>,
}

impl Metrics {
    pub fn is_perfect(&self) -> bool {
        self.schema_valid
            && self.node_accuracy == 1.0
            && self.connectivity_f1 == 1.0
            && self.bc_detection == 1.0
            && self.overall == 1.0
    }
}

/// Positions keyed by node id. Models in different coordinate modes are both
/// fitted into the unit square first.
fn aligned(model: &IrModel, normalize: bool) -> BTreeMap<NodeId, (f64, f64)> {
    let pts = model.nodes.iter().map(|n| (n.id, (n.x, n.y)));
    if !normalize {
        return pts.collect();
    }
    let Some((lo, hi)) = bounding_box(model.nodes.iter().map(|n| (n.x, n.y))) else {
        return BTreeMap::new();
    };
    let extent = (hi.0 - lo.0).max(hi.1 - lo.1);
    let k = if extent > 0.0 { 1.0 / extent } else { 0.0 };
    pts.map(|(id, (x, y))| (id, ((x - lo.0) * k, (y - lo.1) * k))).collect()
}

/// Greedy nearest-neighbour matching over all candidate pairs sorted by
/// distance (ties by id), so the result does not depend on declaration order.
/// Returns predicted id -> truth id.
pub fn match_nodes(predicted: &IrModel, truth: &IrModel, tol: f64) -> BTreeMap<NodeId, NodeId> {
    let normalize = predicted.coordinate_mode != truth.coordinate_mode;
    let p = aligned(predicted, normalize);
    let t = aligned(truth, normalize);
    let diag = bounding_box(t.values().copied()).map_or(0.0, |(lo, hi)| (hi.0 - lo.0).hypot(hi.1 - lo.1));
    let radius = tol * diag;
    let mut pairs: Vec<(f64, NodeId, NodeId)> = Vec::new();
    for (&pi, &(px, py)) in &p {
        for (&ti, &(tx, ty)) in &t {
            let d = (px - tx).hypot(py - ty);
            if d <= radius {
                pairs.push((d, pi, ti));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = BTreeMap::new();
    let mut used = BTreeSet::new();
    for (_, pi, ti) in pairs {
        if !out.contains_key(&pi) && !used.contains(&ti) {
            out.insert(pi, ti);
            used.insert(ti);
        }
    }
    out
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

fn edge_set(model: &IrModel) -> BTreeSet<(NodeId, NodeId)> {
    model.elements.iter().map(|e| e.unordered_nodes()).filter(|(a, b)| a != b).collect()
}

/// Compares a predicted IR with ground truth. `tol` scales the truth diagonal
/// into the node matching radius. Predictions failing L1 still get
/// best-effort geometric metrics with `schema_valid = false`.
pub fn evaluate_ir(predicted: &IrModel, truth: &IrModel, tol: f64) -> Metrics {
    let matching = match_nodes(predicted, truth, tol);
    let node_accuracy = ratio(matching.len(), predicted.nodes.len().max(truth.nodes.len()));

    let truth_edges = edge_set(truth);
    let pred_edges = edge_set(predicted);
    let tp = pred_edges
        .iter()
        .filter_map(|(a, b)| {
            let (x, y) = (*matching.get(a)?, *matching.get(b)?);
            Some((x.min(y), x.max(y)))
        })
        .collect::<BTreeSet<_>>()
        .intersection(&truth_edges)
        .count();
    let fp = pred_edges.len() - tp.min(pred_edges.len());
    let fn_ = truth_edges.len() - tp;
    let connectivity_f1 = if pred_edges.is_empty() && truth_edges.is_empty() {
        1.0
    } else {
        (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
    };

    let by_truth: BTreeMap<NodeId, NodeId> = matching.iter().map(|(p, t)| (*t, *p)).collect();
    let dofs = |m: &IrModel, node: NodeId| -> BTreeSet<Dof> {
        m.bcs.iter().filter(|b| b.node == node).flat_map(|b| b.dofs.iter().copied()).collect()
    };
    let truth_bcs: BTreeSet<NodeId> = truth.bcs.iter().filter(|b| !b.dofs.is_empty()).map(|b| b.node).collect();
    let detected = truth_bcs
        .iter()
        .filter(|t| by_truth.get(t).is_some_and(|p| dofs(predicted, *p) == dofs(truth, **t)))
        .count();
    let bc_detection = ratio(detected, truth_bcs.len());

    Metrics {
        schema_valid: check_l1(predicted).is_empty(),
        node_accuracy,
        connectivity_f1,
        bc_detection,
        overall: (node_accuracy + connectivity_f1) / 2.0,
        execution_success: None,
    }
}

pub fn evaluate(predicted: &IrModel, truth: &IrModel) -> Metrics {
    evaluate_ir(predicted, truth, DEFAULT_MATCH_TOLERANCE)
}

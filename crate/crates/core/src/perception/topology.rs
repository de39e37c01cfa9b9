use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::drawing::{Pixel, PrimitiveDrawing, StrokeClass};

pub const DEFAULT_SNAP_TOLERANCE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopoNode {
    pub id: u32,
    /// Cluster centroid in pixel space.
    pub pixel: Pixel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopoEdge {
    pub id: u32,
    pub nodes: [u32; 2],
    pub segment_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub nodes: Vec<TopoNode>,
    pub edges: Vec<TopoEdge>,
    pub snap_tolerance: f64,
}

impl Topology {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nearest node to `p` and its pixel distance.
    pub fn nearest_node(&self, p: Pixel) -> Option<(u32, f64)> {
        self.nodes
            .iter()
            .map(|n| (n.id, (n.pixel[0] - p[0]).hypot(n.pixel[1] - p[1])))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("structural segment {segment_index} collapses to a single node after snapping")]
    DegenerateElement { segment_index: usize },
    #[error("snap tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the lower index as root so cluster order follows first appearance
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

/// Clusters structural endpoints by single linkage (distance <= tolerance)
/// and emits one edge per structural segment. Node ids follow the order in
/// which clusters are first touched (segment order, `p1` before `p2`).
pub fn infer_topology(
    drawing: &PrimitiveDrawing,
    snap_tolerance: f64,
) -> Result<Topology, TopologyError> {
    if !(snap_tolerance.is_finite() && snap_tolerance > 0.0) {
        return Err(TopologyError::InvalidTolerance(snap_tolerance));
    }
    let structural: Vec<(usize, Pixel, Pixel)> = drawing
        .segments
        .iter()
        .enumerate()
        .filter(|(_, s)| s.stroke_class == StrokeClass::Structural)
        .map(|(i, s)| (i, s.p1, s.p2))
        .collect();
    let points: Vec<Pixel> = structural.iter().flat_map(|&(_, a, b)| [a, b]).collect();

    let mut sets = DisjointSet::new(points.len());
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = (points[i][0] - points[j][0]).hypot(points[i][1] - points[j][1]);
            if d <= snap_tolerance {
                sets.union(i, j);
            }
        }
    }

    let mut cluster_of_root = std::collections::HashMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut cluster = vec![0usize; points.len()];
    for (i, slot) in cluster.iter_mut().enumerate() {
        let root = sets.find(i);
        let c = *cluster_of_root.entry(root).or_insert_with(|| {
            members.push(Vec::new());
            members.len() - 1
        });
        members[c].push(i);
        *slot = c;
    }

    let nodes = members
        .iter()
        .enumerate()
        .map(|(c, idx)| {
            let n = idx.len() as f64;
            let sx: f64 = idx.iter().map(|&i| points[i][0]).sum();
            let sy: f64 = idx.iter().map(|&i| points[i][1]).sum();
            TopoNode {
                id: c as u32 + 1,
                pixel: [sx / n, sy / n],
            }
        })
        .collect();

    let mut edges = Vec::with_capacity(structural.len());
    for (k, &(segment_index, _, _)) in structural.iter().enumerate() {
        let (a, b) = (cluster[2 * k], cluster[2 * k + 1]);
        if a == b {
            return Err(TopologyError::DegenerateElement { segment_index });
        }
        edges.push(TopoEdge {
            id: k as u32 + 1,
            nodes: [a as u32 + 1, b as u32 + 1],
            segment_index,
        });
    }
    Ok(Topology {
        nodes,
        edges,
        snap_tolerance,
    })
}

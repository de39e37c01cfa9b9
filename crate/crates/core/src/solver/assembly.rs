//! Direct stiffness assembly for planar truss bars and Euler-Bernoulli frame
//! beams, with consistent mass matrices.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector, SMatrix};

use super::SolverError;
use crate::ir::{Dof, Element, ElementKind, IrModel, NodeId};

pub type Mat4 = SMatrix<f64, 4, 4>;
pub type Mat6 = SMatrix<f64, 6, 6>;

/// Global equation numbering. Every node gets `ux` and `uy`; `rz` exists only
/// at nodes attached to a frame element.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DofMap {
    index: BTreeMap<(NodeId, Dof), usize>,
    len: usize,
}

impl DofMap {
    pub fn build(model: &IrModel) -> Self {
        let rotational = model.rotational_nodes();
        let mut nodes: Vec<NodeId> = model.nodes.iter().map(|n| n.id).collect();
        nodes.sort_unstable();
        let mut index = BTreeMap::new();
        let mut len = 0;
        for id in nodes {
            for dof in Dof::ALL {
                if dof == Dof::Rz && !rotational.contains(&id) {
                    continue;
                }
                index.insert((id, dof), len);
                len += 1;
            }
        }
        Self { index, len }
    }

    pub fn get(&self, node: NodeId, dof: Dof) -> Option<usize> {
        self.index.get(&(node, dof)).copied()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = ((NodeId, Dof), usize)> + '_ {
        self.index.iter().map(|(k, v)| (*k, *v))
    }
}

#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub dof_map: DofMap,
    pub stiffness: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub loads: DVector<f64>,
    pub constrained: BTreeSet<usize>,
}

impl AssembledSystem {
    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.dof_map.len())
            .filter(|i| !self.constrained.contains(i))
            .collect()
    }

    pub fn constrained_dofs(&self) -> Vec<usize> {
        self.constrained.iter().copied().collect()
    }
}

/// Geometry and section data of one element, resolved from the model.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub length: f64,
    pub cos: f64,
    pub sin: f64,
    pub youngs_modulus: f64,
    pub density: f64,
    pub area: f64,
    pub inertia: f64,
}

pub fn element_geometry(model: &IrModel, e: &Element) -> Result<ElementGeometry, SolverError> {
    let missing = |what: &str| SolverError::Assembly(format!("element {}: {what}", e.id));
    let a = model.node(e.nodes[0]).ok_or_else(|| missing("start node missing"))?;
    let b = model.node(e.nodes[1]).ok_or_else(|| missing("end node missing"))?;
    let section = model.section(e.section).ok_or_else(|| missing("section missing"))?;
    let material = model
        .material(section.material)
        .ok_or_else(|| missing("material missing"))?;
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let length = dx.hypot(dy);
    if !(length.is_finite() && length > 0.0) {
        return Err(SolverError::Assembly(format!("element {} has zero length", e.id)));
    }
    let inertia = match e.kind {
        ElementKind::FrameBeam => section
            .moment_of_inertia
            .ok_or_else(|| missing("frame section has no moment_of_inertia"))?,
        ElementKind::TrussBar => 0.0,
    };
    Ok(ElementGeometry {
        length,
        cos: dx / length,
        sin: dy / length,
        youngs_modulus: material.youngs_modulus,
        density: material.density,
        area: section.area,
        inertia,
    })
}

/// Global 4x4 stiffness of a bar, dofs `(ux1, uy1, ux2, uy2)`.
pub fn truss_stiffness(g: &ElementGeometry) -> Mat4 {
    let k = g.youngs_modulus * g.area / g.length;
    let (c, s) = (g.cos, g.sin);
    let b = [-c, -s, c, s];
    Mat4::from_fn(|i, j| k * b[i] * b[j])
}

/// Consistent bar mass; isotropic so it needs no rotation.
pub fn truss_mass(g: &ElementGeometry) -> Mat4 {
    let m = g.density * g.area * g.length / 6.0;
    Mat4::from_fn(|i, j| {
        if i == j {
            2.0 * m
        } else if i % 2 == j % 2 {
            m
        } else {
            0.0
        }
    })
}

/// Local frame stiffness, dofs `(u1, v1, θ1, u2, v2, θ2)`.
pub fn frame_local_stiffness(g: &ElementGeometry) -> Mat6 {
    let (e, a, i, l) = (g.youngs_modulus, g.area, g.inertia, g.length);
    let ea = e * a / l;
    let k1 = 12.0 * e * i / l.powi(3);
    let k2 = 6.0 * e * i / l.powi(2);
    let k3 = 4.0 * e * i / l;
    let k4 = 2.0 * e * i / l;
    Mat6::from_row_slice(&[
        ea, 0.0, 0.0, -ea, 0.0, 0.0, //
        0.0, k1, k2, 0.0, -k1, k2, //
        0.0, k2, k3, 0.0, -k2, k4, //
        -ea, 0.0, 0.0, ea, 0.0, 0.0, //
        0.0, -k1, -k2, 0.0, k1, -k2, //
        0.0, k2, k4, 0.0, -k2, k3,
    ])
}

pub fn frame_local_mass(g: &ElementGeometry) -> Mat6 {
    let l = g.length;
    let m = g.density * g.area * l;
    let a = m / 6.0;
    let b = m / 420.0;
    Mat6::from_row_slice(&[
        2.0 * a, 0.0, 0.0, a, 0.0, 0.0, //
        0.0, 156.0 * b, 22.0 * l * b, 0.0, 54.0 * b, -13.0 * l * b, //
        0.0, 22.0 * l * b, 4.0 * l * l * b, 0.0, 13.0 * l * b, -3.0 * l * l * b, //
        a, 0.0, 0.0, 2.0 * a, 0.0, 0.0, //
        0.0, 54.0 * b, 13.0 * l * b, 0.0, 156.0 * b, -22.0 * l * b, //
        0.0, -13.0 * l * b, -3.0 * l * l * b, 0.0, -22.0 * l * b, 4.0 * l * l * b,
    ])
}

/// Global-to-local rotation for a frame element.
pub fn frame_rotation(g: &ElementGeometry) -> Mat6 {
    let (c, s) = (g.cos, g.sin);
    let mut t = Mat6::zeros();
    for k in [0, 3] {
        t[(k, k)] = c;
        t[(k, k + 1)] = s;
        t[(k + 1, k)] = -s;
        t[(k + 1, k + 1)] = c;
        t[(k + 2, k + 2)] = 1.0;
    }
    t
}

pub fn frame_stiffness(g: &ElementGeometry) -> Mat6 {
    let t = frame_rotation(g);
    t.transpose() * frame_local_stiffness(g) * t
}

pub fn frame_mass(g: &ElementGeometry) -> Mat6 {
    let t = frame_rotation(g);
    t.transpose() * frame_local_mass(g) * t
}

/// Global equation numbers of an element's dofs, in element-matrix order.
pub fn element_dofs(map: &DofMap, e: &Element) -> Vec<usize> {
    let dofs: &[Dof] = match e.kind {
        ElementKind::TrussBar => &[Dof::Ux, Dof::Uy],
        ElementKind::FrameBeam => &Dof::ALL,
    };
    e.nodes
        .iter()
        .flat_map(|&n| dofs.iter().map(move |&d| map.get(n, d).expect("dof map covers every element node")))
        .collect()
}

fn scatter(target: &mut DMatrix<f64>, dofs: &[usize], local: impl Fn(usize, usize) -> f64) {
    for (i, &gi) in dofs.iter().enumerate() {
        for (j, &gj) in dofs.iter().enumerate() {
            target[(gi, gj)] += local(i, j);
        }
    }
}

pub fn assemble(model: &IrModel) -> Result<AssembledSystem, SolverError> {
    assemble_with_areas(model, None)
}

/// Assembles with per-element area overrides (same order as `model.elements`).
pub fn assemble_with_areas(model: &IrModel, areas: Option<&[f64]>) -> Result<AssembledSystem, SolverError> {
    let dof_map = DofMap::build(model);
    let n = dof_map.len();
    let mut stiffness = DMatrix::zeros(n, n);
    let mut mass = DMatrix::zeros(n, n);
    for (idx, e) in model.elements.iter().enumerate() {
        let mut g = element_geometry(model, e)?;
        if let Some(a) = areas {
            g.area = a[idx];
        }
        let dofs = element_dofs(&dof_map, e);
        match e.kind {
            ElementKind::TrussBar => {
                let (k, m) = (truss_stiffness(&g), truss_mass(&g));
                scatter(&mut stiffness, &dofs, |i, j| k[(i, j)]);
                scatter(&mut mass, &dofs, |i, j| m[(i, j)]);
            }
            ElementKind::FrameBeam => {
                let (k, m) = (frame_stiffness(&g), frame_mass(&g));
                scatter(&mut stiffness, &dofs, |i, j| k[(i, j)]);
                scatter(&mut mass, &dofs, |i, j| m[(i, j)]);
            }
        }
    }

    let mut loads = DVector::zeros(n);
    for l in &model.loads {
        for (dof, v) in [(Dof::Ux, l.fx), (Dof::Uy, l.fy), (Dof::Rz, l.mz)] {
            match dof_map.get(l.node, dof) {
                Some(i) => loads[i] += v,
                None if v != 0.0 => {
                    return Err(SolverError::Assembly(format!(
                        "moment load at node {} which has no rotational stiffness",
                        l.node
                    )))
                }
                None => {}
            }
        }
    }

    let mut constrained = BTreeSet::new();
    for b in &model.bcs {
        for &d in &b.dofs {
            if let Some(i) = dof_map.get(b.node, d) {
                constrained.insert(i);
            }
        }
    }
    Ok(AssembledSystem {
        dof_map,
        stiffness,
        mass,
        loads,
        constrained,
    })
}

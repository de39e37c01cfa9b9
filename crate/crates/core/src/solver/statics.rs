use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::assembly::{
    assemble_with_areas, element_dofs, element_geometry, frame_local_stiffness, frame_rotation, AssembledSystem,
};
use super::linalg::{cholesky, submatrix, subvector};
use super::{SolverError, SolverOptions};
use crate::ir::{Dof, ElementKind, IrModel, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeDisplacement {
    pub node: NodeId,
    pub ux: f64,
    pub uy: f64,
    pub rz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    pub node: NodeId,
    pub fx: f64,
    pub fy: f64,
    pub mz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementForces {
    pub element: u32,
    pub kind: ElementKind,
    /// Tension positive, N.
    pub axial_force: f64,
    /// Axial force over area, Pa.
    pub axial_stress: f64,
    /// Local end forces `(N1, V1, M1, N2, V2, M2)` for frame beams.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_forces: Option<[f64; 6]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticResult {
    pub displacements: Vec<NodeDisplacement>,
    pub reactions: Vec<Reaction>,
    pub elements: Vec<ElementForces>,
    /// `fᵀu`, twice the strain energy.
    pub compliance: f64,
    pub equilibrium_residual: f64,
}

impl StaticResult {
    pub fn max_displacement(&self) -> f64 {
        self.displacements
            .iter()
            .map(|d| d.ux.hypot(d.uy))
            .fold(0.0, f64::max)
    }

    pub fn max_abs_stress(&self) -> f64 {
        self.elements.iter().map(|e| e.axial_stress.abs()).fold(0.0, f64::max)
    }

    pub fn displacement(&self, node: NodeId) -> Option<&NodeDisplacement> {
        self.displacements.iter().find(|d| d.node == node)
    }

    pub fn element(&self, id: u32) -> Option<&ElementForces> {
        self.elements.iter().find(|e| e.element == id)
    }

    pub fn is_finite(&self) -> bool {
        self.displacements.iter().all(|d| d.ux.is_finite() && d.uy.is_finite() && d.rz.is_finite())
            && self.reactions.iter().all(|r| r.fx.is_finite() && r.fy.is_finite() && r.mz.is_finite())
            && self.elements.iter().all(|e| e.axial_force.is_finite() && e.axial_stress.is_finite())
            && self.compliance.is_finite()
            && self.equilibrium_residual.is_finite()
    }
}

/// Free-dof displacement vector of an assembled system.
pub(crate) fn solve_free(sys: &AssembledSystem, opts: &SolverOptions) -> Result<(DVector<f64>, f64), SolverError> {
    let free = sys.free_dofs();
    let k_ff = submatrix(&sys.stiffness, &free, &free);
    let f_f = subvector(&sys.loads, &free);
    let chol = cholesky(&k_ff, opts.pivot_tolerance).map_err(|col| SolverError::singular(sys, free[col]))?;
    let u_f = chol.solve(&f_f);
    let residual = (&k_ff * &u_f - &f_f).norm() / f_f.norm().max(1.0);
    let mut u = DVector::zeros(sys.dof_map.len());
    for (i, &g) in free.iter().enumerate() {
        u[g] = u_f[i];
    }
    Ok((u, residual))
}

pub fn solve_static(model: &IrModel) -> Result<StaticResult, SolverError> {
    solve_static_with(model, &SolverOptions::default())
}

pub fn solve_static_with(model: &IrModel, opts: &SolverOptions) -> Result<StaticResult, SolverError> {
    solve_static_areas(model, None, opts)
}

pub(crate) fn solve_static_areas(
    model: &IrModel,
    areas: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<StaticResult, SolverError> {
    let sys = assemble_with_areas(model, areas)?;
    let (u, residual) = solve_free(&sys, opts)?;
    let reaction_vec = &sys.stiffness * &u - &sys.loads;

    let value = |vec: &DVector<f64>, node, dof| sys.dof_map.get(node, dof).map_or(0.0, |i| vec[i]);
    let mut nodes: Vec<NodeId> = model.nodes.iter().map(|n| n.id).collect();
    nodes.sort_unstable();
    let displacements = nodes
        .iter()
        .map(|&n| NodeDisplacement {
            node: n,
            ux: value(&u, n, Dof::Ux),
            uy: value(&u, n, Dof::Uy),
            rz: value(&u, n, Dof::Rz),
        })
        .collect();

    let reaction_at = |node, dof| match sys.dof_map.get(node, dof) {
        Some(i) if sys.constrained.contains(&i) => reaction_vec[i],
        _ => 0.0,
    };
    let reactions = nodes
        .iter()
        .filter(|&&n| Dof::ALL.iter().any(|&d| sys.dof_map.get(n, d).is_some_and(|i| sys.constrained.contains(&i))))
        .map(|&n| Reaction {
            node: n,
            fx: reaction_at(n, Dof::Ux),
            fy: reaction_at(n, Dof::Uy),
            mz: reaction_at(n, Dof::Rz),
        })
        .collect();

    let mut elements = Vec::with_capacity(model.elements.len());
    for (idx, e) in model.elements.iter().enumerate() {
        let mut g = element_geometry(model, e)?;
        if let Some(a) = areas {
            g.area = a[idx];
        }
        let ue: Vec<f64> = element_dofs(&sys.dof_map, e).iter().map(|&i| u[i]).collect();
        let forces = match e.kind {
            ElementKind::TrussBar => {
                let elong = g.cos * (ue[2] - ue[0]) + g.sin * (ue[3] - ue[1]);
                let n = g.youngs_modulus * g.area / g.length * elong;
                ElementForces {
                    element: e.id,
                    kind: e.kind,
                    axial_force: n,
                    axial_stress: n / g.area,
                    end_forces: None,
                }
            }
            ElementKind::FrameBeam => {
                let t = frame_rotation(&g);
                let ul = t * nalgebra::SVector::<f64, 6>::from_column_slice(&ue);
                let fl = frame_local_stiffness(&g) * ul;
                let n = fl[3];
                ElementForces {
                    element: e.id,
                    kind: e.kind,
                    axial_force: n,
                    axial_stress: n / g.area,
                    end_forces: Some([fl[0], fl[1], fl[2], fl[3], fl[4], fl[5]]),
                }
            }
        };
        elements.push(forces);
    }

    Ok(StaticResult {
        displacements,
        reactions,
        elements,
        compliance: sys.loads.dot(&u),
        equilibrium_residual: residual,
    })
}

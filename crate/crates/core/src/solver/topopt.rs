//! Ground-structure sizing optimization: minimize compliance `fᵀu` over bar
//! areas under a material-volume budget, using the optimality-criteria
//! fixed-point update with a bisected Lagrange multiplier.

use serde::{Deserialize, Serialize};

use super::assembly::{element_dofs, element_geometry, truss_stiffness, DofMap};
use super::statics::solve_static_areas;
use super::{SolverError, SolverOptions};
use crate::ir::{ElementKind, IrModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcParameters {
    /// Largest per-iteration area change as a fraction of `a_max`.
    pub move_limit: f64,
    /// Damping exponent on the optimality ratio.
    pub damping: f64,
    /// `a_min = min_area_ratio * a_max`.
    pub min_area_ratio: f64,
    /// Stop when every area changes by less than this fraction of `a_max`.
    pub tolerance: f64,
}

impl Default for OcParameters {
    fn default() -> Self {
        Self {
            move_limit: 0.2,
            damping: 0.5,
            min_area_ratio: 1e-6,
            tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementArea {
    pub element: u32,
    pub area: f64,
    pub min_area: f64,
    pub max_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoResult {
    pub areas: Vec<ElementArea>,
    /// Compliance of every evaluated design: the uniform start first, the final design last.
    pub compliance_history: Vec<f64>,
    pub final_volume_fraction: f64,
    pub target_volume_fraction: f64,
    pub iterations: u32,
    pub converged: bool,
}

impl TopoResult {
    pub fn final_compliance(&self) -> f64 {
        *self.compliance_history.last().expect("history always holds the start design")
    }
}

pub fn optimize_topology(model: &IrModel, volfrac: f64, max_iters: u32) -> Result<TopoResult, SolverError> {
    optimize_topology_with(model, volfrac, max_iters, &OcParameters::default(), &SolverOptions::default())
}

pub fn optimize_topology_with(
    model: &IrModel,
    volfrac: f64,
    max_iters: u32,
    params: &OcParameters,
    opts: &SolverOptions,
) -> Result<TopoResult, SolverError> {
    if let Some(e) = model.elements.iter().find(|e| e.kind != ElementKind::TrussBar) {
        return Err(SolverError::UnsupportedOptimization(format!(
            "element {} is a {}; ground-structure optimization needs truss bars only",
            e.id,
            e.kind.as_str()
        )));
    }
    if !(volfrac > 0.0 && volfrac <= 1.0) {
        return Err(SolverError::InvalidInput(format!("volume fraction {volfrac} outside (0, 1]")));
    }
    if max_iters == 0 {
        return Err(SolverError::InvalidInput("max_iters must be positive".into()));
    }

    let geometry = model
        .elements
        .iter()
        .map(|e| element_geometry(model, e))
        .collect::<Result<Vec<_>, _>>()?;
    let a_max: Vec<f64> = geometry.iter().map(|g| g.area).collect();
    let a_min: Vec<f64> = a_max.iter().map(|a| a * params.min_area_ratio).collect();
    let lengths: Vec<f64> = geometry.iter().map(|g| g.length).collect();
    let max_volume: f64 = a_max.iter().zip(&lengths).map(|(a, l)| a * l).sum();
    let target = volfrac * max_volume;
    let volume = |a: &[f64]| a.iter().zip(&lengths).map(|(a, l)| a * l).sum::<f64>();
    let largest_area = a_max.iter().cloned().fold(0.0, f64::max);

    // unit-area element stiffness matrices
    let map = DofMap::build(model);
    let unit_k: Vec<_> = geometry
        .iter()
        .map(|g| {
            let mut unit = *g;
            unit.area = 1.0;
            truss_stiffness(&unit)
        })
        .collect();
    let dofs: Vec<Vec<usize>> = model.elements.iter().map(|e| element_dofs(&map, e)).collect();

    let mut areas: Vec<f64> = a_max.iter().map(|a| volfrac * a).collect();
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iters {
        let state = solve_static_areas(model, Some(&areas), opts)?;
        history.push(state.compliance);
        let u = nodal_vector(&map, &state);

        // strain-energy density: -dC/da_e = u_eᵀ k⁰_e u_e
        let energy: Vec<f64> = dofs
            .iter()
            .zip(&unit_k)
            .map(|(d, k)| {
                let ue = nalgebra::Vector4::new(u[d[0]], u[d[1]], u[d[2]], u[d[3]]);
                (ue.transpose() * k * ue)[0].max(0.0)
            })
            .collect();

        let update = |lambda: f64| -> Vec<f64> {
            areas
                .iter()
                .enumerate()
                .map(|(e, &a)| {
                    let step = params.move_limit * a_max[e];
                    let lo = a_min[e].max(a - step);
                    let hi = a_max[e].min(a + step);
                    let ratio = energy[e] / (lambda * lengths[e]);
                    (a * ratio.powf(params.damping)).clamp(lo, hi)
                })
                .collect()
        };

        // bracket: l_hi always yields a feasible design
        let (mut l_lo, mut l_hi) = (0.0f64, 1.0f64);
        let mut guard = 0;
        while volume(&update(l_hi)) > target && guard < 2000 {
            l_lo = l_hi;
            l_hi *= 2.0;
            guard += 1;
        }
        for _ in 0..200 {
            let mid = 0.5 * (l_lo + l_hi);
            if mid <= l_lo || mid >= l_hi {
                break;
            }
            if volume(&update(mid)) > target {
                l_lo = mid;
            } else {
                l_hi = mid;
            }
        }
        let next = update(l_hi);
        let change = next
            .iter()
            .zip(&areas)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        areas = next;
        iterations += 1;
        if change < params.tolerance * largest_area {
            converged = true;
            break;
        }
    }
    let final_state = solve_static_areas(model, Some(&areas), opts)?;
    history.push(final_state.compliance);

    Ok(TopoResult {
        areas: model
            .elements
            .iter()
            .enumerate()
            .map(|(i, e)| ElementArea {
                element: e.id,
                area: areas[i],
                min_area: a_min[i],
                max_area: a_max[i],
            })
            .collect(),
        compliance_history: history,
        final_volume_fraction: volume(&areas) / max_volume,
        target_volume_fraction: volfrac,
        iterations,
        converged,
    })
}

fn nodal_vector(map: &DofMap, state: &super::statics::StaticResult) -> Vec<f64> {
    let mut u = vec![0.0; map.len()];
    for d in &state.displacements {
        for (dof, v) in [(crate::ir::Dof::Ux, d.ux), (crate::ir::Dof::Uy, d.uy)] {
            if let Some(i) = map.get(d.node, dof) {
                u[i] = v;
            }
        }
    }
    u
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::ir::fixtures::*;
    use crate::ir::{BoundaryCondition, Dof, Element, Load, Node, Section};

    /// Fully connected ground structure on a 3x2 grid spanning 2 m x 1 m, pinned at
    /// both bottom corners and loaded downward at bottom mid-span. Mirror symmetric about x = 1.
    pub fn ground_structure() -> IrModel {
        let mut nodes = Vec::new();
        for (j, y) in [0.0, 1.0].iter().enumerate() {
            for (i, x) in [0.0, 1.0, 2.0].iter().enumerate() {
                nodes.push(Node::new((j * 3 + i) as u32 + 1, *x, *y));
            }
        }
        let mut elements = Vec::new();
        for a in 0..nodes.len() {
            for b in (a + 1)..nodes.len() {
                let (p, q) = (nodes[a], nodes[b]);
                // skip bars that pass straight through another node
                let overlaps = nodes.iter().any(|r| {
                    r.id != p.id && r.id != q.id && {
                        let cross = (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
                        let dot = (r.x - p.x) * (q.x - p.x) + (r.y - p.y) * (q.y - p.y);
                        cross.abs() < 1e-12 && dot > 0.0 && dot < p.distance_to(&q).powi(2)
                    }
                });
                if !overlaps {
                    elements.push(Element { id: elements.len() as u32 + 1, kind: ElementKind::TrussBar, nodes: [p.id, q.id], section: 1 });
                }
            }
        }
        IrModel {
            nodes,
            elements,
            materials: vec![steel()],
            sections: vec![Section { id: 1, material: 1, area: 1e-3, moment_of_inertia: None }],
            bcs: vec![
                BoundaryCondition { node: 1, dofs: vec![Dof::Ux, Dof::Uy] },
                BoundaryCondition { node: 3, dofs: vec![Dof::Ux, Dof::Uy] },
            ],
            loads: vec![Load { node: 2, fx: 0.0, fy: -10_000.0, mz: 0.0 }],
            ..IrModel::default()
        }
    }

    fn mirror_of(model: &IrModel, id: u32) -> u32 {
        let e = model.element(id).unwrap();
        let flip = |n: u32| {
            let p = model.node(n).unwrap();
            model.nodes.iter().find(|q| (q.x - (2.0 - p.x)).abs() < 1e-12 && (q.y - p.y).abs() < 1e-12).unwrap().id
        };
        let (a, b) = (flip(e.nodes[0]), flip(e.nodes[1]));
        model.elements.iter().find(|f| f.unordered_nodes() == (a.min(b), a.max(b))).unwrap().id
    }

    #[test]
    fn volume_budget_is_respected() {
        let m = ground_structure();
        let r = optimize_topology(&m, 0.5, 60).unwrap();
        assert!(r.final_volume_fraction <= 0.5 + 1e-6, "{}", r.final_volume_fraction);
        assert!(r.areas.iter().all(|a| a.area >= a.min_area && a.area <= a.max_area));
    }

    #[test]
    fn compliance_improves_on_uniform_start() {
        let m = ground_structure();
        let r = optimize_topology(&m, 0.5, 60).unwrap();
        let uniform: Vec<f64> = m.elements.iter().map(|_| 0.5e-3).collect();
        let c0 = solve_static_areas(&m, Some(&uniform), &SolverOptions::default()).unwrap().compliance;
        assert!((r.compliance_history[0] - c0).abs() <= 1e-12 * c0);
        assert!(r.final_compliance() < c0);
    }

    #[test]
    fn compliance_history_does_not_increase() {
        let r = optimize_topology(&ground_structure(), 0.5, 60).unwrap();
        for w in r.compliance_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{:?}", r.compliance_history);
        }
    }

    #[test]
    fn symmetric_problem_gives_symmetric_areas() {
        let m = ground_structure();
        let r = optimize_topology(&m, 0.5, 60).unwrap();
        let area = |id| r.areas.iter().find(|a| a.element == id).unwrap().area;
        for e in &m.elements {
            let twin = mirror_of(&m, e.id);
            assert!((area(e.id) - area(twin)).abs() <= 1e-6 * 1e-3, "{} vs {}", e.id, twin);
        }
    }

    #[test]
    fn frames_are_rejected() {
        assert!(matches!(
            optimize_topology(&cantilever(2.0, 1.0), 0.5, 10),
            Err(SolverError::UnsupportedOptimization(_))
        ));
    }
}

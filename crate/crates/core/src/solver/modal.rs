use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::assembly::assemble;
use super::linalg::{cholesky, submatrix};
use super::statics::NodeDisplacement;
use super::{SolverError, SolverOptions};
use crate::ir::{Dof, Element, ElementKind, IrModel, Node};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeShape {
    pub frequency: f64,
    /// Components at the original model nodes, scaled so the largest
    /// translational magnitude is 1 (and positive).
    pub components: Vec<NodeDisplacement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalResult {
    /// Natural frequencies in Hz, ascending.
    pub frequencies: Vec<f64>,
    pub mode_shapes: Vec<ModeShape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
}

/// Splits every frame element into `parts` equal sub-elements. New nodes get
/// ids above the current maximum; truss bars are left alone.
pub fn subdivide_frames(model: &IrModel, parts: usize) -> IrModel {
    if parts <= 1 {
        return model.clone();
    }
    let mut out = model.clone();
    out.elements.clear();
    let mut next_node = model.nodes.iter().map(|n| n.id).max().unwrap_or(0) + 1;
    let mut next_elem = model.elements.iter().map(|e| e.id).max().unwrap_or(0) + 1;
    for e in &model.elements {
        let (Some(a), Some(b)) = (model.node(e.nodes[0]), model.node(e.nodes[1])) else {
            out.elements.push(*e);
            continue;
        };
        if e.kind != ElementKind::FrameBeam {
            out.elements.push(*e);
            continue;
        }
        let mut chain = vec![a.id];
        for k in 1..parts {
            let t = k as f64 / parts as f64;
            out.nodes.push(Node::new(next_node, a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
            chain.push(next_node);
            next_node += 1;
        }
        chain.push(b.id);
        for (k, pair) in chain.windows(2).enumerate() {
            let id = if k == 0 {
                e.id
            } else {
                next_elem += 1;
                next_elem - 1
            };
            out.elements.push(Element {
                id,
                kind: e.kind,
                nodes: [pair[0], pair[1]],
                section: e.section,
            });
        }
    }
    out
}

pub fn solve_modal(model: &IrModel, count: usize) -> Result<ModalResult, SolverError> {
    solve_modal_with(model, count, &SolverOptions::default())
}

/// Solves `K φ = ω² M φ` on the free dofs by reducing with the Cholesky
/// factor of `M` to a standard symmetric eigenproblem.
pub fn solve_modal_with(model: &IrModel, count: usize, opts: &SolverOptions) -> Result<ModalResult, SolverError> {
    if count == 0 {
        return Err(SolverError::InvalidInput("modal count must be at least 1".into()));
    }
    let refined = subdivide_frames(model, opts.modal_subdivisions);
    let sys = assemble(&refined)?;
    let free = sys.free_dofs();
    if free.is_empty() {
        return Err(SolverError::InvalidInput("model has no free degrees of freedom".into()));
    }
    let k_ff = submatrix(&sys.stiffness, &free, &free);
    let m_ff = submatrix(&sys.mass, &free, &free);
    cholesky(&k_ff, opts.pivot_tolerance).map_err(|col| SolverError::singular(&sys, free[col]))?;
    let mass_factor = cholesky(&m_ff, opts.pivot_tolerance)
        .map_err(|col| SolverError::InvalidInput(format!("mass matrix is not positive definite at free dof {col}")))?;

    // A = L⁻¹ K L⁻ᵀ, built column by column.
    let n = free.len();
    let mut x = DMatrix::zeros(n, n);
    for j in 0..n {
        let col = mass_factor.forward(&k_ff.column(j).into_owned());
        x.set_column(j, &col);
    }
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let row = mass_factor.forward(&x.row(i).transpose());
        a.set_row(i, &row.transpose());
    }
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let take = count.min(n);
    let notice = (count > n).then(|| format!("requested {count} modes but only {n} free dofs exist; returning {n}"));

    let mut original: Vec<u32> = model.nodes.iter().map(|n| n.id).collect();
    original.sort_unstable();
    let mut frequencies = Vec::with_capacity(take);
    let mut mode_shapes = Vec::with_capacity(take);
    for &i in order.iter().take(take) {
        let lambda = eig.eigenvalues[i];
        if lambda.is_nan() || lambda <= 0.0 {
            return Err(SolverError::InvalidInput(format!("non-positive eigenvalue {lambda}")));
        }
        let freq = lambda.sqrt() / (2.0 * std::f64::consts::PI);
        let phi_f = mass_factor.backward(&eig.eigenvectors.column(i).into_owned());
        let mut phi = nalgebra::DVector::zeros(sys.dof_map.len());
        for (k, &g) in free.iter().enumerate() {
            phi[g] = phi_f[k];
        }
        let at = |node, dof| sys.dof_map.get(node, dof).map_or(0.0, |g| phi[g]);
        let mut comps: Vec<NodeDisplacement> = original
            .iter()
            .map(|&node| NodeDisplacement {
                node,
                ux: at(node, Dof::Ux),
                uy: at(node, Dof::Uy),
                rz: at(node, Dof::Rz),
            })
            .collect();
        // normalize on the largest translation over all (incl. interior) nodes
        let (mut peak, mut signed) = (0.0f64, 1.0f64);
        for ((_, dof), g) in sys.dof_map.iter() {
            if dof != Dof::Rz && phi[g].abs() > peak {
                peak = phi[g].abs();
                signed = phi[g];
            }
        }
        if peak > 0.0 {
            let s = 1.0 / signed;
            for c in &mut comps {
                c.ux *= s;
                c.uy *= s;
                c.rz *= s;
            }
        }
        frequencies.push(freq);
        mode_shapes.push(ModeShape {
            frequency: freq,
            components: comps,
        });
    }
    Ok(ModalResult {
        frequencies,
        mode_shapes,
        notice,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::fixtures::*;
    use crate::ir::{BoundaryCondition, Load};
    use proptest::prelude::*;

    fn analytic_first_frequency(m: &IrModel, length: f64) -> f64 {
        let (e, rho) = (m.materials[0].youngs_modulus, m.materials[0].density);
        let (a, i) = (m.sections[0].area, m.sections[0].moment_of_inertia.unwrap());
        let beta = 1.875_104_068_711_961f64;
        beta * beta / (2.0 * std::f64::consts::PI) * (e * i / (rho * a * length.powi(4))).sqrt()
    }

    #[test]
    fn cantilever_first_frequency() {
        let m = cantilever(2.0, 1.0);
        let opts = SolverOptions { modal_subdivisions: 8, ..SolverOptions::default() };
        let r = solve_modal_with(&m, 3, &opts).unwrap();
        let f1 = analytic_first_frequency(&m, 2.0);
        assert!((r.frequencies[0] - f1).abs() <= 0.02 * f1, "{} vs {f1}", r.frequencies[0]);
    }

    #[test]
    fn frequencies_ascend_and_are_positive() {
        let r = solve_modal(&cantilever(2.0, 1.0), 5).unwrap();
        assert_eq!(r.frequencies.len(), 5);
        assert!(r.frequencies[0] > 0.0);
        assert!(r.frequencies.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn doubling_density_scales_by_inverse_sqrt_two() {
        let m = cantilever(2.0, 1.0);
        let mut heavy = m.clone();
        heavy.materials[0].density *= 2.0;
        let (a, b) = (solve_modal(&m, 4).unwrap(), solve_modal(&heavy, 4).unwrap());
        for (x, y) in a.frequencies.iter().zip(&b.frequencies) {
            assert!((y - x / 2f64.sqrt()).abs() <= 1e-9 * x);
        }
    }

    #[test]
    fn too_many_modes_are_truncated() {
        let r = solve_modal(&two_bar_truss(), 10).unwrap();
        assert_eq!(r.frequencies.len(), 2);
        assert!(r.notice.is_some());
    }

    #[test]
    fn insufficient_restraint_is_singular() {
        let mut m = cantilever(2.0, 1.0);
        m.bcs = vec![BoundaryCondition { node: 1, dofs: vec![Dof::Uy] }];
        assert!(matches!(solve_modal(&m, 1), Err(SolverError::Singular { .. })));
    }

    #[test]
    fn mode_shapes_are_unit_normalized() {
        let r = solve_modal(&cantilever(2.0, 1.0), 2).unwrap();
        let tip = r.mode_shapes[0].components.iter().find(|c| c.node == 2).unwrap();
        assert!((tip.uy.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn subdivision_keeps_original_ids() {
        let m = subdivide_frames(&cantilever(2.0, 1.0), 4);
        assert_eq!(m.nodes.len(), 5);
        assert_eq!(m.elements.len(), 4);
        assert_eq!(m.elements[0].id, 1);
        assert_eq!(m.elements[0].nodes, [1, 3]);
        assert_eq!(m.elements[3].nodes, [5, 2]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn frequencies_are_rotation_invariant(angle in 0.0f64..std::f64::consts::TAU) {
            let mut m = cantilever(2.0, 1.0);
            m.nodes.push(Node::new(3, 2.0, 1.5));
            m.elements.push(Element { id: 2, kind: ElementKind::FrameBeam, nodes: [2, 3], section: 1 });
            m.loads = vec![Load { node: 3, fx: 1.0, fy: 0.0, mz: 0.0 }];
            let (s, c) = angle.sin_cos();
            let mut rotated = m.clone();
            for n in &mut rotated.nodes {
                let (x, y) = (n.x, n.y);
                n.x = c * x - s * y;
                n.y = s * x + c * y;
            }
            let (a, b) = (solve_modal(&m, 4).unwrap(), solve_modal(&rotated, 4).unwrap());
            for (x, y) in a.frequencies.iter().zip(&b.frequencies) {
                prop_assert!((x - y).abs() <= 1e-8 * x);
            }
        }
    }
}

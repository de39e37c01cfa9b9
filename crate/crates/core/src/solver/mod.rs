//! Linear static, modal and truss sizing analyses on a validated model.

mod assembly;
mod linalg;
mod modal;
mod statics;
mod topopt;

use thiserror::Error;

pub use assembly::{assemble, assemble_with_areas, AssembledSystem, DofMap};
pub use linalg::{cholesky, Cholesky};
pub use modal::{solve_modal, solve_modal_with, subdivide_frames, ModalResult, ModeShape};
pub use statics::{solve_static, solve_static_with, ElementForces, NodeDisplacement, Reaction, StaticResult};
pub use topopt::{optimize_topology, optimize_topology_with, ElementArea, OcParameters, TopoResult};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("assembly failed: {0}")]
    Assembly(String),
    #[error("stiffness matrix is singular at node {node} dof {dof}: rigid body motion or mechanism")]
    Singular { node: u32, dof: String, equation: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported optimization: {0}")]
    UnsupportedOptimization(String),
}

impl SolverError {
    pub fn singular(sys: &AssembledSystem, global_dof: usize) -> Self {
        let (node, dof) = sys
            .dof_map
            .iter()
            .find(|(_, g)| *g == global_dof)
            .map(|((n, d), _)| (n, d.as_str().to_string()))
            .unwrap_or((0, "?".into()));
        SolverError::Singular { node, dof, equation: global_dof }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Cholesky pivots at or below this fraction of their diagonal count as zero.
    pub pivot_tolerance: f64,
    /// Frame elements are split into this many parts before a modal solve.
    pub modal_subdivisions: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            pivot_tolerance: 1e-10,
            modal_subdivisions: 4,
        }
    }
}

//! Reading a structured drawing into an [`IrModel`](crate::ir::IrModel):
//! parsing, scale resolution, endpoint clustering, semantic attachment and
//! the audited turn loop that produces the accepted draft.

pub mod drawing;
mod orchestrator;
pub mod scale;
pub mod semantics;
pub mod topology;

pub use drawing::{parse_drawing, DrawingParseError, PrimitiveDrawing};
pub use orchestrator::{
    orchestrate, orchestrate_with, BeliefState, DeterministicReasoner, OrchestratorConfig,
    PerceptionError, Perceived, Proposal, ReasoningHook, TurnRecord,
};
pub use scale::{infer_scale, ScaleConflictError, ScaleResolution};
pub use semantics::{attach_semantics, parse_context, SemanticsError};
pub use topology::{infer_topology, Topology, TopologyError};

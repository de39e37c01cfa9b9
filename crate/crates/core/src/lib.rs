//! Drawing-to-analysis pipeline for planar frame and truss models.

pub mod harness;
pub mod ir;
pub mod memory;
pub mod perception;
pub mod sandbox;
pub mod script;
pub mod solver;
pub mod synthesis;
pub mod validation;

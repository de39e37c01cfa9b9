use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::drawing::{parse_drawing, DrawingParseError, PrimitiveDrawing};
use super::scale::{infer_scale_with, ScaleConflictError, ScaleResolution, DEFAULT_SCALE_TOLERANCE};
use super::semantics::{attach_with_directives, parse_context, SemanticsError};
use super::topology::{infer_topology, TopologyError, DEFAULT_SNAP_TOLERANCE};
use crate::ir::{canonicalize, IrModel};
use crate::validation::{accept_update, audit, Finding, FindingCode, Level, UpdateDecision, ValidationReport};

/// What the orchestrator knows at a given turn.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub draft: Option<IrModel>,
    pinned_constraints: Vec<String>,
    pub findings: Option<ValidationReport>,
    pub turn: u32,
}

impl BeliefState {
    pub fn with_pins(pins: impl IntoIterator<Item = String>) -> Self {
        let mut belief = Self::default();
        for p in pins {
            belief.pin(p);
        }
        belief
    }

    /// Pinned directives survive every later turn; there is no way to unpin.
    pub fn pin(&mut self, directive: impl Into<String>) {
        let directive = directive.into();
        if !self.pinned_constraints.contains(&directive) {
            self.pinned_constraints.push(directive);
        }
    }

    pub fn pinned_constraints(&self) -> &[String] {
        &self.pinned_constraints
    }
}

/// A reasoning step's output for one turn.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub model: IrModel,
    /// Justifies removing previously accepted entities.
    pub justification: Option<String>,
    pub pins: Vec<String>,
}

impl Proposal {
    pub fn of(model: IrModel) -> Self {
        Self {
            model,
            justification: None,
            pins: Vec::new(),
        }
    }
}

/// Pluggable reasoning step. `perceived` is the deterministic reading of
/// the drawing; a hook may refine it using the findings in `belief`.
pub trait ReasoningHook {
    fn propose(&mut self, belief: &BeliefState, perceived: &IrModel) -> Proposal;
}

/// Proposes the deterministic reading unchanged on every turn.
#[derive(Debug, Default, Clone, Copy)]
pub struct DeterministicReasoner;

impl ReasoningHook for DeterministicReasoner {
    fn propose(&mut self, _belief: &BeliefState, perceived: &IrModel) -> Proposal {
        Proposal::of(perceived.clone())
    }
}

impl<F> ReasoningHook for F
where
    F: FnMut(&BeliefState, &IrModel) -> Proposal,
{
    fn propose(&mut self, belief: &BeliefState, perceived: &IrModel) -> Proposal {
        self(belief, perceived)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrchestratorConfig {
    pub max_turns: u32,
    pub snap_tolerance: f64,
    pub scale_tolerance: f64,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self {
            max_turns: 3,
            snap_tolerance: DEFAULT_SNAP_TOLERANCE,
            scale_tolerance: DEFAULT_SCALE_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: u32,
    pub accepted: bool,
    pub findings: Vec<Finding>,
    pub nodes: usize,
    pub elements: usize,
}

#[derive(Debug, Clone)]
pub struct Perceived {
    pub model: IrModel,
    pub drawing: PrimitiveDrawing,
    pub scale: ScaleResolution,
    pub belief: BeliefState,
    pub turns: Vec<TurnRecord>,
}

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error(transparent)]
    Drawing(#[from] DrawingParseError),
    #[error(transparent)]
    Scale(#[from] ScaleConflictError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error("max_turns must be at least 1")]
    Config,
    #[error("perception failed after {} turn(s): {}", turns.len(), summarize(report))]
    Failure {
        report: ValidationReport,
        turns: Vec<TurnRecord>,
    },
}

fn summarize(report: &ValidationReport) -> String {
    report
        .findings
        .iter()
        .map(|f| format!("{:?}/{}", f.level, f.code))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn orchestrate(
    drawing_doc: &str,
    context_text: &str,
    config: &OrchestratorConfig,
) -> Result<Perceived, PerceptionError> {
    orchestrate_with(drawing_doc, context_text, config, &mut DeterministicReasoner)
}

/// Parse, infer scale and topology, attach semantics, then loop: ask the
/// reasoning hook for a candidate, audit it and gate it through the
/// non-degenerative update rule until the audit is clean.
pub fn orchestrate_with(
    drawing_doc: &str,
    context_text: &str,
    config: &OrchestratorConfig,
    hook: &mut dyn ReasoningHook,
) -> Result<Perceived, PerceptionError> {
    if config.max_turns == 0 {
        return Err(PerceptionError::Config);
    }
    let drawing = parse_drawing(drawing_doc)?;
    let scale = infer_scale_with(&drawing, config.scale_tolerance)?;
    let topology = infer_topology(&drawing, config.snap_tolerance)?;
    let directives = parse_context(context_text)?;
    let perceived = attach_with_directives(&drawing, &topology, &scale, &directives)?;

    let mut belief = BeliefState::with_pins(directives.pinned.iter().cloned());
    let mut turns = Vec::new();
    for turn in 1..=config.max_turns {
        belief.turn = turn;
        let proposal = hook.propose(&belief, &perceived);
        for p in proposal.pins {
            belief.pin(p);
        }
        let candidate = canonicalize(&proposal.model).unwrap_or(proposal.model);
        let mut report = audit(&candidate, Some((&drawing, &scale)));
        report.justification = proposal.justification;

        match accept_update(&belief, &candidate, &report) {
            UpdateDecision::Accept => {
                turns.push(TurnRecord {
                    turn,
                    accepted: true,
                    findings: report.findings.clone(),
                    nodes: candidate.nodes.len(),
                    elements: candidate.elements.len(),
                });
                let clean = report.clean;
                belief.draft = Some(candidate);
                belief.findings = Some(report);
                if clean {
                    let model = belief.draft.clone().expect("draft just accepted");
                    return Ok(Perceived {
                        model,
                        drawing,
                        scale,
                        belief,
                        turns,
                    });
                }
            }
            UpdateDecision::Reject(reason) => {
                report.findings.push(Finding {
                    level: Level::L1,
                    code: FindingCode::RejectedUpdate,
                    message: reason,
                    subject: None,
                });
                report.clean = false;
                turns.push(TurnRecord {
                    turn,
                    accepted: false,
                    findings: report.findings.clone(),
                    nodes: candidate.nodes.len(),
                    elements: candidate.elements.len(),
                });
                belief.findings = Some(report);
            }
        }
    }
    Err(PerceptionError::Failure {
        report: belief.findings.unwrap_or_default(),
        turns,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const CANTILEVER_DRAWING: &str = r#"{
        "segments": [
            {"p1": [0, 0], "p2": [200, 0], "stroke_class": "structural"},
            {"p1": [0, -20], "p2": [200, -20], "stroke_class": "dimension"}
        ],
        "support_glyphs": [{"anchor": [0, 0], "kind": "fixed"}],
        "load_arrows": [{"anchor": [200, 0], "direction": [0, -1], "magnitude_label": "1 kN"}],
        "dimension_annotations": [{"segment_index": 1, "value": 2.0}]
    }"#;
    const CONTEXT: &str = "material: E=210e9 nu=0.3 rho=7850\nsection: A=0.001 I=1e-6\nconstraint: keep the tip load\n";

    #[test]
    fn golden_cantilever_is_clean_at_turn_one() {
        let p = orchestrate(CANTILEVER_DRAWING, CONTEXT, &OrchestratorConfig::default()).unwrap();
        assert_eq!(p.belief.turn, 1);
        assert_eq!(p.turns.len(), 1);
        assert_eq!(p.model.nodes.len(), 2);
        assert!((p.model.nodes[1].x - 2.0).abs() < 1e-12);
        assert_eq!(p.belief.pinned_constraints(), ["keep the tip load".to_string()]);
    }

    #[test]
    fn flaky_reasoner_recovers_on_turn_two() {
        let mut hook = |belief: &BeliefState, perceived: &IrModel| {
            let mut m = perceived.clone();
            if belief.turn == 1 {
                m.bcs.clear();
            }
            Proposal::of(m)
        };
        let p = orchestrate_with(CANTILEVER_DRAWING, CONTEXT, &OrchestratorConfig::default(), &mut hook).unwrap();
        assert_eq!(p.turns.len(), 2);
        assert!(p.turns[0].findings.iter().any(|f| f.level == Level::L2));
        assert!(p.turns[1].accepted && p.turns[1].findings.is_empty());
        assert_eq!(p.model.bcs.len(), 1);
    }

    #[test]
    fn unjustified_removal_is_rejected() {
        let mut hook = |belief: &BeliefState, perceived: &IrModel| {
            let mut m = perceived.clone();
            match belief.turn {
                1 => m.loads.clear(),
                _ => {
                    m.nodes.truncate(1);
                    m.elements.clear();
                }
            }
            Proposal::of(m)
        };
        let mut drawing = CANTILEVER_DRAWING.replace("\"kind\": \"fixed\"", "\"kind\": \"pin\"");
        drawing.push(' ');
        let err = orchestrate_with(&drawing, CONTEXT, &OrchestratorConfig::default(), &mut hook).unwrap_err();
        let PerceptionError::Failure { turns, report } = err else { panic!("expected failure") };
        assert!(turns[0].accepted);
        assert!(turns[1..].iter().all(|t| !t.accepted));
        assert!(report.findings.iter().any(|f| f.code == FindingCode::RejectedUpdate));
    }

    #[test]
    fn unsupported_structure_fails_after_max_turns() {
        let drawing = CANTILEVER_DRAWING.replace(
            r#""support_glyphs": [{"anchor": [0, 0], "kind": "fixed"}],"#,
            "",
        );
        let cfg = OrchestratorConfig { max_turns: 2, ..Default::default() };
        match orchestrate(&drawing, CONTEXT, &cfg) {
            Err(PerceptionError::Failure { report, turns }) => {
                assert_eq!(turns.len(), 2);
                assert!(report.codes().contains(&FindingCode::RigidBodyMotion));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pins_are_never_evicted() {
        let mut seen: Vec<Vec<String>> = Vec::new();
        let mut hook = |belief: &BeliefState, perceived: &IrModel| {
            seen.push(belief.pinned_constraints().to_vec());
            let mut p = Proposal::of(perceived.clone());
            p.model.bcs.clear();
            p.pins.push(format!("turn {} note", belief.turn));
            p
        };
        let cfg = OrchestratorConfig { max_turns: 4, ..Default::default() };
        let _ = orchestrate_with(CANTILEVER_DRAWING, CONTEXT, &cfg, &mut hook);
        for w in seen.windows(2) {
            assert!(w[0].iter().all(|p| w[1].contains(p)));
            assert!(w[1].len() > w[0].len());
        }
    }

    #[test]
    fn zero_turns_is_config_error() {
        let cfg = OrchestratorConfig { max_turns: 0, ..Default::default() };
        assert!(matches!(orchestrate(CANTILEVER_DRAWING, CONTEXT, &cfg), Err(PerceptionError::Config)));
    }
}

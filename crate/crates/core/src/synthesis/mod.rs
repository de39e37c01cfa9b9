//! Reflexive script synthesis: generate, preflight, execute, verify, reflect,
//! repair, and hand over to the deterministic lowering when the budget runs out.

mod context;
mod generators;
mod reflect;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use context::{compose_debug_context, merge_lesson, DebugContext, ErrorSummary, Lesson, LessonSource};
pub use generators::{
    make_generator, ConfigError, ExternalGenerator, FaultKind, FaultyGenerator, GenerateRequest, GenerateResponse,
    Generator, GeneratorError, PerfectGenerator,
};
pub use reflect::{
    check_results, reflect, verify_results, ErrorInput, LESSON_HALLUCINATION, LESSON_ISOLATION, LESSON_LIFECYCLE,
    LESSON_MODEL, LESSON_SAFETY, LESSON_SOLVER, LESSON_VERIFY, STATIC_RESIDUAL_LIMIT,
};

use crate::ir::IrModel;
use crate::memory::{classify_error, compute_signature, ErrorCategory, ErrorSignature, ExperienceRecord, MemoryBuffer, MemoryError, Outcome, RecordError};
use crate::sandbox::{
    allocate_workspace, execute_with, ExecutionMode, ExecutionOutcome, ExecutionStatus, Limits, ResultSet, RuntimeError,
    RuntimeErrorKind, Workspace, WorkspaceError,
};
use crate::script::{lower_ir, parse_script, preflight, PreflightViolation};

#[derive(Debug, Clone)]
pub struct SynthesisConfig {
    /// Repair budget K: at most K+1 generated attempts.
    pub max_retries: usize,
    pub fallback: bool,
    pub limits: Limits,
    pub execution: ExecutionMode,
    /// Records retrieved per memory query.
    pub top_k: usize,
    pub task_id: String,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            max_retries: 3,
            fallback: true,
            limits: Limits::default(),
            execution: ExecutionMode::InProcess,
            top_k: 3,
            task_id: "task".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub k: usize,
    pub script: String,
    pub parse_error: Option<String>,
    pub preflight_violations: Vec<PreflightViolation>,
    /// `None` when the script never reached the sandbox.
    pub outcome: Option<ExecutionOutcome>,
    pub verification_error: Option<String>,
    /// Size of the accumulated lesson set after this attempt.
    pub lessons_after: usize,
}

impl Attempt {
    fn new(k: usize, script: String) -> Self {
        Self {
            k,
            script,
            parse_error: None,
            preflight_violations: Vec::new(),
            outcome: None,
            verification_error: None,
            lessons_after: 0,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.outcome.as_ref().is_some_and(|o| o.completed()) && self.verification_error.is_none()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisTrace {
    pub attempts: Vec<Attempt>,
    pub fallback: Option<Attempt>,
    pub fallback_used: bool,
    pub lessons_accumulated: Vec<Lesson>,
    pub generator_error: Option<String>,
}

impl SynthesisTrace {
    /// The fallback run when it happened, else the last generated attempt.
    pub fn last_attempt(&self) -> Option<&Attempt> {
        self.fallback.as_ref().or(self.attempts.last())
    }

    /// Repairs performed before success on the generated path.
    pub fn retries(&self) -> usize {
        self.attempts.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub script: String,
    pub results: ResultSet,
    pub outcome: ExecutionOutcome,
    pub workspace: Workspace,
    pub trace: SynthesisTrace,
}

#[derive(Debug, thiserror::Error)]
pub enum SynthesisError {
    #[error("synthesis exhausted after {} attempts with fallback disabled", .trace.attempts.len())]
    Exhausted { trace: Box<SynthesisTrace> },
    #[error("deterministic fallback failed: {message}")]
    FallbackFailure { message: String, trace: Box<SynthesisTrace> },
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Record(#[from] RecordError),
}

impl SynthesisError {
    pub fn trace(&self) -> Option<&SynthesisTrace> {
        match self {
            SynthesisError::Exhausted { trace } | SynthesisError::FallbackFailure { trace, .. } => Some(trace),
            _ => None,
        }
    }
}

struct Failure {
    message: String,
    line: Option<usize>,
    reflections: Vec<String>,
    log: String,
    from_runtime: bool,
}

fn listing(script: &str) -> String {
    script.lines().enumerate().map(|(i, l)| format!("[{:>4}] {}\n", i + 1, l.trim())).collect()
}

fn excerpt(script: &str, line: Option<usize>) -> String {
    match line {
        Some(l) => script.lines().nth(l.saturating_sub(1)).unwrap_or("").trim().to_string(),
        None => String::new(),
    }
}

fn static_failure(script: &str, attempt: &mut Attempt, root: &Path) -> Option<Failure> {
    match parse_script(script) {
        Err(e) => {
            attempt.parse_error = Some(e.to_string());
            Some(Failure {
                message: e.to_string(),
                line: (e.line > 0).then_some(e.line),
                reflections: reflect(ErrorInput::Parse(&e)),
                log: format!("{}PARSE ERROR {e}\n", listing(script)),
                from_runtime: false,
            })
        }
        Ok(ast) => {
            let v = preflight(&ast, root);
            if v.is_empty() {
                return None;
            }
            let mut log = listing(script);
            for x in &v {
                log.push_str(&format!("PREFLIGHT {x}\n"));
            }
            attempt.preflight_violations = v.clone();
            Some(Failure {
                message: v.iter().map(|x| x.message.as_str()).collect::<Vec<_>>().join("; "),
                line: v.iter().find_map(|x| x.line),
                reflections: reflect(ErrorInput::Violations(&v)),
                log,
                from_runtime: false,
            })
        }
    }
}

fn run(script: &str, ws: &Workspace, cfg: &SynthesisConfig, model: &IrModel, attempt: &mut Attempt) -> Result<ResultSet, Failure> {
    let _ = std::fs::remove_file(ws.results_path());
    let outcome = execute_with(script, ws, &cfg.limits, &cfg.execution);
    let checked = crate::synthesis::check_results(&outcome, model.analysis.mode);
    attempt.outcome = Some(outcome.clone());
    match checked {
        Ok(results) => Ok(results),
        Err(reason) => {
            let runtime = match (&outcome.runtime_error, outcome.status) {
                (Some(e), _) => Some(e.clone()),
                (None, ExecutionStatus::Aborted) => Some(RuntimeError {
                    line: None,
                    kind: RuntimeErrorKind::Solver,
                    message: outcome.abort_reason.clone().unwrap_or_else(|| "aborted".into()),
                }),
                _ => None,
            };
            Err(match runtime {
                Some(e) => Failure {
                    message: e.message.clone(),
                    line: e.line,
                    reflections: reflect(ErrorInput::Runtime(&e)),
                    log: outcome.log.clone(),
                    from_runtime: true,
                },
                None => {
                    attempt.verification_error = Some(reason.clone());
                    Failure {
                        message: format!("verification failed: {reason}"),
                        line: None,
                        reflections: reflect(ErrorInput::Verification(&reason)),
                        log: outcome.log.clone(),
                        from_runtime: true,
                    }
                }
            })
        }
    }
}

fn success_lesson(trace: &SynthesisTrace, fallback: bool) -> String {
    if fallback {
        "generation did not converge; the deterministic lowering executed cleanly".into()
    } else if trace.lessons_accumulated.is_empty() {
        "the generated script completed on the first attempt".into()
    } else {
        let texts: Vec<&str> = trace.lessons_accumulated.iter().map(|l| l.text.as_str()).collect();
        format!("recovered by applying: {}", texts.join("; "))
    }
}

/// Runs the reflexive loop for one audited model. Memory receives one success
/// record per successful run and at most one failure record per failed attempt.
pub fn synthesize(
    model: &IrModel,
    cfg: &SynthesisConfig,
    buffer: &MemoryBuffer,
    generator: &mut dyn Generator,
    workspace_root: &Path,
) -> Result<Synthesis, SynthesisError> {
    let sig = compute_signature(model);
    let ws = allocate_workspace(workspace_root, &cfg.task_id)?;
    let mut trace = SynthesisTrace::default();
    let neutral = ErrorSignature { category: ErrorCategory::Other, tokens: Default::default(), line: None };
    let memory_context = buffer.retrieve(&sig, &neutral, cfg.top_k);

    let mut script = match generator.generate(model, &ws.root, &memory_context) {
        Ok(s) => Some(s),
        Err(e) => {
            trace.generator_error = Some(e.to_string());
            None
        }
    };
    let mut k = 0;
    while let Some(current) = script.take() {
        let mut attempt = Attempt::new(k, current.clone());
        let failure = match static_failure(&current, &mut attempt, &ws.root) {
            Some(f) => f,
            None => match run(&current, &ws, cfg, model, &mut attempt) {
                Ok(results) => {
                    attempt.lessons_after = trace.lessons_accumulated.len();
                    let outcome = attempt.outcome.clone().expect("executed attempt has an outcome");
                    trace.attempts.push(attempt);
                    buffer.record(ExperienceRecord::success(sig.clone(), success_lesson(&trace, false), current.clone())?)?;
                    return Ok(Synthesis { script: current, results, outcome, workspace: ws, trace });
                }
                Err(f) => f,
            },
        };
        let err_sig = classify_error(&failure.message);
        let retrieved = if failure.from_runtime { buffer.retrieve(&sig, &err_sig, cfg.top_k) } else { Vec::new() };
        let ctx = compose_debug_context(&failure.message, failure.line, &failure.log, &retrieved, &failure.reflections);
        for l in &ctx.lessons {
            merge_lesson(&mut trace.lessons_accumulated, l.clone());
        }
        let lesson = failure.reflections.join("; ");
        let known = buffer.records().iter().any(|r| {
            r.outcome == Outcome::Failure && r.signature == sig && r.lesson == lesson && r.error.as_ref() == Some(&err_sig)
        });
        if !known {
            buffer.record(ExperienceRecord::failure(sig.clone(), err_sig, lesson, excerpt(&current, ctx.error_summary.line))?)?;
        }
        attempt.lessons_after = trace.lessons_accumulated.len();
        trace.attempts.push(attempt);
        if k == cfg.max_retries {
            break;
        }
        let repair_ctx = DebugContext { lessons: trace.lessons_accumulated.clone(), ..ctx };
        match generator.repair(&current, &repair_ctx) {
            Ok(s) => script = Some(s),
            Err(e) => trace.generator_error = Some(e.to_string()),
        }
        k += 1;
    }

    if !cfg.fallback {
        return Err(SynthesisError::Exhausted { trace: Box::new(trace) });
    }
    trace.fallback_used = true;
    let fail = |message: String, trace: SynthesisTrace| SynthesisError::FallbackFailure { message, trace: Box::new(trace) };
    let s_det = match lower_ir(model, &ws.root) {
        Ok(s) => s,
        Err(e) => return Err(fail(e.to_string(), trace)),
    };
    let mut attempt = Attempt::new(trace.attempts.len(), s_det.clone());
    if let Some(f) = static_failure(&s_det, &mut attempt, &ws.root) {
        trace.fallback = Some(attempt);
        return Err(fail(format!("lowered script failed preflight: {}", f.message), trace));
    }
    let result = run(&s_det, &ws, cfg, model, &mut attempt);
    attempt.lessons_after = trace.lessons_accumulated.len();
    let outcome = attempt.outcome.clone();
    trace.fallback = Some(attempt);
    match result {
        Ok(results) => {
            buffer.record(ExperienceRecord::success(sig, success_lesson(&trace, true), s_det.clone())?)?;
            Ok(Synthesis {
                script: s_det,
                results,
                outcome: outcome.expect("executed fallback has an outcome"),
                workspace: ws,
                trace,
            })
        }
        Err(f) => Err(fail(f.message, trace)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::fixtures::*;
    use crate::ir::AnalysisSpec;

    fn go(spec: &str, k: usize, fallback: bool, model: &IrModel) -> (tempfile::TempDir, MemoryBuffer, Result<Synthesis, SynthesisError>) {
        let dir = tempfile::tempdir().unwrap();
        let buffer = MemoryBuffer::in_memory();
        let mut g = make_generator(spec).unwrap();
        let cfg = SynthesisConfig { max_retries: k, fallback, ..SynthesisConfig::default() };
        let r = synthesize(model, &cfg, &buffer, g.as_mut(), dir.path());
        (dir, buffer, r)
    }

    #[test]
    fn perfect_generator_succeeds_first_time() {
        let (_d, buffer, r) = go("perfect", 3, true, &two_bar_truss());
        let s = r.unwrap();
        assert_eq!(s.trace.attempts.len(), 1);
        assert!(!s.trace.fallback_used);
        assert_eq!(buffer.len(), 1);
        assert_eq!(buffer.records()[0].outcome, Outcome::Success);
    }

    #[test]
    fn heeding_mocks_recover_with_one_repair() {
        for kind in ["type_i", "type_ii", "type_iii"] {
            let (_d, buffer, r) = go(&format!("faulty:{kind}"), 3, true, &cantilever(2.0, 1000.0));
            let s = r.unwrap();
            assert_eq!(s.trace.attempts.len(), 2, "{kind}");
            assert!(!s.trace.fallback_used);
            assert!(s.trace.attempts[0].outcome.is_none(), "preflight must gate the faulty script");
            let outcomes: Vec<_> = buffer.records().iter().map(|r| r.outcome).collect();
            assert_eq!(outcomes, vec![Outcome::Failure, Outcome::Success]);
        }
    }

    #[test]
    fn stubborn_mock_falls_back() {
        let (_d, _b, r) = go("faulty:type_iii:stubborn", 3, true, &two_bar_truss());
        let s = r.unwrap();
        assert!(s.trace.fallback_used);
        assert_eq!(s.trace.attempts.len(), 4);
        assert!(s.trace.last_attempt().unwrap().succeeded());
        assert_eq!(s.script, lower_ir(&two_bar_truss(), &s.workspace.root).unwrap());
        let counts: Vec<_> = s.trace.attempts.iter().map(|a| a.lessons_after).collect();
        assert!(counts.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn stubborn_without_fallback_is_exhausted() {
        let (_d, _b, r) = go("faulty:type_ii:stubborn", 2, false, &two_bar_truss());
        match r {
            Err(SynthesisError::Exhausted { trace }) => {
                assert_eq!(trace.attempts.len(), 3);
                assert!(trace.fallback.is_none());
                assert!(trace.attempts.iter().all(|a| a.parse_error.is_some()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_budget_goes_straight_to_fallback() {
        let (_d, _b, r) = go("faulty:type_i", 0, true, &two_bar_truss());
        let s = r.unwrap();
        assert_eq!(s.trace.attempts.len(), 1);
        assert!(s.trace.fallback_used);
    }

    #[test]
    fn modal_and_topology_modes() {
        let mut m = cantilever(2.0, 1000.0);
        m.analysis = AnalysisSpec::modal(3);
        assert!(matches!(go("perfect", 1, true, &m).2.unwrap().results, ResultSet::Modal(_)));
        let mut t = two_bar_truss();
        t.analysis = AnalysisSpec::topology(None, Some(20));
        let s = go("faulty:type_iii", 3, true, &t).2.unwrap();
        assert!(s.results.as_topology().unwrap().final_volume_fraction <= 0.5 + 1e-6);
    }

    #[test]
    fn repeated_failures_are_not_duplicated_in_memory() {
        let (_d, buffer, _r) = go("faulty:type_i:stubborn", 3, true, &two_bar_truss());
        let failures = buffer.records().iter().filter(|r| r.outcome == Outcome::Failure).count();
        assert_eq!(failures, 1);
    }
}

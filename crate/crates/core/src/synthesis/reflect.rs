use crate::ir::AnalysisMode;
use crate::sandbox::{read_results, ExecutionOutcome, ExecutionStatus, ResultSet, RuntimeError, RuntimeErrorKind};
use crate::script::{PreflightViolation, ScriptParseError, ViolationKind};

pub const LESSON_LIFECYCLE: &str =
    "every script must contain an analyze statement (the execution trigger), a write_results statement and an end statement";
pub const LESSON_SAFETY: &str = "never delete the protected root model container";
pub const LESSON_ISOLATION: &str = "write every artifact inside the allocated workspace directory";
pub const LESSON_HALLUCINATION: &str = "use only statements from the script catalogue";
pub const LESSON_MODEL: &str = "define every referenced node, material and section exactly once before analyze";
pub const LESSON_SOLVER: &str = "restrain all rigid-body motions and keep the model within solver limits";
pub const LESSON_VERIFY: &str = "the analysis must produce finite results of the requested kind";

pub const STATIC_RESIDUAL_LIMIT: f64 = 1e-8;

/// Errors that feed reflection: static (parse or preflight) or runtime.
#[derive(Debug, Clone, Copy)]
pub enum ErrorInput<'a> {
    Parse(&'a ScriptParseError),
    Violations(&'a [PreflightViolation]),
    Runtime(&'a RuntimeError),
    Verification(&'a str),
}

/// One imperative lesson per distinct error kind, in first-seen order.
pub fn reflect(input: ErrorInput<'_>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let mut push = |s: String| {
        if !out.contains(&s) {
            out.push(s);
        }
    };
    match input {
        ErrorInput::Parse(e) if e.reason.starts_with("unknown statement") => {
            push(format!("{LESSON_HALLUCINATION}; '{}' does not exist", e.token))
        }
        ErrorInput::Parse(e) => push(format!("follow the statement grammar exactly ({})", e.reason)),
        ErrorInput::Violations(vs) => {
            for v in vs {
                push(
                    match v.kind {
                        ViolationKind::Lifecycle => LESSON_LIFECYCLE,
                        ViolationKind::Safety => LESSON_SAFETY,
                        ViolationKind::Isolation => LESSON_ISOLATION,
                    }
                    .to_string(),
                );
            }
        }
        ErrorInput::Runtime(e) => match e.kind {
            RuntimeErrorKind::Parse if e.message.contains("unknown statement") => push(LESSON_HALLUCINATION.to_string()),
            RuntimeErrorKind::Parse => push(format!("follow the statement grammar exactly ({})", e.message)),
            RuntimeErrorKind::KernelProtection => push(LESSON_SAFETY.to_string()),
            RuntimeErrorKind::Lifecycle => push(LESSON_LIFECYCLE.to_string()),
            RuntimeErrorKind::Isolation => push(LESSON_ISOLATION.to_string()),
            RuntimeErrorKind::Model => push(LESSON_MODEL.to_string()),
            RuntimeErrorKind::Solver | RuntimeErrorKind::Io => push(LESSON_SOLVER.to_string()),
        },
        ErrorInput::Verification(_) => push(LESSON_VERIFY.to_string()),
    }
    out
}

/// Reads and checks the results of a completed run. `Err` explains a rejection.
pub fn check_results(outcome: &ExecutionOutcome, mode: AnalysisMode) -> Result<ResultSet, String> {
    if outcome.status != ExecutionStatus::Completed {
        return Err(format!("run ended with status {}", outcome.status));
    }
    let path = outcome.results_path.as_ref().ok_or("completed run has no results path")?;
    let results = read_results(path).map_err(|e| e.to_string())?;
    if results.mode() != mode {
        return Err(format!("results are {} but the model asks for {}", results.mode().as_str(), mode.as_str()));
    }
    match &results {
        ResultSet::Static(r) => {
            if !r.is_finite() {
                return Err("static results contain non-finite values".into());
            }
            if r.equilibrium_residual.is_nan() || r.equilibrium_residual > STATIC_RESIDUAL_LIMIT {
                return Err(format!("equilibrium residual {:e} exceeds {STATIC_RESIDUAL_LIMIT:e}", r.equilibrium_residual));
            }
        }
        ResultSet::Modal(r) => {
            let finite = r.frequencies.iter().all(|f| f.is_finite() && *f > 0.0)
                && r.mode_shapes.iter().flat_map(|s| &s.components).all(|c| c.ux.is_finite() && c.uy.is_finite() && c.rz.is_finite());
            if !finite || r.frequencies.is_empty() {
                return Err("modal results must hold positive finite frequencies".into());
            }
            if r.frequencies.windows(2).any(|w| w[1] < w[0]) {
                return Err("modal frequencies are not ascending".into());
            }
        }
        ResultSet::TopologyOptimization(r) => {
            let finite = r.areas.iter().all(|a| a.area.is_finite()) && r.compliance_history.iter().all(|c| c.is_finite());
            if !finite {
                return Err("optimization results contain non-finite values".into());
            }
            if r.final_volume_fraction > r.target_volume_fraction + 1e-6 {
                return Err(format!(
                    "volume fraction {} exceeds the target {}",
                    r.final_volume_fraction, r.target_volume_fraction
                ));
            }
            if r.areas.iter().any(|a| a.area < a.min_area * (1.0 - 1e-12) || a.area > a.max_area * (1.0 + 1e-12)) {
                return Err("an element area lies outside its bounds".into());
            }
        }
    }
    Ok(results)
}

pub fn verify_results(outcome: &ExecutionOutcome, mode: AnalysisMode) -> bool {
    check_results(outcome, mode).is_ok()
}

//! End-to-end case runner, IR metrics, suite aggregation and report rendering.

mod metrics;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{evaluate, evaluate_ir, match_nodes, Metrics, DEFAULT_MATCH_TOLERANCE};
pub use report::{aggregate, emit_report, MetricMeans, Report, ReportFormat, SuiteSummary};

use crate::ir::{deserialize, AnalysisMode, IrModel};
use crate::memory::MemoryBuffer;
use crate::perception::{orchestrate, OrchestratorConfig};
use crate::sandbox::ResultSet;
use crate::synthesis::{make_generator, synthesize, ConfigError, SynthesisConfig, SynthesisError, SynthesisTrace};

pub const DRAWING_FILE: &str = "drawing.json";
pub const CONTEXT_FILE: &str = "context.txt";
pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, thiserror::Error)]
pub enum CaseLoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid truth IR {path}: {message}")]
    Truth { path: PathBuf, message: String },
    #[error("suite {0} contains no cases")]
    EmptySuite(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub id: String,
    pub drawing_path: PathBuf,
    pub context_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_ir_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_mode: Option<AnalysisMode>,
}

fn canonical(path: &Path) -> Result<PathBuf, CaseLoadError> {
    path.canonicalize().map_err(|source| CaseLoadError::Io { path: path.to_path_buf(), source })
}

impl CaseSpec {
    /// Resolves every path now; the expected mode is taken from the truth IR.
    pub fn new(id: impl Into<String>, drawing: &Path, context: &Path, truth: Option<&Path>) -> Result<Self, CaseLoadError> {
        let truth_ir_path = truth.map(canonical).transpose()?;
        let expected_mode = match &truth_ir_path {
            Some(p) => Some(load_truth(p)?.analysis.mode),
            None => None,
        };
        Ok(Self {
            id: id.into(),
            drawing_path: canonical(drawing)?,
            context_path: canonical(context)?,
            truth_ir_path,
            expected_mode,
        })
    }

    /// A case directory holds `drawing.json`, `context.txt` and optionally `truth.json`.
    pub fn from_dir(dir: &Path) -> Result<Self, CaseLoadError> {
        let id = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "case".into());
        let truth = dir.join(TRUTH_FILE);
        Self::new(id, &dir.join(DRAWING_FILE), &dir.join(CONTEXT_FILE), truth.exists().then_some(truth.as_path()))
    }
}

fn read(path: &Path) -> Result<String, CaseLoadError> {
    fs::read_to_string(path).map_err(|source| CaseLoadError::Io { path: path.to_path_buf(), source })
}

fn load_truth(path: &Path) -> Result<IrModel, CaseLoadError> {
    deserialize(&read(path)?).map_err(|e| CaseLoadError::Truth { path: path.to_path_buf(), message: e.to_string() })
}

/// Every subdirectory containing a drawing, sorted by name.
pub fn load_suite(dir: &Path) -> Result<Vec<CaseSpec>, CaseLoadError> {
    let io = |source| CaseLoadError::Io { path: dir.to_path_buf(), source };
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(DRAWING_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CaseLoadError::EmptySuite(dir.to_path_buf()));
    }
    dirs.iter().map(|d| CaseSpec::from_dir(d)).collect()
}

#[derive(Debug, Clone)]
pub struct HarnessConfig {
    pub orchestrator: OrchestratorConfig,
    /// `task_id` is replaced by the case id.
    pub synthesis: SynthesisConfig,
    pub generator: String,
    pub match_tolerance: f64,
    pub workspace_root: PathBuf,
    /// Shared buffer; `None` gives every case a fresh in-memory buffer.
    pub memory: Option<Arc<MemoryBuffer>>,
}

impl HarnessConfig {
    pub fn new(workspace_root: impl Into<PathBuf>) -> Self {
        Self {
            orchestrator: OrchestratorConfig::default(),
            synthesis: SynthesisConfig::default(),
            generator: "perfect".into(),
            match_tolerance: DEFAULT_MATCH_TOLERANCE,
            workspace_root: workspace_root.into(),
            memory: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        make_generator(&self.generator).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Perception,
    Synthesis,
    Results,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: Stage,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptSummary {
    pub k: usize,
    /// `parse`, `preflight`, `runtime`, `verification` or `ok`.
    pub result: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub attempts: Vec<AttemptSummary>,
    pub retries: usize,
    pub fallback_used: bool,
    pub lessons: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_error: Option<String>,
}

impl TraceSummary {
    pub fn of(trace: &SynthesisTrace) -> Self {
        let summarize = |a: &crate::synthesis::Attempt| {
            let (result, detail) = if let Some(e) = &a.parse_error {
                ("parse", Some(e.clone()))
            } else if !a.preflight_violations.is_empty() {
                let msgs: Vec<String> = a.preflight_violations.iter().map(|v| v.to_string()).collect();
                ("preflight", Some(msgs.join("; ")))
            } else if let Some(e) = a.outcome.as_ref().and_then(|o| o.runtime_error.as_ref()) {
                ("runtime", Some(e.to_string()))
            } else if let Some(r) = a.outcome.as_ref().and_then(|o| o.abort_reason.as_ref()) {
                ("aborted", Some(r.clone()))
            } else if let Some(v) = &a.verification_error {
                ("verification", Some(v.clone()))
            } else {
                ("ok", None)
            };
            AttemptSummary { k: a.k, result: result.into(), detail }
        };
        Self {
            attempts: trace.attempts.iter().chain(&trace.fallback).map(summarize).collect(),
            retries: trace.retries(),
            fallback_used: trace.fallback_used,
            lessons: trace.lessons_accumulated.iter().map(|l| l.text.clone()).collect(),
            generator_error: trace.generator_error.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Highlights {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_displacement: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_abs_axial_stress: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_frequency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_compliance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_volume_fraction: Option<f64>,
}

impl Highlights {
    pub fn of(results: &ResultSet) -> Self {
        match results {
            ResultSet::Static(r) => Self {
                max_displacement: Some(r.max_displacement()),
                max_abs_axial_stress: Some(r.elements.iter().map(|e| e.axial_stress.abs()).fold(0.0, f64::max)),
                ..Self::default()
            },
            ResultSet::Modal(r) => Self { first_frequency: r.frequencies.first().copied(), ..Self::default() },
            ResultSet::TopologyOptimization(r) => Self {
                final_compliance: Some(r.final_compliance()),
                final_volume_fraction: Some(r.final_volume_fraction),
                ..Self::default()
            },
        }
    }
}

/// Seconds spent per stage. Left out of markdown so reruns compare equal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub perception: f64,
    pub synthesis: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<AnalysisMode>,
    pub execution_success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<StageFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceSummary>,
    pub highlights: Highlights,
    pub timings: Timings,
}

impl CaseReport {
    fn new(case_id: &str) -> Self {
        Self {
            case_id: case_id.to_string(),
            mode: None,
            execution_success: false,
            metrics: None,
            failure: None,
            trace: None,
            highlights: Highlights::default(),
            timings: Timings::default(),
        }
    }

    fn fail(&mut self, stage: Stage, kind: &str, message: impl Into<String>) {
        self.failure = Some(StageFailure { stage, kind: kind.into(), message: message.into() });
    }
}

/// Intermediate products of a case, for callers that persist them.
#[derive(Debug, Clone, Default)]
pub struct CaseArtifacts {
    pub model: Option<IrModel>,
    pub synthesis: Option<crate::synthesis::Synthesis>,
    pub trace: Option<SynthesisTrace>,
}

/// Runs one case end to end. Only unreadable inputs are returned as errors;
/// later failures are recorded in the report.
pub fn run_case(case: &CaseSpec, config: &HarnessConfig) -> Result<CaseReport, CaseLoadError> {
    run_case_with_artifacts(case, config).map(|(r, _)| r)
}

pub fn run_case_with_artifacts(case: &CaseSpec, config: &HarnessConfig) -> Result<(CaseReport, CaseArtifacts), CaseLoadError> {
    let mut artifacts = CaseArtifacts::default();
    let start = Instant::now();
    let drawing = read(&case.drawing_path)?;
    let context = read(&case.context_path)?;
    let truth = case.truth_ir_path.as_deref().map(load_truth).transpose()?;
    let mut report = CaseReport::new(&case.id);

    let perceived = orchestrate(&drawing, &context, &config.orchestrator);
    report.timings.perception = start.elapsed().as_secs_f64();
    let model = match perceived {
        Ok(p) => p.model,
        Err(e) => {
            report.fail(Stage::Perception, "perception_failure", e.to_string());
            report.timings.total = start.elapsed().as_secs_f64();
            return Ok((report, artifacts));
        }
    };
    report.mode = Some(model.analysis.mode);
    artifacts.model = Some(model.clone());
    if let Some(t) = &truth {
        report.metrics = Some(evaluate_ir(&model, t, config.match_tolerance));
    }

    let mut generator = match make_generator(&config.generator) {
        Ok(g) => g,
        Err(e) => {
            report.fail(Stage::Synthesis, "config", e.to_string());
            report.timings.total = start.elapsed().as_secs_f64();
            return Ok((report, artifacts));
        }
    };
    let synth_start = Instant::now();
    let outcome = run_synthesis(&model, case, config, generator.as_mut());
    report.timings.synthesis = synth_start.elapsed().as_secs_f64();
    match outcome {
        Ok(s) => {
            report.trace = Some(TraceSummary::of(&s.trace));
            match case.expected_mode.filter(|m| *m != s.results.mode()) {
                Some(expected) => report.fail(
                    Stage::Results,
                    "mode_mismatch",
                    format!("results are {} but the case expects {}", s.results.mode().as_str(), expected.as_str()),
                ),
                None => {
                    report.execution_success = true;
                    report.highlights = Highlights::of(&s.results);
                }
            }
            artifacts.trace = Some(s.trace.clone());
            artifacts.synthesis = Some(s);
        }
        Err(e) => {
            report.trace = e.trace().map(TraceSummary::of);
            artifacts.trace = e.trace().cloned();
            let kind = match &e {
                SynthesisError::Exhausted { .. } => "synthesis_exhausted",
                SynthesisError::FallbackFailure { .. } => "fallback_failure",
                SynthesisError::Workspace(_) => "workspace",
                SynthesisError::Memory(_) | SynthesisError::Record(_) => "memory",
            };
            report.fail(Stage::Synthesis, kind, e.to_string());
        }
    }
    if let Some(m) = &mut report.metrics {
        m.execution_success = Some(report.execution_success);
    }
    report.timings.total = start.elapsed().as_secs_f64();
    Ok((report, artifacts))
}

fn run_synthesis(
    model: &IrModel,
    case: &CaseSpec,
    config: &HarnessConfig,
    generator: &mut dyn crate::synthesis::Generator,
) -> Result<crate::synthesis::Synthesis, SynthesisError> {
    let cfg = SynthesisConfig { task_id: case.id.clone(), ..config.synthesis.clone() };
    let local;
    let buffer = match &config.memory {
        Some(shared) => shared.as_ref(),
        None => {
            local = MemoryBuffer::in_memory();
            &local
        }
    };
    synthesize(model, &cfg, buffer, generator, &config.workspace_root)
}

/// Runs every case of a suite on up to `parallel` threads. Reports come back
/// in suite order regardless of completion order.
pub fn bench(suite: &Path, config: &HarnessConfig, parallel: usize) -> Result<(SuiteSummary, Vec<CaseReport>), CaseLoadError> {
    let cases = load_suite(suite)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .expect("thread pool with a positive thread count");
    let reports = pool.install(|| cases.par_iter().map(|c| run_case(c, config)).collect::<Result<Vec<_>, _>>())?;
    Ok((aggregate(&reports), reports))
}

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::results::{write_results, ResultSet};
use super::workspace::Workspace;
use crate::ir::{
    canonicalize, AnalysisSpec, BoundaryCondition, Element, IrModel, Load, Material, Node, Section,
};
use crate::script::{is_contained, parse_line, resolve, AnalyzeKind, DeleteTarget, Statement};
use crate::solver::{
    optimize_topology_with, solve_modal_with, solve_static_with, subdivide_frames, DofMap, OcParameters,
    SolverOptions,
};

pub const MSG_KERNEL_PROTECTION: &str = "kernel protection: deletion of protected root container";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub max_statements: usize,
    pub max_solver_dofs: usize,
    /// Seconds.
    pub max_wall_time: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_statements: 10_000,
            max_solver_dofs: 6_000,
            max_wall_time: 60.0,
        }
    }
}

impl Limits {
    pub fn is_valid(&self) -> bool {
        self.max_statements > 0 && self.max_solver_dofs > 0 && self.max_wall_time > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExecutionStatus {
    Completed,
    Failed,
    Aborted,
}

impl fmt::Display for ExecutionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecutionStatus::Completed => "COMPLETED",
            ExecutionStatus::Failed => "FAILED",
            ExecutionStatus::Aborted => "ABORTED",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuntimeErrorKind {
    Parse,
    KernelProtection,
    Lifecycle,
    Isolation,
    Model,
    Solver,
    Io,
}

impl RuntimeErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RuntimeErrorKind::Parse => "parse",
            RuntimeErrorKind::KernelProtection => "kernel-protection",
            RuntimeErrorKind::Lifecycle => "lifecycle",
            RuntimeErrorKind::Isolation => "isolation",
            RuntimeErrorKind::Model => "model",
            RuntimeErrorKind::Solver => "solver",
            RuntimeErrorKind::Io => "io",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeError {
    pub line: Option<usize>,
    pub kind: RuntimeErrorKind,
    pub message: String,
}

impl fmt::Display for RuntimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{} error at line {l}: {}", self.kind.as_str(), self.message),
            None => write!(f, "{} error: {}", self.kind.as_str(), self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: ExecutionStatus,
    pub results_path: Option<PathBuf>,
    pub log: String,
    pub runtime_error: Option<RuntimeError>,
    /// Why an ABORTED run stopped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
    /// Seconds.
    pub wall_time: f64,
}

impl ExecutionOutcome {
    pub fn completed(&self) -> bool {
        self.status == ExecutionStatus::Completed
    }
}

/// Writes `script.sim`, interprets it, and writes `run.log`. Never panics on bad
/// input; every failure is reported through the outcome.
pub fn execute(script: &str, workspace: &Workspace, limits: &Limits) -> ExecutionOutcome {
    let start = Instant::now();
    let mut outcome = match fs::write(workspace.script_path(), script) {
        Ok(()) => interpret(script, &workspace.root, limits),
        Err(e) => {
            let err = RuntimeError {
                line: None,
                kind: RuntimeErrorKind::Io,
                message: format!("cannot write script: {e}"),
            };
            let log = format!("ERROR ({}) {}\nSTATUS: FAILED\n", err.kind.as_str(), err.message);
            ExecutionOutcome {
                status: ExecutionStatus::Failed,
                results_path: None,
                log,
                runtime_error: Some(err),
                abort_reason: None,
                wall_time: 0.0,
            }
        }
    };
    if let Err(e) = fs::write(workspace.log_path(), &outcome.log) {
        if outcome.runtime_error.is_none() {
            outcome.status = ExecutionStatus::Failed;
            outcome.results_path = None;
            outcome.runtime_error = Some(RuntimeError {
                line: None,
                kind: RuntimeErrorKind::Io,
                message: format!("cannot write log: {e}"),
            });
        }
    }
    outcome.wall_time = start.elapsed().as_secs_f64();
    outcome
}

enum Stop {
    Error(RuntimeError),
    Abort(usize, String),
}

struct Interpreter<'a> {
    root: PathBuf,
    limits: &'a Limits,
    begun: bool,
    model: IrModel,
    results: Option<ResultSet>,
    written: Option<PathBuf>,
    log: String,
}

/// Interprets `script` with all file output confined to `root`. Does not write
/// `script.sim` or `run.log`.
pub fn interpret(script: &str, root: &Path, limits: &Limits) -> ExecutionOutcome {
    let start = Instant::now();
    let mut it = Interpreter {
        root: resolve(root, Path::new("/")),
        limits,
        begun: false,
        model: IrModel::default(),
        results: None,
        written: None,
        log: String::new(),
    };
    let budget = Duration::from_secs_f64(limits.max_wall_time.max(0.0));
    let mut executed = 0usize;
    let mut ended = false;
    let mut last_line = 0;
    let mut stop = None;
    for (i, raw) in script.lines().enumerate() {
        let line = i + 1;
        let statement = match parse_line(line, raw) {
            Ok(None) => continue,
            Ok(Some(s)) => s,
            Err(e) => {
                it.echo(line, raw);
                stop = Some(Stop::Error(RuntimeError {
                    line: Some(line),
                    kind: RuntimeErrorKind::Parse,
                    message: e.to_string(),
                }));
                break;
            }
        };
        if executed >= limits.max_statements {
            stop = Some(Stop::Abort(line, format!("statement budget of {} exhausted", limits.max_statements)));
            break;
        }
        if start.elapsed() > budget {
            stop = Some(Stop::Abort(line, format!("wall-time budget of {}s exhausted", limits.max_wall_time)));
            break;
        }
        executed += 1;
        last_line = line;
        it.echo(line, raw);
        match it.step(line, &statement) {
            Ok(Some(note)) => {
                let _ = writeln!(it.log, "       -> {note}");
            }
            Ok(None) => {}
            Err(s) => {
                stop = Some(s);
                break;
            }
        }
        if statement == Statement::End {
            ended = true;
            break;
        }
    }
    if stop.is_none() {
        if !ended {
            stop = Some(Stop::Error(RuntimeError {
                line: (last_line > 0).then_some(last_line),
                kind: RuntimeErrorKind::Lifecycle,
                message: "no termination signal: script ended without an end statement".into(),
            }));
        } else if it.written.is_none() {
            stop = Some(Stop::Error(RuntimeError {
                line: Some(last_line),
                kind: RuntimeErrorKind::Lifecycle,
                message: "no results sink: end reached before write_results".into(),
            }));
        }
    }
    let mut out = ExecutionOutcome {
        status: ExecutionStatus::Completed,
        results_path: None,
        log: String::new(),
        runtime_error: None,
        abort_reason: None,
        wall_time: 0.0,
    };
    match stop {
        None => {
            out.results_path = it.written.clone();
            let _ = writeln!(it.log, "STATUS: COMPLETED");
        }
        Some(Stop::Error(e)) => {
            let _ = writeln!(it.log, "ERROR {e}");
            let _ = writeln!(it.log, "STATUS: FAILED");
            out.status = ExecutionStatus::Failed;
            out.runtime_error = Some(e);
        }
        Some(Stop::Abort(line, reason)) => {
            let _ = writeln!(it.log, "ABORT before line {line}: {reason}");
            let _ = writeln!(it.log, "STATUS: ABORTED");
            out.status = ExecutionStatus::Aborted;
            out.abort_reason = Some(reason);
        }
    }
    out.log = it.log;
    out.wall_time = start.elapsed().as_secs_f64();
    out
}

fn err(line: usize, kind: RuntimeErrorKind, message: impl Into<String>) -> Stop {
    Stop::Error(RuntimeError {
        line: Some(line),
        kind,
        message: message.into(),
    })
}

impl Interpreter<'_> {
    fn echo(&mut self, line: usize, raw: &str) {
        let _ = writeln!(self.log, "[{line:>4}] {}", raw.trim());
    }

    fn relative(&self, p: &Path) -> String {
        p.strip_prefix(&self.root).unwrap_or(p).display().to_string()
    }

    fn step(&mut self, line: usize, statement: &Statement) -> Result<Option<String>, Stop> {
        use RuntimeErrorKind::*;
        match statement {
            Statement::ModelBegin if self.begun => return Err(err(line, Lifecycle, "model already begun")),
            Statement::ModelBegin => {
                self.begun = true;
                return Ok(None);
            }
            _ if !self.begun => {
                return Err(err(line, Lifecycle, format!("'{}' outside a model block: model begin absent", statement.keyword())))
            }
            _ => {}
        }
        let m = &mut self.model;
        let duplicate = |what: &str, id: u32| err(line, Model, format!("{what} {id} already defined"));
        match statement {
            Statement::ModelBegin => unreachable!(),
            Statement::NodeDef { id, x, y } => {
                if m.node(*id).is_some() {
                    return Err(duplicate("node", *id));
                }
                m.nodes.push(Node::new(*id, *x, *y));
            }
            Statement::MaterialDef { id, youngs_modulus, poisson_ratio, density } => {
                if m.material(*id).is_some() {
                    return Err(duplicate("material", *id));
                }
                m.materials.push(Material {
                    id: *id,
                    youngs_modulus: *youngs_modulus,
                    poisson_ratio: *poisson_ratio,
                    density: *density,
                });
            }
            Statement::SectionDef { id, material, area, inertia } => {
                if m.section(*id).is_some() {
                    return Err(duplicate("section", *id));
                }
                m.sections.push(Section { id: *id, material: *material, area: *area, moment_of_inertia: *inertia });
            }
            Statement::ElementDef { id, kind, nodes, section } => {
                if m.element(*id).is_some() {
                    return Err(duplicate("element", *id));
                }
                m.elements.push(Element { id: *id, kind: *kind, nodes: *nodes, section: *section });
            }
            Statement::Fix { node, dofs } => m.bcs.push(BoundaryCondition { node: *node, dofs: dofs.clone() }),
            Statement::LoadStmt { node, fx, fy, mz } => m.loads.push(Load { node: *node, fx: *fx, fy: *fy, mz: *mz }),
            Statement::Workspace(p) => {
                if !is_contained(&self.root, p) {
                    return Err(err(line, Isolation, format!("workspace '{p}' is outside the sandbox")));
                }
            }
            Statement::Delete(DeleteTarget::ModelRoot) => return Err(err(line, KernelProtection, MSG_KERNEL_PROTECTION)),
            Statement::Delete(DeleteTarget::Node(id)) => {
                let before = m.nodes.len();
                m.nodes.retain(|n| n.id != *id);
                if m.nodes.len() == before {
                    return Err(err(line, Model, format!("cannot delete node {id}: not defined")));
                }
            }
            Statement::Delete(DeleteTarget::Element(id)) => {
                let before = m.elements.len();
                m.elements.retain(|e| e.id != *id);
                if m.elements.len() == before {
                    return Err(err(line, Model, format!("cannot delete element {id}: not defined")));
                }
            }
            Statement::Analyze(kind) => return self.analyze(line, *kind).map(Some),
            Statement::WriteResults(p) => {
                if !is_contained(&self.root, p) {
                    return Err(err(line, Isolation, format!("results path '{p}' is outside the sandbox")));
                }
                let Some(results) = &self.results else {
                    return Err(err(line, Lifecycle, "no execution trigger: analyze statement absent before write_results"));
                };
                let target = resolve(Path::new(p), &self.root);
                if let Some(parent) = target.parent() {
                    fs::create_dir_all(parent).map_err(|e| err(line, Io, format!("cannot create {}: {e}", self.relative(parent))))?;
                }
                write_results(&target, results).map_err(|e| err(line, Io, format!("cannot write results: {e}")))?;
                let note = format!("wrote {}", self.relative(&target));
                self.written = Some(target);
                return Ok(Some(note));
            }
            Statement::End => {}
        }
        Ok(None)
    }

    fn analyze(&mut self, line: usize, kind: AnalyzeKind) -> Result<String, Stop> {
        use RuntimeErrorKind::*;
        let mut model = canonicalize(&self.model).map_err(|e| err(line, Model, e.to_string()))?;
        if model.nodes.is_empty() || model.elements.is_empty() {
            return Err(err(line, Model, "model has no nodes or no elements"));
        }
        let mut opts = SolverOptions::default();
        if let AnalyzeKind::Modal { subdivisions: Some(s), .. } = kind {
            opts.modal_subdivisions = s.max(1) as usize;
        }
        let solved = match kind {
            AnalyzeKind::Modal { .. } => subdivide_frames(&model, opts.modal_subdivisions),
            _ => model.clone(),
        };
        let dofs = DofMap::build(&solved).len();
        if dofs > self.limits.max_solver_dofs {
            return Err(err(line, Solver, format!("{dofs} dofs exceed the limit of {}", self.limits.max_solver_dofs)));
        }
        let solver = |e: crate::solver::SolverError| err(line, Solver, e.to_string());
        let (results, note) = match kind {
            AnalyzeKind::Static => {
                model.analysis = AnalysisSpec::static_analysis();
                let r = solve_static_with(&model, &opts).map_err(solver)?;
                let note = format!("static solve: {dofs} dofs, equilibrium residual {:.3e}", r.equilibrium_residual);
                (ResultSet::Static(r), note)
            }
            AnalyzeKind::Modal { count, .. } => {
                let r = solve_modal_with(&model, count as usize, &opts).map_err(solver)?;
                let note = format!("modal solve: {dofs} dofs, {} modes", r.frequencies.len());
                (ResultSet::Modal(r), note)
            }
            AnalyzeKind::Topopt { volfrac, iterations } => {
                let r = optimize_topology_with(&model, volfrac, iterations, &OcParameters::default(), &opts).map_err(solver)?;
                let note = format!(
                    "topology optimization: {} iterations, volume fraction {:.6}",
                    r.iterations, r.final_volume_fraction
                );
                (ResultSet::TopologyOptimization(r), note)
            }
        };
        self.results = Some(results);
        Ok(note)
    }
}

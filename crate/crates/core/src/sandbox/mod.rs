//! Per-task workspaces, the script interpreter and the results database.

mod interpreter;
mod results;
mod workspace;

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

pub use interpreter::{
    execute, interpret, ExecutionOutcome, ExecutionStatus, Limits, RuntimeError, RuntimeErrorKind,
    MSG_KERNEL_PROTECTION,
};
pub use results::{read_results, write_results, ResultSet, ResultsError};
pub use workspace::{allocate_workspace, Workspace, WorkspaceError, LOG_FILE, SCRIPT_FILE};

/// Where scripts run. `Subprocess` launches `program exec --workspace DIR ...`,
/// which must print the outcome as JSON on stdout (the `vfea` binary does).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    #[default]
    InProcess,
    Subprocess { program: PathBuf },
}

pub fn execute_with(script: &str, workspace: &Workspace, limits: &Limits, mode: &ExecutionMode) -> ExecutionOutcome {
    match mode {
        ExecutionMode::InProcess => execute(script, workspace, limits),
        ExecutionMode::Subprocess { program } => execute_subprocess(program, script, workspace, limits),
    }
}

/// Entry point for the child side of subprocess mode: runs the workspace's
/// `script.sim` in-process.
pub fn execute_workspace_script(root: &Path, limits: &Limits) -> ExecutionOutcome {
    let workspace = Workspace {
        root: root.to_path_buf(),
        task_id: root.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        created_at: 0,
    };
    let script = std::fs::read_to_string(workspace.script_path()).unwrap_or_default();
    execute(&script, &workspace, limits)
}

fn execute_subprocess(program: &Path, script: &str, workspace: &Workspace, limits: &Limits) -> ExecutionOutcome {
    let start = Instant::now();
    let failed = |message: String| {
        let err = RuntimeError { line: None, kind: RuntimeErrorKind::Io, message };
        ExecutionOutcome {
            status: ExecutionStatus::Failed,
            results_path: None,
            log: format!("ERROR {err}\nSTATUS: FAILED\n"),
            runtime_error: Some(err),
            abort_reason: None,
            wall_time: start.elapsed().as_secs_f64(),
        }
    };
    if let Err(e) = std::fs::write(workspace.script_path(), script) {
        return failed(format!("cannot write script: {e}"));
    }
    let child = Command::new(program)
        .arg("exec")
        .arg("--workspace")
        .arg(&workspace.root)
        .arg("--max-statements")
        .arg(limits.max_statements.to_string())
        .arg("--max-dofs")
        .arg(limits.max_solver_dofs.to_string())
        .arg("--max-wall-time")
        .arg(limits.max_wall_time.to_string())
        .current_dir(&workspace.root)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn();
    let mut child = match child {
        Ok(c) => c,
        Err(e) => return failed(format!("cannot start {}: {e}", program.display())),
    };
    let deadline = Duration::from_secs_f64(limits.max_wall_time + 5.0);
    loop {
        match child.try_wait() {
            Ok(Some(_)) => break,
            Ok(None) if start.elapsed() > deadline => {
                let _ = child.kill();
                let _ = child.wait();
                let reason = format!("wall-time budget of {}s exhausted (process killed)", limits.max_wall_time);
                return ExecutionOutcome {
                    status: ExecutionStatus::Aborted,
                    results_path: None,
                    log: format!("ABORT {reason}\nSTATUS: ABORTED\n"),
                    runtime_error: None,
                    abort_reason: Some(reason),
                    wall_time: start.elapsed().as_secs_f64(),
                };
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(10)),
            Err(e) => return failed(format!("lost child process: {e}")),
        }
    }
    let output = match child.wait_with_output() {
        Ok(o) => o,
        Err(e) => return failed(format!("cannot read child output: {e}")),
    };
    match serde_json::from_slice::<ExecutionOutcome>(&output.stdout) {
        Ok(mut o) => {
            o.wall_time = start.elapsed().as_secs_f64();
            o
        }
        Err(e) => failed(format!("child produced no outcome: {e}")),
    }
}

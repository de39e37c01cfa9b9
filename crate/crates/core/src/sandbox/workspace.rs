use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub const SCRIPT_FILE: &str = "script.sim";
pub const LOG_FILE: &str = "run.log";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workspace {
    /// Absolute, symlink-free directory owned by this task.
    pub root: PathBuf,
    pub task_id: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

impl Workspace {
    pub fn script_path(&self) -> PathBuf {
        self.root.join(SCRIPT_FILE)
    }

    pub fn log_path(&self) -> PathBuf {
        self.root.join(LOG_FILE)
    }

    pub fn results_path(&self) -> PathBuf {
        self.root.join(crate::script::RESULTS_FILE)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WorkspaceError {
    #[error("invalid task id '{0}': must be non-empty and contain only letters, digits, '-', '_' or '.'")]
    InvalidTaskId(String),
    #[error("cannot allocate workspace under {root}: {source}")]
    Io { root: PathBuf, source: io::Error },
}

/// Creates `<root_dir>/<task_id>-<n>` where `n` is one above the largest suffix
/// already present for that task id. Existing directories are never reused.
pub fn allocate_workspace(root_dir: &Path, task_id: &str) -> Result<Workspace, WorkspaceError> {
    let valid = !task_id.is_empty()
        && task_id != "."
        && task_id != ".."
        && task_id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if !valid {
        return Err(WorkspaceError::InvalidTaskId(task_id.to_string()));
    }
    let io_err = |source| WorkspaceError::Io { root: root_dir.to_path_buf(), source };
    fs::create_dir_all(root_dir).map_err(io_err)?;
    let root = root_dir.canonicalize().map_err(io_err)?;
    let prefix = format!("{task_id}-");
    let mut next = 1u64;
    for entry in fs::read_dir(&root).map_err(io_err)? {
        let name = entry.map_err(io_err)?.file_name();
        if let Some(n) = name.to_str().and_then(|n| n.strip_prefix(&prefix)).and_then(|s| s.parse::<u64>().ok()) {
            next = next.max(n + 1);
        }
    }
    loop {
        let dir = root.join(format!("{prefix}{next}"));
        match fs::create_dir(&dir) {
            Ok(()) => {
                let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
                return Ok(Workspace { root: dir, task_id: task_id.to_string(), created_at });
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => next += 1,
            Err(e) => return Err(io_err(e)),
        }
    }
}

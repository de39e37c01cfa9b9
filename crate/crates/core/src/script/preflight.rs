use std::fmt;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ast::{DeleteTarget, ScriptAst, Statement};

pub const MSG_NO_TRIGGER: &str = "no execution trigger: analyze statement absent";
pub const MSG_NO_END: &str = "no termination signal: end statement absent";
pub const MSG_NO_SINK: &str = "no termination signal: write_results statement absent";
pub const MSG_ROOT_DELETION: &str = "unsafe kernel operation: deletion of protected root container";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Lifecycle,
    Safety,
    Isolation,
}

impl ViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationKind::Lifecycle => "lifecycle",
            ViolationKind::Safety => "safety",
            ViolationKind::Isolation => "isolation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreflightViolation {
    pub kind: ViolationKind,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for PreflightViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "[{}] line {l}: {}", self.kind.as_str(), self.message),
            None => write!(f, "[{}] {}", self.kind.as_str(), self.message),
        }
    }
}

/// A statement-level safety check. Returns a message when `statement` is unsafe.
pub trait SafetyRule: Send + Sync {
    fn check(&self, statement: &Statement) -> Option<String>;
}

pub struct RootDeletionRule;

impl SafetyRule for RootDeletionRule {
    fn check(&self, statement: &Statement) -> Option<String> {
        matches!(statement, Statement::Delete(DeleteTarget::ModelRoot)).then(|| MSG_ROOT_DELETION.to_string())
    }
}

pub fn default_rules() -> Vec<Box<dyn SafetyRule>> {
    vec![Box::new(RootDeletionRule)]
}

pub fn preflight(ast: &ScriptAst, workspace_root: &Path) -> Vec<PreflightViolation> {
    preflight_with(ast, workspace_root, &default_rules())
}

/// Violations in a fixed order: lifecycle, then safety and isolation by line.
pub fn preflight_with(ast: &ScriptAst, workspace_root: &Path, rules: &[Box<dyn SafetyRule>]) -> Vec<PreflightViolation> {
    let mut out = Vec::new();
    let lifecycle = |message: &str| PreflightViolation {
        kind: ViolationKind::Lifecycle,
        line: None,
        message: message.to_string(),
    };
    if !ast.has(|s| matches!(s, Statement::Analyze(_))) {
        out.push(lifecycle(MSG_NO_TRIGGER));
    }
    if !ast.has(|s| matches!(s, Statement::End)) {
        out.push(lifecycle(MSG_NO_END));
    }
    if !ast.has(|s| matches!(s, Statement::WriteResults(_))) {
        out.push(lifecycle(MSG_NO_SINK));
    }
    let root = resolve(workspace_root, Path::new("/"));
    for s in ast.iter() {
        for rule in rules {
            if let Some(message) = rule.check(&s.statement) {
                out.push(PreflightViolation {
                    kind: ViolationKind::Safety,
                    line: Some(s.line),
                    message,
                });
            }
        }
        if let Statement::Workspace(p) | Statement::WriteResults(p) = &s.statement {
            if !is_contained(&root, p) {
                out.push(PreflightViolation {
                    kind: ViolationKind::Isolation,
                    line: Some(s.line),
                    message: format!("path escapes workspace: '{p}' is not inside '{}'", root.display()),
                });
            }
        }
    }
    out
}

/// True when `path` (relative paths are taken against `root`) stays inside `root`.
/// `root` must already be resolved.
pub fn is_contained(root: &Path, path: &str) -> bool {
    resolve(Path::new(path), root).starts_with(root)
}

/// Lexical normalization (`.` and `..` folded without touching the filesystem),
/// then symlink resolution through the longest existing ancestor.
pub fn resolve(path: &Path, base: &Path) -> PathBuf {
    let joined = if path.is_absolute() { path.to_path_buf() } else { base.join(path) };
    let lexical = normalize(&joined);
    let mut existing = lexical.clone();
    let mut rest = Vec::new();
    loop {
        if let Ok(real) = existing.canonicalize() {
            let mut out = real;
            for part in rest.iter().rev() {
                out.push(part);
            }
            return normalize(&out);
        }
        match (existing.file_name().map(|n| n.to_os_string()), existing.parent()) {
            (Some(name), Some(parent)) => {
                rest.push(name);
                existing = parent.to_path_buf();
            }
            _ => return lexical,
        }
    }
}

fn normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for c in path.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                out.pop();
            }
            other => out.push(other.as_os_str()),
        }
    }
    out
}

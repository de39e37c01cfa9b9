use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ir::AnalysisMode;
use crate::solver::{ModalResult, StaticResult, TopoResult};

/// Contents of a results database, tagged by `result_kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result_kind", rename_all = "snake_case")]
pub enum ResultSet {
    Static(StaticResult),
    Modal(ModalResult),
    TopologyOptimization(TopoResult),
}

impl ResultSet {
    pub fn mode(&self) -> AnalysisMode {
        match self {
            ResultSet::Static(_) => AnalysisMode::Static,
            ResultSet::Modal(_) => AnalysisMode::Modal,
            ResultSet::TopologyOptimization(_) => AnalysisMode::TopologyOptimization,
        }
    }

    pub fn as_static(&self) -> Option<&StaticResult> {
        match self {
            ResultSet::Static(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_modal(&self) -> Option<&ModalResult> {
        match self {
            ResultSet::Modal(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_topology(&self) -> Option<&TopoResult> {
        match self {
            ResultSet::TopologyOptimization(r) => Some(r),
            _ => None,
        }
    }

    pub fn to_document(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("results serialize");
        s.push('\n');
        s
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ResultsError {
    #[error("results database not found: {0}")]
    Missing(PathBuf),
    #[error("results database {path} is corrupt: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("cannot access results database {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

pub fn write_results(path: &Path, results: &ResultSet) -> io::Result<()> {
    fs::write(path, results.to_document())
}

pub fn read_results(path: &Path) -> Result<ResultSet, ResultsError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(ResultsError::Missing(path.to_path_buf())),
        Err(e) if e.kind() == io::ErrorKind::InvalidData => {
            return Err(ResultsError::Corrupt { path: path.to_path_buf(), message: e.to_string() })
        }
        Err(source) => return Err(ResultsError::Io { path: path.to_path_buf(), source }),
    };
    serde_json::from_str(&text).map_err(|e| ResultsError::Corrupt { path: path.to_path_buf(), message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::fixtures::*;
    use crate::solver::{solve_modal, solve_static};

    #[test]
    fn static_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("results.res");
        let r = ResultSet::Static(solve_static(&cantilever(2.0, 1000.0)).unwrap());
        write_results(&p, &r).unwrap();
        assert_eq!(read_results(&p).unwrap(), r);
        assert!(fs::read_to_string(&p).unwrap().contains("\"result_kind\": \"static\""));
    }

    #[test]
    fn modal_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("results.res");
        let r = ResultSet::Modal(solve_modal(&cantilever(2.0, 1000.0), 3).unwrap());
        write_results(&p, &r).unwrap();
        assert_eq!(read_results(&p).unwrap(), r);
    }

    #[test]
    fn missing_and_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("results.res");
        assert!(matches!(read_results(&p), Err(ResultsError::Missing(_))));
        let doc = ResultSet::Static(solve_static(&two_bar_truss()).unwrap()).to_document();
        fs::write(&p, &doc[..doc.len() / 2]).unwrap();
        assert!(matches!(read_results(&p), Err(ResultsError::Corrupt { .. })));
    }
}

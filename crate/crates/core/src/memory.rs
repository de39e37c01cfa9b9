//! Experience replay buffer: structural and error signatures, density-gated
//! retrieval, and an append-only JSON-lines store.

use std::collections::BTreeSet;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::ir::{ElementKind, IrModel};

pub const DENSITY_RATIO_BOUNDS: (f64, f64) = (0.5, 2.0);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuralSignature {
    pub n_nodes: usize,
    pub n_elements: usize,
    pub section_kinds: BTreeSet<ElementKind>,
    pub n_loads: usize,
    pub n_bcs: usize,
}

impl StructuralSignature {
    pub fn new(
        n_nodes: usize,
        n_elements: usize,
        section_kinds: BTreeSet<ElementKind>,
        n_loads: usize,
        n_bcs: usize,
    ) -> Result<Self, RecordError> {
        let s = Self { n_nodes, n_elements, section_kinds, n_loads, n_bcs };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<(), RecordError> {
        if self.n_elements > 0 && self.section_kinds.is_empty() {
            return Err(RecordError("signature with elements must name at least one element kind".into()));
        }
        Ok(())
    }

    /// Nodes per element, with the element count floored at 1.
    pub fn density(&self) -> f64 {
        self.n_nodes as f64 / self.n_elements.max(1) as f64
    }

    /// `candidate.density / self.density` lies in [0.5, 2.0]. Evaluated by exact
    /// integer cross-multiplication; two zero densities match each other.
    pub fn admits(&self, candidate: &StructuralSignature) -> bool {
        let (nq, eq) = (self.n_nodes as u128, self.n_elements.max(1) as u128);
        let (nc, ec) = (candidate.n_nodes as u128, candidate.n_elements.max(1) as u128);
        2 * nc * eq >= nq * ec && nc * eq <= 2 * nq * ec
    }
}

pub fn compute_signature(model: &IrModel) -> StructuralSignature {
    StructuralSignature {
        n_nodes: model.nodes.len(),
        n_elements: model.elements.len(),
        section_kinds: model.elements.iter().map(|e| e.kind).collect(),
        n_loads: model.loads.len(),
        n_bcs: model.bcs.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    TypeILifecycle,
    TypeIiHallucination,
    TypeIiiUnsafeState,
    Other,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::TypeILifecycle => "type_i_lifecycle",
            ErrorCategory::TypeIiHallucination => "type_ii_hallucination",
            ErrorCategory::TypeIiiUnsafeState => "type_iii_unsafe_state",
            ErrorCategory::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorSignature {
    pub category: ErrorCategory,
    pub tokens: BTreeSet<String>,
    pub line: Option<usize>,
}

/// Lowercase word tokens (letters, digits, `_`), purely numeric words dropped.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty() && !w.chars().all(|c| c.is_ascii_digit()))
        .map(|w| w.to_lowercase())
        .collect()
}

fn line_number(text: &str) -> Option<usize> {
    let lower = text.to_lowercase();
    lower.match_indices("line ").find_map(|(i, m)| {
        let digits: String = lower[i + m.len()..].chars().take_while(|c| c.is_ascii_digit()).collect();
        digits.parse().ok()
    })
}

/// Total classifier. Unsafe-state markers win over hallucination markers,
/// which win over lifecycle markers.
pub fn classify_error(text: &str) -> ErrorSignature {
    let lower = text.to_lowercase();
    let has = |needles: &[&str]| needles.iter().any(|n| lower.contains(n));
    let category = if has(&["kernel protection", "protected root", "unsafe kernel"]) {
        ErrorCategory::TypeIiiUnsafeState
    } else if has(&["unknown statement"]) {
        ErrorCategory::TypeIiHallucination
    } else if has(&["no execution trigger", "no termination signal", "no results sink"]) {
        ErrorCategory::TypeILifecycle
    } else {
        ErrorCategory::Other
    };
    ErrorSignature {
        category,
        tokens: tokenize(text),
        line: line_number(text),
    }
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Failure,
    Success,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid experience record: {0}")]
pub struct RecordError(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperienceRecord {
    pub signature: StructuralSignature,
    pub error: Option<ErrorSignature>,
    pub lesson: String,
    pub script_excerpt: String,
    pub outcome: Outcome,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

pub fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl ExperienceRecord {
    pub fn failure(
        signature: StructuralSignature,
        error: ErrorSignature,
        lesson: impl Into<String>,
        script_excerpt: impl Into<String>,
    ) -> Result<Self, RecordError> {
        let r = Self {
            signature,
            error: Some(error),
            lesson: lesson.into(),
            script_excerpt: script_excerpt.into(),
            outcome: Outcome::Failure,
            created_at: now(),
        };
        r.validate()?;
        Ok(r)
    }

    pub fn success(
        signature: StructuralSignature,
        lesson: impl Into<String>,
        script_excerpt: impl Into<String>,
    ) -> Result<Self, RecordError> {
        let r = Self {
            signature,
            error: None,
            lesson: lesson.into(),
            script_excerpt: script_excerpt.into(),
            outcome: Outcome::Success,
            created_at: now(),
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        self.signature.check()?;
        match self.outcome {
            Outcome::Failure if self.error.is_none() => Err(RecordError("failure record without an error signature".into())),
            Outcome::Success if self.script_excerpt.trim().is_empty() => {
                Err(RecordError("success record without a script excerpt".into()))
            }
            _ => Ok(()),
        }
    }
}

/// At most `k` records admitted by the density filter, ordered by token Jaccard
/// (desc), category match (desc), then recency (later insertions first).
pub fn retrieve(
    records: &[ExperienceRecord],
    query_sig: &StructuralSignature,
    query_err: &ErrorSignature,
    k: usize,
) -> Vec<ExperienceRecord> {
    let mut scored: Vec<(f64, bool, usize)> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| query_sig.admits(&r.signature))
        .map(|(i, r)| {
            let (sim, same) = match &r.error {
                Some(e) => (jaccard(&e.tokens, &query_err.tokens), e.category == query_err.category),
                None => (0.0, false),
            };
            (sim, same, i)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)).then(b.2.cmp(&a.2)));
    scored.into_iter().take(k).map(|(_, _, i)| records[i].clone()).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error("cannot persist experience record to {path}: {source}")]
    Persist { path: PathBuf, source: io::Error },
    #[error("cannot load memory store {path}: {message}")]
    Load { path: PathBuf, message: String },
    #[error(transparent)]
    Record(#[from] RecordError),
}

pub fn record_line(r: &ExperienceRecord) -> String {
    let mut s = serde_json::to_string(r).expect("record serializes");
    s.push('\n');
    s
}

/// Replay buffer, optionally backed by a JSON-lines file. Reads take a shared
/// lock; appends are serialized and reach the file before becoming visible.
#[derive(Debug, Default)]
pub struct MemoryBuffer {
    path: Option<PathBuf>,
    records: RwLock<Vec<ExperienceRecord>>,
    writer: Mutex<()>,
}

impl MemoryBuffer {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or starts) the store at `path`. A torn final line left by an
    /// interrupted append is ignored; any other malformed line is an error.
    pub fn open(path: &Path) -> Result<Self, MemoryError> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(MemoryError::Load { path: path.to_path_buf(), message: e.to_string() }),
        };
        let complete = text.ends_with('\n');
        let lines: Vec<&str> = text.lines().collect();
        let mut records = Vec::new();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<ExperienceRecord>(line) {
                Ok(r) => records.push(r),
                Err(_) if i + 1 == lines.len() && !complete => break,
                Err(e) => {
                    return Err(MemoryError::Load {
                        path: path.to_path_buf(),
                        message: format!("line {}: {e}", i + 1),
                    })
                }
            }
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            records: RwLock::new(records),
            writer: Mutex::new(()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn records(&self) -> Vec<ExperienceRecord> {
        self.records.read().expect("memory lock").clone()
    }

    pub fn len(&self) -> usize {
        self.records.read().expect("memory lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn record(&self, rec: ExperienceRecord) -> Result<(), MemoryError> {
        rec.validate()?;
        let _guard = self.writer.lock().expect("memory writer");
        if let Some(path) = &self.path {
            let persist = |source| MemoryError::Persist { path: path.clone(), source };
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(persist)?;
            }
            let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(persist)?;
            f.write_all(record_line(&rec).as_bytes()).map_err(persist)?;
            f.flush().map_err(persist)?;
        }
        self.records.write().expect("memory lock").push(rec);
        Ok(())
    }

    pub fn retrieve(&self, sig: &StructuralSignature, err: &ErrorSignature, k: usize) -> Vec<ExperienceRecord> {
        retrieve(&self.records.read().expect("memory lock"), sig, err, k)
    }

    /// Most recent success records admitted by the density filter.
    pub fn successes_for(&self, sig: &StructuralSignature, k: usize) -> Vec<ExperienceRecord> {
        let records = self.records.read().expect("memory lock");
        records
            .iter()
            .rev()
            .filter(|r| r.outcome == Outcome::Success && sig.admits(&r.signature))
            .take(k)
            .cloned()
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::fixtures::*;
    use proptest::prelude::*;

    fn sig(n: usize, e: usize) -> StructuralSignature {
        let kinds = if e > 0 { [ElementKind::TrussBar].into() } else { BTreeSet::new() };
        StructuralSignature::new(n, e, kinds, 1, 2).unwrap()
    }

    fn failure(s: StructuralSignature, msg: &str) -> ExperienceRecord {
        ExperienceRecord::failure(s, classify_error(msg), format!("lesson for {msg}"), "").unwrap()
    }

    #[test]
    fn signature_counts() {
        let s = compute_signature(&two_bar_truss());
        assert_eq!(s, sig(3, 2));
        let mut mixed = cantilever(2.0, 1.0);
        mixed.elements.extend(two_bar_truss().elements.into_iter().map(|mut e| {
            e.id += 10;
            e
        }));
        assert_eq!(compute_signature(&mixed).section_kinds.len(), 2);
        let mut unloaded = two_bar_truss();
        unloaded.loads.clear();
        assert_eq!(compute_signature(&unloaded).n_loads, 0);
    }

    #[test]
    fn classification_examples() {
        let a = classify_error("no execution trigger: analyze statement absent");
        assert_eq!(a.category, ErrorCategory::TypeILifecycle);
        let b = classify_error("unknown statement 'mesh_edges' at line 12");
        assert_eq!((b.category, b.line), (ErrorCategory::TypeIiHallucination, Some(12)));
        assert!(b.tokens.contains("mesh_edges") && !b.tokens.contains("12"));
        let c = classify_error("kernel protection: deletion of protected root container");
        assert_eq!(c.category, ErrorCategory::TypeIiiUnsafeState);
        assert_eq!(classify_error("").category, ErrorCategory::Other);
        assert_eq!(classify_error("Matrix is singular").tokens, ["is", "matrix", "singular"].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn density_filter_examples() {
        let q = sig(3, 2);
        assert!(!q.admits(&sig(9, 2)));
        assert!(q.admits(&sig(6, 2)) && q.admits(&sig(3, 4)));
        assert!(!q.admits(&sig(2, 4)));
        assert!(sig(0, 0).admits(&sig(0, 3)));
        assert!(!sig(0, 0).admits(&sig(1, 1)));
    }

    #[test]
    fn retrieval_orders_by_jaccard_then_category_then_recency() {
        assert!(retrieve(&[], &sig(3, 2), &classify_error("x"), 3).is_empty());
        let q = classify_error("alpha beta gamma delta");
        let recs = vec![
            failure(sig(3, 2), "alpha zeta"),
            failure(sig(3, 2), "alpha beta gamma delta epsilon"),
            failure(sig(30, 2), "alpha beta gamma delta"),
            failure(sig(3, 2), "alpha zeta"),
        ];
        let got = retrieve(&recs, &sig(3, 2), &q, 10);
        assert_eq!(got.len(), 3);
        assert_eq!(got[0], recs[1]);
        assert_eq!(got[1].created_at, recs[3].created_at);
        assert_eq!(retrieve(&recs, &sig(3, 2), &q, 1).len(), 1);
    }

    #[test]
    fn invariants_enforced_at_construction() {
        let bad = ExperienceRecord { error: None, outcome: Outcome::Failure, ..failure(sig(3, 2), "x") };
        assert!(bad.validate().is_err());
        assert!(ExperienceRecord::success(sig(3, 2), "ok", "   ").is_err());
        assert!(StructuralSignature::new(3, 2, BTreeSet::new(), 0, 0).is_err());
        assert!(MemoryBuffer::in_memory().record(bad).is_err());
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mem").join("h.jsonl");
        let buf = MemoryBuffer::open(&p).unwrap();
        for i in 0..100 {
            buf.record(failure(sig(3 + i % 4, 2), &format!("error number {i} at line {i}"))).unwrap();
        }
        let reloaded = MemoryBuffer::open(&p).unwrap();
        assert_eq!(reloaded.records(), buf.records());
        assert_eq!(reloaded.len(), 100);
        let bytes = fs::read_to_string(&p).unwrap();
        assert_eq!(bytes, reloaded.records().iter().map(record_line).collect::<String>());
    }

    #[test]
    fn torn_tail_is_ignored_but_corruption_is_not() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.jsonl");
        let line = record_line(&failure(sig(3, 2), "a"));
        fs::write(&p, format!("{line}{}", &line[..10])).unwrap();
        assert_eq!(MemoryBuffer::open(&p).unwrap().len(), 1);
        fs::write(&p, format!("{}\n{line}", &line[..10])).unwrap();
        assert!(MemoryBuffer::open(&p).is_err());
    }

    proptest! {
        #[test]
        fn density_filter_is_symmetric(a in (0usize..60, 0usize..60), b in (0usize..60, 0usize..60)) {
            let (x, y) = (sig(a.0, a.1), sig(b.0, b.1));
            prop_assert_eq!(x.admits(&y), y.admits(&x));
        }

        #[test]
        fn density_filter_matches_float_ratio(a in (1usize..60, 0usize..60), b in (1usize..60, 0usize..60)) {
            let (q, c) = (sig(a.0, a.1), sig(b.0, b.1));
            let ratio = c.density() / q.density();
            // exact ratios at the bounds are decided by integer arithmetic
            if (ratio - 0.5).abs() > 1e-12 && (ratio - 2.0).abs() > 1e-12 {
                prop_assert_eq!(q.admits(&c), (0.5..=2.0).contains(&ratio));
            }
        }

        #[test]
        fn classify_is_total(text in ".{0,80}") {
            let s = classify_error(&text);
            prop_assert!(s.tokens.iter().all(|t| t.to_lowercase() == *t));
        }

        #[test]
        fn retrieval_is_bounded_and_sorted(
            msgs in prop::collection::vec(("[a-d ]{0,12}", 1usize..8, 1usize..8), 0..20),
            query in "[a-d ]{0,12}",
            k in 1usize..6,
        ) {
            let recs: Vec<_> = msgs.iter().map(|(m, n, e)| failure(sig(*n, *e), m)).collect();
            let q = classify_error(&query);
            let got = retrieve(&recs, &sig(3, 3), &q, k);
            prop_assert!(got.len() <= k);
            let key = |r: &ExperienceRecord| {
                let e = r.error.as_ref().unwrap();
                (jaccard(&e.tokens, &q.tokens), e.category == q.category)
            };
            for w in got.windows(2) {
                let (a, b) = (key(&w[0]), key(&w[1]));
                prop_assert!(a.0 > b.0 || (a.0 == b.0 && a.1 >= b.1));
            }
        }
    }
}

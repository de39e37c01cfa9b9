use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::context::DebugContext;
use super::reflect::{LESSON_HALLUCINATION, LESSON_LIFECYCLE, LESSON_SAFETY};
use crate::ir::IrModel;
use crate::memory::ExperienceRecord;
use crate::script::lower_ir;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("generator failed: {0}")]
pub struct GeneratorError(pub String);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid generator spec '{spec}': {reason}")]
pub struct ConfigError {
    pub spec: String,
    pub reason: String,
}

/// Script author behind the synthesis loop. Implementations must be
/// deterministic for identical inputs.
pub trait Generator: Send {
    fn name(&self) -> String;

    fn generate(&mut self, model: &IrModel, workspace: &Path, memory: &[ExperienceRecord]) -> Result<String, GeneratorError>;

    fn repair(&mut self, script: &str, context: &DebugContext) -> Result<String, GeneratorError>;
}

/// Wraps the deterministic lowering.
#[derive(Debug, Default)]
pub struct PerfectGenerator {
    last: Option<String>,
}

impl Generator for PerfectGenerator {
    fn name(&self) -> String {
        "perfect".into()
    }

    fn generate(&mut self, model: &IrModel, workspace: &Path, _memory: &[ExperienceRecord]) -> Result<String, GeneratorError> {
        let s = lower_ir(model, workspace).map_err(|e| GeneratorError(e.to_string()))?;
        self.last = Some(s.clone());
        Ok(s)
    }

    fn repair(&mut self, script: &str, _context: &DebugContext) -> Result<String, GeneratorError> {
        Ok(self.last.clone().unwrap_or_else(|| script.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    TypeI,
    TypeII,
    TypeIII,
}

impl FaultKind {
    pub const ALL: [FaultKind; 3] = [FaultKind::TypeI, FaultKind::TypeII, FaultKind::TypeIII];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::TypeI => "type_i",
            FaultKind::TypeII => "type_ii",
            FaultKind::TypeIII => "type_iii",
        }
    }

    pub fn parse(s: &str) -> Option<FaultKind> {
        FaultKind::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// The lesson text whose presence makes a heeding mock drop this fault.
    pub fn cure(self) -> &'static str {
        match self {
            FaultKind::TypeI => LESSON_LIFECYCLE,
            FaultKind::TypeII => LESSON_HALLUCINATION,
            FaultKind::TypeIII => LESSON_SAFETY,
        }
    }

    /// Applies the fault to a clean script.
    pub fn inject(self, script: &str) -> String {
        let mut lines: Vec<&str> = script.lines().collect();
        let after_begin = lines.iter().position(|l| l.trim() == "model begin").map_or(0, |i| i + 1);
        match self {
            FaultKind::TypeI => lines.retain(|l| !l.trim_start().starts_with("analyze")),
            FaultKind::TypeII => lines.insert(after_begin, "mesh_edges part1"),
            FaultKind::TypeIII => {
                let at = lines.iter().position(|l| l.trim_start().starts_with("analyze")).unwrap_or(lines.len());
                lines.insert(at, "delete model root");
            }
        }
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

/// Injects one fault on generation; on repair returns the clean lowering iff
/// the context carries the matching lesson (never, when stubborn).
#[derive(Debug)]
pub struct FaultyGenerator {
    pub fault: FaultKind,
    pub stubborn: bool,
    clean: Option<String>,
}

impl FaultyGenerator {
    pub fn new(fault: FaultKind, stubborn: bool) -> Self {
        Self { fault, stubborn, clean: None }
    }
}

impl Generator for FaultyGenerator {
    fn name(&self) -> String {
        format!("faulty:{}{}", self.fault.as_str(), if self.stubborn { ":stubborn" } else { "" })
    }

    fn generate(&mut self, model: &IrModel, workspace: &Path, _memory: &[ExperienceRecord]) -> Result<String, GeneratorError> {
        let clean = lower_ir(model, workspace).map_err(|e| GeneratorError(e.to_string()))?;
        let faulty = self.fault.inject(&clean);
        self.clean = Some(clean);
        Ok(faulty)
    }

    fn repair(&mut self, script: &str, context: &DebugContext) -> Result<String, GeneratorError> {
        let heeded = !self.stubborn && context.lessons.iter().any(|l| l.text.contains(self.fault.cure()));
        match (&self.clean, heeded) {
            (Some(clean), true) => Ok(clean.clone()),
            _ => Ok(script.to_string()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub ir_document: serde_json::Value,
    pub workspace: String,
    pub memory_lessons: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub debug_context: Option<DebugContext>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub script: String,
}

/// Speaks JSON over HTTP POST: a [`GenerateRequest`] in, a [`GenerateResponse`] out.
#[derive(Debug)]
pub struct ExternalGenerator {
    pub endpoint: String,
    pub timeout: Duration,
    pub retries: u32,
    model: Option<(serde_json::Value, PathBuf)>,
}

impl ExternalGenerator {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(120),
            retries: 2,
            model: None,
        }
    }

    fn call(&self, request: &GenerateRequest) -> Result<String, GeneratorError> {
        let agent: ureq::Agent = ureq::Agent::config_builder().timeout_global(Some(self.timeout)).build().into();
        let body = serde_json::to_string(request).map_err(|e| GeneratorError(e.to_string()))?;
        let mut last = String::new();
        for _ in 0..=self.retries {
            let sent = agent
                .post(&self.endpoint)
                .header("Content-Type", "application/json")
                .send(body.as_str());
            match sent {
                Ok(mut response) => {
                    let text = response.body_mut().read_to_string().map_err(|e| GeneratorError(e.to_string()))?;
                    let parsed: GenerateResponse = serde_json::from_str(&text)
                        .map_err(|e| GeneratorError(format!("malformed response from {}: {e}", self.endpoint)))?;
                    return Ok(parsed.script);
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(GeneratorError(format!("{} unreachable: {last}", self.endpoint)))
    }
}

impl Generator for ExternalGenerator {
    fn name(&self) -> String {
        format!("external:{}", self.endpoint)
    }

    fn generate(&mut self, model: &IrModel, workspace: &Path, memory: &[ExperienceRecord]) -> Result<String, GeneratorError> {
        let ir = serde_json::to_value(model).map_err(|e| GeneratorError(e.to_string()))?;
        self.model = Some((ir.clone(), workspace.to_path_buf()));
        self.call(&GenerateRequest {
            ir_document: ir,
            workspace: workspace.display().to_string(),
            memory_lessons: memory.iter().map(|r| r.lesson.clone()).collect(),
            script: None,
            debug_context: None,
        })
    }

    fn repair(&mut self, script: &str, context: &DebugContext) -> Result<String, GeneratorError> {
        let (ir, ws) = self.model.clone().ok_or_else(|| GeneratorError("repair called before generate".into()))?;
        self.call(&GenerateRequest {
            ir_document: ir,
            workspace: ws.display().to_string(),
            memory_lessons: context.lessons.iter().map(|l| l.text.clone()).collect(),
            script: Some(script.to_string()),
            debug_context: Some(context.clone()),
        })
    }
}

/// `perfect`, `faulty:<type_i|type_ii|type_iii>[:stubborn]` or `external:<url>`.
pub fn make_generator(spec: &str) -> Result<Box<dyn Generator>, ConfigError> {
    let bad = |reason: &str| ConfigError { spec: spec.to_string(), reason: reason.to_string() };
    if spec == "perfect" {
        return Ok(Box::new(PerfectGenerator::default()));
    }
    if let Some(url) = spec.strip_prefix("external:") {
        if !(url.starts_with("http://") || url.starts_with("https://")) {
            return Err(bad("endpoint must be an http:// or https:// URL"));
        }
        return Ok(Box::new(ExternalGenerator::new(url)));
    }
    if let Some(rest) = spec.strip_prefix("faulty:") {
        let mut parts = rest.split(':');
        let kind = parts.next().and_then(FaultKind::parse).ok_or_else(|| bad("fault kind must be type_i, type_ii or type_iii"))?;
        let stubborn = match parts.next() {
            None => false,
            Some("stubborn") => true,
            Some(_) => return Err(bad("only the 'stubborn' modifier is recognised")),
        };
        if parts.next().is_some() {
            return Err(bad("too many ':' sections"));
        }
        return Ok(Box::new(FaultyGenerator::new(kind, stubborn)));
    }
    Err(bad("expected perfect, faulty:<kind>[:stubborn] or external:<url>"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::fixtures::*;
    use crate::script::{parse_script, preflight, ViolationKind};
    use crate::synthesis::context::{Lesson, LessonSource};

    fn ctx(lesson: &str) -> DebugContext {
        DebugContext {
            lessons: vec![Lesson { source: LessonSource::Reflection, text: lesson.into() }],
            ..DebugContext::default()
        }
    }

    #[test]
    fn spec_parsing() {
        for ok in ["perfect", "faulty:type_i", "faulty:type_ii:stubborn", "faulty:type_iii", "external:http://localhost:9/x"] {
            assert_eq!(make_generator(ok).unwrap().name(), ok);
        }
        for bad in ["", "faulty", "faulty:type_iv", "faulty:type_i:lazy", "external:ftp://x", "oracle"] {
            assert!(make_generator(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn injected_faults_are_visible_to_preflight() {
        let ws = Path::new("/w");
        let clean = lower_ir(&two_bar_truss(), ws).unwrap();
        let no_trigger = FaultKind::TypeI.inject(&clean);
        assert!(!no_trigger.contains("analyze"));
        let v = preflight(&parse_script(&no_trigger).unwrap(), ws);
        assert_eq!(v[0].kind, ViolationKind::Lifecycle);
        assert!(parse_script(&FaultKind::TypeII.inject(&clean)).is_err());
        let v = preflight(&parse_script(&FaultKind::TypeIII.inject(&clean)).unwrap(), ws);
        assert_eq!(v[0].kind, ViolationKind::Safety);
    }

    #[test]
    fn heeding_and_stubborn_repair() {
        let ws = Path::new("/w");
        let m = two_bar_truss();
        let mut g = FaultyGenerator::new(FaultKind::TypeIII, false);
        let bad = g.generate(&m, ws, &[]).unwrap();
        assert_eq!(g.repair(&bad, &ctx("unrelated")).unwrap(), bad);
        assert_eq!(g.repair(&bad, &ctx(LESSON_SAFETY)).unwrap(), lower_ir(&m, ws).unwrap());
        let mut s = FaultyGenerator::new(FaultKind::TypeII, true);
        let bad = s.generate(&m, ws, &[]).unwrap();
        assert_eq!(s.repair(&bad, &ctx(LESSON_HALLUCINATION)).unwrap(), bad);
    }
}

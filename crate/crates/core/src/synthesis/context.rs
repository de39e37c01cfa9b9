use serde::{Deserialize, Serialize};

use crate::memory::{classify_error, ErrorCategory, ExperienceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LessonSource {
    Reflection,
    Memory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lesson {
    pub source: LessonSource,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub category: ErrorCategory,
    pub message: String,
    pub line: Option<usize>,
}

impl Default for ErrorSummary {
    fn default() -> Self {
        Self {
            category: ErrorCategory::Other,
            message: String::new(),
            line: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DebugContext {
    pub error_summary: ErrorSummary,
    pub raw_log: String,
    pub lessons: Vec<Lesson>,
}

impl DebugContext {
    /// The composite prompt handed to a repairing generator.
    pub fn render(&self) -> String {
        let mut s = format!("## Error summary\ncategory: {}\n", self.error_summary.category.as_str());
        if let Some(l) = self.error_summary.line {
            s.push_str(&format!("line: {l}\n"));
        }
        s.push_str(&format!("message: {}\n\n## Raw log\n{}", self.error_summary.message, self.raw_log));
        if !self.raw_log.ends_with('\n') {
            s.push('\n');
        }
        s.push_str("\n## Lessons\n");
        for l in &self.lessons {
            let tag = match l.source {
                LessonSource::Reflection => "reflection",
                LessonSource::Memory => "memory",
            };
            s.push_str(&format!("- [{tag}] {}\n", l.text));
        }
        s
    }
}

/// Adds `lesson` unless its text is already present. A memory-sourced copy
/// replaces the tag of an existing reflection entry.
pub fn merge_lesson(into: &mut Vec<Lesson>, lesson: Lesson) {
    match into.iter_mut().find(|l| l.text == lesson.text) {
        Some(existing) if lesson.source == LessonSource::Memory => existing.source = LessonSource::Memory,
        Some(_) => {}
        None => into.push(lesson),
    }
}

/// Builds the summary from `classify_error`, attaches `log` verbatim and merges
/// reflection lessons with lessons from retrieved records.
pub fn compose_debug_context(
    error: &str,
    line: Option<usize>,
    log: &str,
    retrieved: &[ExperienceRecord],
    reflections: &[String],
) -> DebugContext {
    let sig = classify_error(error);
    let mut lessons = Vec::new();
    for r in reflections {
        merge_lesson(&mut lessons, Lesson { source: LessonSource::Reflection, text: r.clone() });
    }
    for rec in retrieved.iter().filter(|r| !r.lesson.trim().is_empty()) {
        merge_lesson(&mut lessons, Lesson { source: LessonSource::Memory, text: rec.lesson.clone() });
    }
    DebugContext {
        error_summary: ErrorSummary {
            category: sig.category,
            message: error.to_string(),
            line: line.or(sig.line),
        },
        raw_log: log.to_string(),
        lessons,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::fixtures::*;
    use crate::memory::compute_signature;

    #[test]
    fn fault_line_is_propagated() {
        let log = "[  44] node 3 1 1\n[  45] delete model root\nERROR kernel-protection error at line 45\n";
        let c = compose_debug_context("kernel protection: deletion of protected root container", Some(45), log, &[], &["never".into()]);
        assert_eq!(c.error_summary.line, Some(45));
        assert_eq!(c.error_summary.category, ErrorCategory::TypeIiiUnsafeState);
        assert!(c.raw_log.contains("45"));
        assert!(c.lessons.iter().all(|l| l.source == LessonSource::Reflection));
        assert!(c.render().contains("- [reflection] never"));
    }

    #[test]
    fn line_falls_back_to_message() {
        let c = compose_debug_context("unknown statement 'x' at line 12", None, "log", &[], &[]);
        assert_eq!(c.error_summary.line, Some(12));
    }

    #[test]
    fn duplicate_lessons_keep_memory_tag() {
        let sig = compute_signature(&two_bar_truss());
        let rec = ExperienceRecord::failure(sig, classify_error("x"), "same lesson", "").unwrap();
        let c = compose_debug_context("x", None, "log", &[rec], &["same lesson".into(), "other".into()]);
        assert_eq!(c.lessons.len(), 2);
        assert_eq!(c.lessons[0], Lesson { source: LessonSource::Memory, text: "same lesson".into() });
    }
}

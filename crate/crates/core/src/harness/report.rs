use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{CaseReport, Metrics};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub schema_valid: f64,
    pub node_accuracy: f64,
    pub connectivity_f1: f64,
    pub bc_detection: f64,
    pub overall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub cases: usize,
    pub execution_success_rate: f64,
    pub fallback_activation_rate: f64,
    /// Retries on the generated path -> number of cases.
    pub retry_histogram: BTreeMap<usize, usize>,
    /// Over the cases that carried a truth IR; absent when none did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_means: Option<MetricMeans>,
    pub total_time: f64,
}

pub fn aggregate(reports: &[CaseReport]) -> SuiteSummary {
    let n = reports.len().max(1) as f64;
    let share = |f: &dyn Fn(&CaseReport) -> bool| reports.iter().filter(|r| f(r)).count() as f64 / n;
    let mut retry_histogram = BTreeMap::new();
    for t in reports.iter().filter_map(|r| r.trace.as_ref()) {
        *retry_histogram.entry(t.retries).or_insert(0) += 1;
    }
    let metrics: Vec<&Metrics> = reports.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let metric_means = (!metrics.is_empty()).then(|| {
        let m = metrics.len() as f64;
        let mean = |f: &dyn Fn(&Metrics) -> f64| metrics.iter().map(|x| f(x)).sum::<f64>() / m;
        MetricMeans {
            schema_valid: mean(&|x| if x.schema_valid { 1.0 } else { 0.0 }),
            node_accuracy: mean(&|x| x.node_accuracy),
            connectivity_f1: mean(&|x| x.connectivity_f1),
            bc_detection: mean(&|x| x.bc_detection),
            overall: mean(&|x| x.overall),
        }
    });
    SuiteSummary {
        cases: reports.len(),
        execution_success_rate: share(&|r| r.execution_success),
        fallback_activation_rate: share(&|r| r.trace.as_ref().is_some_and(|t| t.fallback_used)),
        retry_histogram,
        metric_means,
        total_time: reports.iter().map(|r| r.timings.total).sum(),
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Report<'a> {
    Case(&'a CaseReport),
    Suite { summary: &'a SuiteSummary, cases: &'a [CaseReport] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Pretty JSON, timings included.
    StructuredText,
    /// Tables without timings.
    Markdown,
}

#[derive(Serialize)]
struct SuiteDocument<'a> {
    summary: &'a SuiteSummary,
    cases: &'a [CaseReport],
}

const DASH: &str = "—";

fn num(v: Option<f64>) -> String {
    v.map_or(DASH.to_string(), |x| format!("{x:.3}"))
}

fn sci(v: Option<f64>) -> String {
    v.map_or(DASH.to_string(), |x| format!("{x:.6e}"))
}

fn yes_no(v: bool) -> &'static str {
    if v {
        "yes"
    } else {
        "no"
    }
}

fn case_tables(out: &mut String, cases: &[CaseReport]) {
    out.push_str("| Case | Mode | Schema | Node | Conn | BC | Overall | Exec | Retries | Fallback |\n");
    out.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
    for c in cases {
        let m = c.metrics.as_ref();
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            c.case_id,
            c.mode.map_or(DASH, |m| m.as_str()),
            m.map_or(DASH, |m| yes_no(m.schema_valid)),
            num(m.map(|m| m.node_accuracy)),
            num(m.map(|m| m.connectivity_f1)),
            num(m.map(|m| m.bc_detection)),
            num(m.map(|m| m.overall)),
            yes_no(c.execution_success),
            c.trace.as_ref().map_or(DASH.to_string(), |t| t.retries.to_string()),
            c.trace.as_ref().map_or(DASH, |t| yes_no(t.fallback_used)),
        );
    }
    out.push_str("\n| Case | Max displacement | Max axial stress | First frequency | Final compliance | Volume fraction |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for c in cases {
        let h = &c.highlights;
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            c.case_id,
            sci(h.max_displacement),
            sci(h.max_abs_axial_stress),
            sci(h.first_frequency),
            sci(h.final_compliance),
            num(h.final_volume_fraction),
        );
    }
    let failures: Vec<&CaseReport> = cases.iter().filter(|c| c.failure.is_some()).collect();
    if !failures.is_empty() {
        out.push_str("\n## Failures\n\n");
        for c in failures {
            let f = c.failure.as_ref().expect("filtered");
            let _ = writeln!(out, "- {}: {} ({:?}): {}", c.case_id, f.kind, f.stage, f.message.replace('\n', " "));
        }
    }
}

/// Renders deterministically: the same input always gives the same bytes.
pub fn emit_report(report: Report<'_>, format: ReportFormat) -> String {
    match format {
        ReportFormat::StructuredText => {
            let mut s = match report {
                Report::Case(c) => serde_json::to_string_pretty(c),
                Report::Suite { summary, cases } => serde_json::to_string_pretty(&SuiteDocument { summary, cases }),
            }
            .expect("reports always serialize");
            s.push('\n');
            s
        }
        ReportFormat::Markdown => {
            let mut out = String::new();
            match report {
                Report::Case(c) => {
                    let _ = writeln!(out, "# Case {}\n", c.case_id);
                    case_tables(&mut out, std::slice::from_ref(c));
                    if let Some(t) = &c.trace {
                        out.push_str("\n## Attempts\n\n");
                        for a in &t.attempts {
                            let _ = writeln!(out, "- k={}: {}{}", a.k, a.result, a.detail.as_ref().map_or(String::new(), |d| format!(" ({d})")));
                        }
                    }
                }
                Report::Suite { summary, cases } => {
                    out.push_str("# Benchmark report\n\n");
                    let m = summary.metric_means.as_ref();
                    out.push_str("| Cases | Schema | Node | Conn | BC | Overall | Exec. success | Fallback |\n");
                    out.push_str("|---|---|---|---|---|---|---|---|\n");
                    let _ = writeln!(
                        out,
                        "| {} | {} | {} | {} | {} | {} | {} | {} |\n",
                        summary.cases,
                        num(m.map(|m| m.schema_valid)),
                        num(m.map(|m| m.node_accuracy)),
                        num(m.map(|m| m.connectivity_f1)),
                        num(m.map(|m| m.bc_detection)),
                        num(m.map(|m| m.overall)),
                        num(Some(summary.execution_success_rate)),
                        num(Some(summary.fallback_activation_rate)),
                    );
                    let hist: Vec<String> = summary.retry_histogram.iter().map(|(k, v)| format!("{k}: {v}")).collect();
                    let _ = writeln!(out, "Retry histogram: {}\n", if hist.is_empty() { DASH.to_string() } else { hist.join(", ") });
                    case_tables(&mut out, cases);
                }
            }
            out
        }
    }
}

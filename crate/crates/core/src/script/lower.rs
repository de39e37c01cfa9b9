use std::path::Path;

use super::ast::{print, AnalyzeKind, Located, ScriptAst, Statement};
use crate::ir::{canonicalize, AnalysisMode, IrModel};

pub const DEFAULT_VOLUME_FRACTION: f64 = 0.5;
pub const DEFAULT_MAX_ITERATIONS: u32 = 100;
pub const RESULTS_FILE: &str = "results.res";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot lower model: {0}")]
pub struct LoweringError(pub String);

/// Statement list for `model` without a comment header.
pub fn lower_statements(model: &IrModel, workspace: &Path) -> Result<Vec<Statement>, LoweringError> {
    let m = canonicalize(model).map_err(|e| LoweringError(e.to_string()))?;
    let ws = workspace.to_str().ok_or_else(|| LoweringError("workspace path is not UTF-8".into()))?;
    if ws.is_empty() || ws.chars().any(|c| c.is_whitespace() || c == '#') {
        return Err(LoweringError(format!("workspace path '{ws}' cannot be written as a single token")));
    }
    let mut out = vec![Statement::ModelBegin];
    out.extend(m.materials.iter().map(|mat| Statement::MaterialDef {
        id: mat.id,
        youngs_modulus: mat.youngs_modulus,
        poisson_ratio: mat.poisson_ratio,
        density: mat.density,
    }));
    out.extend(m.sections.iter().map(|s| Statement::SectionDef {
        id: s.id,
        material: s.material,
        area: s.area,
        inertia: s.moment_of_inertia,
    }));
    out.extend(m.nodes.iter().map(|n| Statement::NodeDef { id: n.id, x: n.x, y: n.y }));
    out.extend(m.elements.iter().map(|e| Statement::ElementDef {
        id: e.id,
        kind: e.kind,
        nodes: e.nodes,
        section: e.section,
    }));
    out.extend(m.bcs.iter().map(|b| Statement::Fix { node: b.node, dofs: b.dofs.clone() }));
    out.extend(m.loads.iter().map(|l| Statement::LoadStmt { node: l.node, fx: l.fx, fy: l.fy, mz: l.mz }));
    out.push(Statement::Workspace(ws.to_string()));
    let kind = match m.analysis.mode {
        AnalysisMode::Static => AnalyzeKind::Static,
        AnalysisMode::Modal => AnalyzeKind::Modal {
            count: m
                .analysis
                .modal_count
                .filter(|&c| c > 0)
                .ok_or_else(|| LoweringError("modal analysis without a positive modal_count".into()))?,
            subdivisions: None,
        },
        AnalysisMode::TopologyOptimization => AnalyzeKind::Topopt {
            volfrac: m.analysis.opt_volume_fraction.unwrap_or(DEFAULT_VOLUME_FRACTION),
            iterations: m.analysis.opt_max_iterations.unwrap_or(DEFAULT_MAX_ITERATIONS),
        },
    };
    out.push(Statement::Analyze(kind));
    out.push(Statement::WriteResults(format!("{}/{RESULTS_FILE}", ws.trim_end_matches('/'))));
    out.push(Statement::End);
    Ok(out)
}

/// Deterministic rule-based lowering of an audited model into a script
/// that parses and preflights clean against `workspace`.
pub fn lower_ir(model: &IrModel, workspace: &Path) -> Result<String, LoweringError> {
    let statements = lower_statements(model, workspace)?;
    let header = format!(
        "# vfea deterministic lowering\n# mode: {}, {} nodes, {} elements\n",
        model.analysis.mode.as_str(),
        model.nodes.len(),
        model.elements.len()
    );
    let offset = header.lines().count();
    let ast = ScriptAst {
        statements: statements
            .into_iter()
            .enumerate()
            .map(|(i, statement)| Located { line: offset + i + 1, statement })
            .collect(),
    };
    let body = print(&ast);
    Ok(format!("{header}{}", &body[offset..]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::fixtures::*;
    use crate::ir::AnalysisSpec;
    use crate::script::{parse_script, preflight};

    #[test]
    fn two_bar_truss_lowers_clean() {
        let ws = Path::new("/runs/task-1");
        let text = lower_ir(&two_bar_truss(), ws).unwrap();
        let ast = parse_script(&text).unwrap();
        assert!(preflight(&ast, ws).is_empty());
        assert!(text.contains("element 1 truss 1 3 section 1\n"));
        assert!(text.contains("write_results /runs/task-1/results.res\n"));
        assert!(text.ends_with("end\n"));
    }

    #[test]
    fn topopt_defaults_volume_fraction() {
        let mut m = two_bar_truss();
        m.analysis = AnalysisSpec::topology(None, None);
        let text = lower_ir(&m, Path::new("/w")).unwrap();
        assert!(text.contains("analyze topopt volfrac 0.5 iters 100\n"), "{text}");
        m.analysis = AnalysisSpec::topology(Some(0.3), Some(20));
        assert!(lower_ir(&m, Path::new("/w")).unwrap().contains("analyze topopt volfrac 0.3 iters 20\n"));
    }

    #[test]
    fn lowering_is_byte_stable() {
        let m = cantilever(2.0, 1000.0);
        assert_eq!(lower_ir(&m, Path::new("/w")).unwrap(), lower_ir(&m, Path::new("/w")).unwrap());
    }

    #[test]
    fn whitespace_in_workspace_is_rejected() {
        assert!(lower_ir(&two_bar_truss(), Path::new("/my runs/a")).is_err());
    }
}

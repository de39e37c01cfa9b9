use std::fmt;

use crate::ir::{Dof, ElementKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyzeKind {
    Static,
    Modal { count: u32, subdivisions: Option<u32> },
    Topopt { volfrac: f64, iterations: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeleteTarget {
    ModelRoot,
    Node(u32),
    Element(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    ModelBegin,
    NodeDef { id: u32, x: f64, y: f64 },
    MaterialDef { id: u32, youngs_modulus: f64, poisson_ratio: f64, density: f64 },
    SectionDef { id: u32, material: u32, area: f64, inertia: Option<f64> },
    ElementDef { id: u32, kind: ElementKind, nodes: [u32; 2], section: u32 },
    Fix { node: u32, dofs: Vec<Dof> },
    LoadStmt { node: u32, fx: f64, fy: f64, mz: f64 },
    Workspace(String),
    Analyze(AnalyzeKind),
    WriteResults(String),
    Delete(DeleteTarget),
    End,
}

impl Statement {
    pub fn keyword(&self) -> &'static str {
        match self {
            Statement::ModelBegin => "model",
            Statement::NodeDef { .. } => "node",
            Statement::MaterialDef { .. } => "material",
            Statement::SectionDef { .. } => "section",
            Statement::ElementDef { .. } => "element",
            Statement::Fix { .. } => "fix",
            Statement::LoadStmt { .. } => "load",
            Statement::Workspace(_) => "workspace",
            Statement::Analyze(_) => "analyze",
            Statement::WriteResults(_) => "write_results",
            Statement::Delete(_) => "delete",
            Statement::End => "end",
        }
    }
}

pub(crate) fn kind_token(kind: ElementKind) -> &'static str {
    match kind {
        ElementKind::TrussBar => "truss",
        ElementKind::FrameBeam => "frame",
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::ModelBegin => write!(f, "model begin"),
            Statement::NodeDef { id, x, y } => write!(f, "node {id} {x:?} {y:?}"),
            Statement::MaterialDef { id, youngs_modulus, poisson_ratio, density } => {
                write!(f, "material {id} E {youngs_modulus:?} nu {poisson_ratio:?} rho {density:?}")
            }
            Statement::SectionDef { id, material, area, inertia } => {
                write!(f, "section {id} material {material} area {area:?}")?;
                if let Some(i) = inertia {
                    write!(f, " inertia {i:?}")?;
                }
                Ok(())
            }
            Statement::ElementDef { id, kind, nodes, section } => {
                write!(f, "element {id} {} {} {} section {section}", kind_token(*kind), nodes[0], nodes[1])
            }
            Statement::Fix { node, dofs } => {
                write!(f, "fix {node}")?;
                for d in dofs {
                    write!(f, " {d}")?;
                }
                Ok(())
            }
            Statement::LoadStmt { node, fx, fy, mz } => write!(f, "load {node} fx {fx:?} fy {fy:?} mz {mz:?}"),
            Statement::Workspace(p) => write!(f, "workspace {p}"),
            Statement::Analyze(AnalyzeKind::Static) => write!(f, "analyze static"),
            Statement::Analyze(AnalyzeKind::Modal { count, subdivisions }) => {
                write!(f, "analyze modal count {count}")?;
                if let Some(s) = subdivisions {
                    write!(f, " subdiv {s}")?;
                }
                Ok(())
            }
            Statement::Analyze(AnalyzeKind::Topopt { volfrac, iterations }) => {
                write!(f, "analyze topopt volfrac {volfrac:?} iters {iterations}")
            }
            Statement::WriteResults(p) => write!(f, "write_results {p}"),
            Statement::Delete(DeleteTarget::ModelRoot) => write!(f, "delete model root"),
            Statement::Delete(DeleteTarget::Node(n)) => write!(f, "delete node {n}"),
            Statement::Delete(DeleteTarget::Element(e)) => write!(f, "delete element {e}"),
            Statement::End => write!(f, "end"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Located {
    /// 1-based source line.
    pub line: usize,
    pub statement: Statement,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScriptAst {
    pub statements: Vec<Located>,
}

impl ScriptAst {
    pub fn iter(&self) -> impl Iterator<Item = &Located> {
        self.statements.iter()
    }

    pub fn has(&self, pred: impl Fn(&Statement) -> bool) -> bool {
        self.statements.iter().any(|s| pred(&s.statement))
    }

    /// Copy with the statement at `index` removed; remaining lines keep their numbers.
    pub fn without(&self, index: usize) -> ScriptAst {
        let mut statements = self.statements.clone();
        statements.remove(index);
        ScriptAst { statements }
    }
}

/// Renders the AST so that every statement lands on its recorded line
/// (gaps become blank lines).
pub fn print(ast: &ScriptAst) -> String {
    let mut out = String::new();
    let mut current = 1;
    for s in &ast.statements {
        while current < s.line {
            out.push('\n');
            current += 1;
        }
        out.push_str(&s.statement.to_string());
        out.push('\n');
        current += 1;
    }
    out
}

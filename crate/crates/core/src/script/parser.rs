use std::fmt;

use super::ast::{AnalyzeKind, DeleteTarget, Located, ScriptAst, Statement};
use crate::ir::{Dof, ElementKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptParseError {
    /// 1-based; 0 for whole-script errors.
    pub line: usize,
    pub token: String,
    pub reason: String,
}

impl fmt::Display for ScriptParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.reason)
        } else if self.token.is_empty() {
            write!(f, "{} at line {}", self.reason, self.line)
        } else {
            write!(f, "{} '{}' at line {}", self.reason, self.token, self.line)
        }
    }
}

impl std::error::Error for ScriptParseError {}

pub fn parse_script(text: &str) -> Result<ScriptAst, ScriptParseError> {
    let mut statements = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if let Some(statement) = parse_line(i + 1, raw)? {
            statements.push(Located { line: i + 1, statement });
        }
    }
    if statements.is_empty() {
        return Err(ScriptParseError {
            line: 0,
            token: String::new(),
            reason: "empty script".into(),
        });
    }
    Ok(ScriptAst { statements })
}

/// Parses one source line; blank and comment-only lines yield `None`.
pub fn parse_line(line: usize, raw: &str) -> Result<Option<Statement>, ScriptParseError> {
    let code = raw.split('#').next().unwrap_or("");
    let tokens: Vec<&str> = code.split_whitespace().collect();
    if tokens.is_empty() {
        return Ok(None);
    }
    let mut c = Cursor { line, tokens: &tokens, pos: 1 };
    let stmt = match tokens[0] {
        "model" => {
            c.keyword("begin")?;
            Statement::ModelBegin
        }
        "node" => Statement::NodeDef {
            id: c.id()?,
            x: c.number()?,
            y: c.number()?,
        },
        "material" => {
            let id = c.id()?;
            c.keyword("E")?;
            let youngs_modulus = c.number()?;
            c.keyword("nu")?;
            let poisson_ratio = c.number()?;
            c.keyword("rho")?;
            Statement::MaterialDef { id, youngs_modulus, poisson_ratio, density: c.number()? }
        }
        "section" => {
            let id = c.id()?;
            c.keyword("material")?;
            let material = c.id()?;
            c.keyword("area")?;
            let area = c.number()?;
            let inertia = if c.peek().is_some() {
                c.keyword("inertia")?;
                Some(c.number()?)
            } else {
                None
            };
            Statement::SectionDef { id, material, area, inertia }
        }
        "element" => {
            let id = c.id()?;
            let kind = match c.next("element kind")? {
                "truss" => ElementKind::TrussBar,
                "frame" => ElementKind::FrameBeam,
                other => return Err(c.error(other, "unknown element kind")),
            };
            let nodes = [c.id()?, c.id()?];
            c.keyword("section")?;
            Statement::ElementDef { id, kind, nodes, section: c.id()? }
        }
        "fix" => {
            let node = c.id()?;
            let mut dofs = Vec::new();
            while let Some(t) = c.peek() {
                let d = Dof::parse(t).ok_or_else(|| c.error(t, "unknown dof"))?;
                if dofs.contains(&d) {
                    return Err(c.error(t, "repeated dof"));
                }
                dofs.push(d);
                c.pos += 1;
            }
            if dofs.is_empty() {
                return Err(c.error("", "fix needs at least one dof"));
            }
            Statement::Fix { node, dofs }
        }
        "load" => {
            let node = c.id()?;
            let (mut fx, mut fy, mut mz) = (None, None, None);
            while let Some(t) = c.peek() {
                let slot = match t {
                    "fx" => &mut fx,
                    "fy" => &mut fy,
                    "mz" => &mut mz,
                    other => return Err(c.error(other, "unknown load component")),
                };
                if slot.is_some() {
                    return Err(c.error(t, "repeated load component"));
                }
                c.pos += 1;
                *slot = Some(c.number()?);
            }
            if fx.is_none() && fy.is_none() && mz.is_none() {
                return Err(c.error("", "load needs at least one component"));
            }
            Statement::LoadStmt {
                node,
                fx: fx.unwrap_or(0.0),
                fy: fy.unwrap_or(0.0),
                mz: mz.unwrap_or(0.0),
            }
        }
        "workspace" => Statement::Workspace(c.next("path")?.to_string()),
        "analyze" => match c.next("analysis kind")? {
            "static" => Statement::Analyze(AnalyzeKind::Static),
            "modal" => {
                c.keyword("count")?;
                let count = c.id()?;
                let subdivisions = if c.peek().is_some() {
                    c.keyword("subdiv")?;
                    Some(c.id()?)
                } else {
                    None
                };
                Statement::Analyze(AnalyzeKind::Modal { count, subdivisions })
            }
            "topopt" => {
                c.keyword("volfrac")?;
                let volfrac = c.number()?;
                c.keyword("iters")?;
                Statement::Analyze(AnalyzeKind::Topopt { volfrac, iterations: c.id()? })
            }
            other => return Err(c.error(other, "unknown analysis kind")),
        },
        "write_results" => Statement::WriteResults(c.next("path")?.to_string()),
        "delete" => match c.next("delete target")? {
            "model" => {
                c.keyword("root")?;
                Statement::Delete(DeleteTarget::ModelRoot)
            }
            "node" => Statement::Delete(DeleteTarget::Node(c.id()?)),
            "element" => Statement::Delete(DeleteTarget::Element(c.id()?)),
            other => return Err(c.error(other, "unknown delete target")),
        },
        "end" => Statement::End,
        other => {
            return Err(ScriptParseError {
                line,
                token: other.to_string(),
                reason: "unknown statement".into(),
            })
        }
    };
    if let Some(extra) = c.peek() {
        return Err(c.error(extra, "unexpected trailing token"));
    }
    Ok(Some(stmt))
}

struct Cursor<'a> {
    line: usize,
    tokens: &'a [&'a str],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn error(&self, token: &str, reason: &str) -> ScriptParseError {
        ScriptParseError {
            line: self.line,
            token: token.to_string(),
            reason: format!("{reason} in '{}' statement", self.tokens[0]),
        }
    }

    fn peek(&self) -> Option<&'a str> {
        self.tokens.get(self.pos).copied()
    }

    fn next(&mut self, what: &str) -> Result<&'a str, ScriptParseError> {
        let t = self.peek().ok_or_else(|| self.error("", &format!("missing {what}")))?;
        self.pos += 1;
        Ok(t)
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ScriptParseError> {
        let t = self.next(&format!("keyword '{kw}'"))?;
        if t != kw {
            return Err(self.error(t, &format!("expected '{kw}'")));
        }
        Ok(())
    }

    fn id(&mut self) -> Result<u32, ScriptParseError> {
        let t = self.next("integer")?;
        t.parse::<u32>().map_err(|_| self.error(t, "expected a non-negative integer"))
    }

    fn number(&mut self) -> Result<f64, ScriptParseError> {
        let t = self.next("number")?;
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.error(t, "expected a finite number")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "model begin\nnode 1 0 0\nanalyze static\nwrite_results out.res\nend\n";

    #[test]
    fn golden_minimal_script() {
        let ast = parse_script(MINIMAL).unwrap();
        let kinds: Vec<_> = ast.iter().map(|s| s.statement.keyword()).collect();
        assert_eq!(kinds, ["model", "node", "analyze", "write_results", "end"]);
        assert_eq!(ast.statements[1].statement, Statement::NodeDef { id: 1, x: 0.0, y: 0.0 });
        assert_eq!(ast.statements.iter().map(|s| s.line).collect::<Vec<_>>(), [1, 2, 3, 4, 5]);
    }

    #[test]
    fn hallucinated_statement_is_a_parse_error() {
        let text = "model begin\n\n# comment\nmesh_edges part1\nend\n";
        let e = parse_script(text).unwrap_err();
        assert_eq!(e.line, 4);
        assert_eq!(e.token, "mesh_edges");
        assert_eq!(e.to_string(), "unknown statement 'mesh_edges' at line 4");
    }

    #[test]
    fn empty_script() {
        assert_eq!(parse_script("").unwrap_err().to_string(), "empty script");
        assert_eq!(parse_script("  # nothing\n\n").unwrap_err().reason, "empty script");
    }

    #[test]
    fn comments_and_optional_parts() {
        let ast = parse_script("section 1 material 1 area 1e-3 inertia 1e-6 # frame\nload 2 fy -5\n").unwrap();
        assert_eq!(
            ast.statements[0].statement,
            Statement::SectionDef { id: 1, material: 1, area: 1e-3, inertia: Some(1e-6) }
        );
        assert_eq!(ast.statements[1].statement, Statement::LoadStmt { node: 2, fx: 0.0, fy: -5.0, mz: 0.0 });
    }

    #[test]
    fn malformed_arguments() {
        for bad in [
            "node 1 0",
            "node x 0 0",
            "node 1 0 nan",
            "fix 1",
            "fix 1 ux ux",
            "fix 1 uz",
            "load 1",
            "element 1 cable 1 2 section 1",
            "analyze dynamic",
            "delete everything",
            "end now",
            "model",
        ] {
            assert!(parse_script(bad).is_err(), "{bad}");
        }
    }
}

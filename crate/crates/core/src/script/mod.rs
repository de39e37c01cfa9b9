//! The `.sim` script language: parser, printer, preflight verifier and the
//! deterministic lowering from IR.

mod ast;
mod lower;
mod parser;
mod preflight;

pub use ast::{print, AnalyzeKind, DeleteTarget, Located, ScriptAst, Statement};
pub use lower::{
    lower_ir, lower_statements, LoweringError, DEFAULT_MAX_ITERATIONS, DEFAULT_VOLUME_FRACTION, RESULTS_FILE,
};
pub use parser::{parse_line, parse_script, ScriptParseError};
pub use preflight::{
    default_rules, is_contained, preflight, preflight_with, resolve, PreflightViolation, RootDeletionRule, SafetyRule,
    ViolationKind, MSG_NO_END, MSG_NO_SINK, MSG_NO_TRIGGER, MSG_ROOT_DELETION,
};

#[cfg(test)]
pub(crate) mod tests {
    use std::path::Path;

    use proptest::prelude::*;

    use super::*;
    use crate::ir::fixtures::steel;
    use crate::ir::{
        AnalysisSpec, BoundaryCondition, Dof, Element, ElementKind, IrModel, Load, Node, Section,
    };
    use crate::validation::audit;

    /// Random audited models: Warren trusses on two chords or fixed-base frame chains.
    pub fn audited_model() -> impl Strategy<Value = IrModel> {
        let truss = (2usize..6, 0.5f64..5.0, 0.3f64..3.0, -1e5f64..1e5, 0usize..3).prop_map(
            |(bays, bay, height, load, mode)| {
                let mut nodes = Vec::new();
                for i in 0..=bays {
                    nodes.push(Node::new(i as u32 + 1, i as f64 * bay, 0.0));
                }
                let top0 = nodes.len() as u32;
                for i in 0..bays {
                    nodes.push(Node::new(top0 + i as u32 + 1, (i as f64 + 0.5) * bay, height));
                }
                let mut pairs = Vec::new();
                for i in 0..bays as u32 {
                    pairs.push((i + 1, i + 2));
                    pairs.push((i + 1, top0 + i + 1));
                    pairs.push((top0 + i + 1, i + 2));
                    if i + 1 < bays as u32 {
                        pairs.push((top0 + i + 1, top0 + i + 2));
                    }
                }
                let elements = pairs
                    .iter()
                    .enumerate()
                    .map(|(k, &(a, b))| Element { id: k as u32 + 1, kind: ElementKind::TrussBar, nodes: [a, b], section: 1 })
                    .collect();
                let load = if load.abs() < 1.0 { 1.0 } else { load };
                IrModel {
                    nodes,
                    elements,
                    materials: vec![steel()],
                    sections: vec![Section { id: 1, material: 1, area: 1e-3, moment_of_inertia: None }],
                    bcs: vec![
                        BoundaryCondition { node: 1, dofs: vec![Dof::Ux, Dof::Uy] },
                        BoundaryCondition { node: bays as u32 + 1, dofs: vec![Dof::Uy] },
                    ],
                    loads: vec![Load { node: top0 + 1, fx: 0.0, fy: load, mz: 0.0 }],
                    analysis: match mode {
                        0 => AnalysisSpec::static_analysis(),
                        1 => AnalysisSpec::modal(3),
                        _ => AnalysisSpec::topology(None, Some(10)),
                    },
                    ..IrModel::default()
                }
            },
        );
        let frame = (prop::collection::vec((-3.0f64..3.0, 0.5f64..3.0), 1..5), -1e4f64..1e4, any::<bool>()).prop_map(
            |(steps, load, modal)| {
                let mut nodes = vec![Node::new(1, 0.0, 0.0)];
                for (i, (dx, dy)) in steps.iter().enumerate() {
                    let p = nodes[i];
                    nodes.push(Node::new(i as u32 + 2, p.x + dx, p.y + dy));
                }
                let elements = (1..nodes.len() as u32)
                    .map(|i| Element { id: i, kind: ElementKind::FrameBeam, nodes: [i, i + 1], section: 1 })
                    .collect();
                let tip = nodes.len() as u32;
                IrModel {
                    nodes,
                    elements,
                    materials: vec![steel()],
                    sections: vec![Section { id: 1, material: 1, area: 1e-3, moment_of_inertia: Some(1e-6) }],
                    bcs: vec![BoundaryCondition { node: 1, dofs: Dof::ALL.to_vec() }],
                    loads: vec![Load { node: tip, fx: load + 1.0, fy: 0.0, mz: 0.0 }],
                    analysis: if modal { AnalysisSpec::modal(2) } else { AnalysisSpec::static_analysis() },
                    ..IrModel::default()
                }
            },
        );
        prop_oneof![truss, frame].prop_filter("audit-clean", |m| audit(m, None).clean)
    }

    fn statement() -> impl Strategy<Value = Statement> {
        let id = 0u32..1000;
        let num = prop_oneof![-1e12f64..1e12, -1.0f64..1.0, Just(0.0)];
        let path = "[a-z/._-]{1,12}";
        prop_oneof![
            Just(Statement::ModelBegin),
            (id.clone(), num.clone(), num.clone()).prop_map(|(id, x, y)| Statement::NodeDef { id, x, y }),
            (id.clone(), num.clone(), num.clone(), num.clone()).prop_map(|(id, e, nu, rho)| Statement::MaterialDef {
                id,
                youngs_modulus: e,
                poisson_ratio: nu,
                density: rho
            }),
            (id.clone(), id.clone(), num.clone(), prop::option::of(num.clone()))
                .prop_map(|(id, material, area, inertia)| Statement::SectionDef { id, material, area, inertia }),
            (id.clone(), any::<bool>(), id.clone(), id.clone(), id.clone()).prop_map(|(id, f, a, b, s)| {
                Statement::ElementDef {
                    id,
                    kind: if f { ElementKind::FrameBeam } else { ElementKind::TrussBar },
                    nodes: [a, b],
                    section: s,
                }
            }),
            (id.clone(), prop::sample::subsequence(Dof::ALL.to_vec(), 1..=3))
                .prop_map(|(node, dofs)| Statement::Fix { node, dofs }),
            (id.clone(), num.clone(), num.clone(), num.clone())
                .prop_map(|(node, fx, fy, mz)| Statement::LoadStmt { node, fx, fy, mz }),
            path.prop_map(Statement::Workspace),
            path.prop_map(Statement::WriteResults),
            Just(Statement::Analyze(AnalyzeKind::Static)),
            (id.clone(), prop::option::of(1u32..20))
                .prop_map(|(count, subdivisions)| Statement::Analyze(AnalyzeKind::Modal { count, subdivisions })),
            (0.0f64..1.0, id.clone())
                .prop_map(|(volfrac, iterations)| Statement::Analyze(AnalyzeKind::Topopt { volfrac, iterations })),
            Just(Statement::Delete(DeleteTarget::ModelRoot)),
            id.clone().prop_map(|n| Statement::Delete(DeleteTarget::Node(n))),
            id.prop_map(|n| Statement::Delete(DeleteTarget::Element(n))),
            Just(Statement::End),
        ]
    }

    fn script_ast() -> impl Strategy<Value = ScriptAst> {
        prop::collection::vec((1usize..4, statement()), 1..25).prop_map(|items| {
            let mut line = 0;
            ScriptAst {
                statements: items
                    .into_iter()
                    .map(|(gap, statement)| {
                        line += gap;
                        Located { line, statement }
                    })
                    .collect(),
            }
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn print_then_parse_is_identity(ast in script_ast()) {
            prop_assert_eq!(parse_script(&print(&ast)).unwrap(), ast);
        }

        #[test]
        fn lowering_is_guaranteed_executable(m in audited_model()) {
            let ws = Path::new("/runs/case-1");
            let text = lower_ir(&m, ws).unwrap();
            let ast = parse_script(&text).unwrap();
            prop_assert!(preflight(&ast, ws).is_empty());
        }

        #[test]
        fn preflight_is_monotone(ast in script_ast()) {
            let ws = Path::new("/w");
            let before = preflight(&ast, ws);
            for (i, s) in ast.statements.iter().enumerate() {
                let removed: Vec<_> = before.iter().filter(|v| v.line == Some(s.line)).collect();
                if removed.is_empty() {
                    continue;
                }
                let after = preflight(&ast.without(i), ws);
                for r in removed {
                    prop_assert!(after.iter().filter(|v| v.kind == r.kind).all(|v| before.contains(v)));
                }
            }
        }
    }
}

use std::fmt::Write;

use super::{CfgPlus, EdgeKind, NodeId, NodeKind};
use crate::ir::FuncRef;

/// Auxiliary nodes use their own names as DOT ids; IR nodes use `n<k>`.
fn dot_id(g: &CfgPlus, n: NodeId) -> String {
    match g.kind(n).aux_name() {
        Some(name) => name.to_string(),
        None => n.to_string(),
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

pub fn to_dot(g: &CfgPlus) -> String {
    let mut out = String::new();
    writeln!(out, "digraph \"{}\" {{", escape(&g.program.name)).unwrap();
    out.push_str("    node [shape=box, fontname=\"monospace\"];\n");
    for n in g.node_ids().filter(|n| g.kind(*n).is_auxiliary()) {
        writeln!(out, "    {} [label=\"{}\", shape=doublecircle];", dot_id(g, n), g.label(n)).unwrap();
    }
    for (i, (fref, cfg)) in g.cfgs.iter().enumerate() {
        let title = match fref {
            FuncRef::Constructor => "constructor".to_string(),
            FuncRef::Public(_) => g.program.func(*fref).name.clone(),
        };
        writeln!(out, "    subgraph cluster_{i} {{").unwrap();
        writeln!(out, "        label=\"{}\";", escape(&title)).unwrap();
        for &instr in &cfg.nodes {
            let n = g.node_of(*fref, instr).unwrap();
            let shape = match g.kind(n) {
                NodeKind::Instr { .. } if g.is_revert_sink(n) => ", shape=octagon",
                _ => "",
            };
            writeln!(out, "        {} [label=\"{}\"{shape}];", dot_id(g, n), escape(&g.label(n))).unwrap();
        }
        out.push_str("    }\n");
    }
    for (a, b, kind) in g.graph.edges() {
        let style = match kind {
            EdgeKind::Normal => "",
            EdgeKind::Aborted => " [style=dashed, label=\"aborted\"]",
        };
        writeln!(out, "    {} -> {}{style};", dot_id(g, a), dot_id(g, b)).unwrap();
    }
    out.push_str("}\n");
    out
}

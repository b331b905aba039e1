//! Dendrogram exports: Newick for tree viewers, DOT for graph tools.
//!
//! Newick branch lengths are parent height minus child height with
//! leaves at height zero, so path lengths from the root reconstruct
//! merge heights. Traversal is iterative; path-shaped trees from
//! single linkage would overflow the stack recursively.

use std::fmt::Write as _;

use super::Dendrogram;
use crate::error::{Error, Result};
use crate::meta::{LabelField, MetadataTable};

/// Characters that force Newick quoting.
const NEWICK_SPECIAL: &[char] = &[
    '(', ')', '[', ']', ':', ';', ',', '\'', ' ', '\t', '\n', '\r',
];

/// Serialize as a single-line, semicolon-terminated Newick string.
///
/// Children of each merge are written internal-node-first, then by
/// ascending node id; ids needing it are single-quoted with internal
/// quotes doubled, per Newick convention.
pub fn export_newick(tree: &Dendrogram) -> String {
    let n = tree.n_leaves();
    let merges = tree.merges();
    let height = |node: usize| {
        if node < n {
            0.0
        } else {
            merges[node - n].height
        }
    };
    // Children ordered internal-first so the earlier-built cluster
    // prints before a leaf joining it.
    let children = |node: usize| {
        let step = &merges[node - n];
        let (a, b) = (step.left, step.right);
        match (a < n, b < n) {
            (true, false) => (b, a),
            _ => (a, b),
        }
    };

    enum Frame {
        Open(usize, Option<f64>),
        Comma,
        Close(usize, Option<f64>),
    }

    let mut out = String::new();
    let root = n + merges.len() - 1;
    let mut stack = vec![Frame::Open(root, None)];
    while let Some(frame) = stack.pop() {
        match frame {
            Frame::Open(node, parent_h) if node < n => {
                push_newick_name(&mut out, &tree.leaf_ids()[node]);
                let _ = write!(out, ":{}", parent_h.expect("leaves are never roots"));
            }
            Frame::Open(node, parent_h) => {
                out.push('(');
                let (first, second) = children(node);
                let h = Some(height(node));
                stack.push(Frame::Close(node, parent_h));
                stack.push(Frame::Open(second, h));
                stack.push(Frame::Comma);
                stack.push(Frame::Open(first, h));
            }
            Frame::Comma => out.push(','),
            Frame::Close(node, parent_h) => {
                out.push(')');
                if let Some(ph) = parent_h {
                    let _ = write!(out, ":{}", ph - height(node));
                }
            }
        }
    }
    out.push(';');
    out
}

fn push_newick_name(out: &mut String, id: &str) {
    if !id.is_empty() && !id.contains(NEWICK_SPECIAL) {
        out.push_str(id);
    } else {
        out.push('\'');
        for ch in id.chars() {
            if ch == '\'' {
                out.push('\'');
            }
            out.push(ch);
        }
        out.push('\'');
    }
}

/// Fill colors for leaf styling, cycled when a label field has more
/// values than the palette.
const PALETTE: &[&str] = &[
    "#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377", "#bbbbbb", "#999933",
    "#cc6677", "#332288", "#ddcc77", "#117733",
];

/// Serialize as a DOT digraph: one node per leaf and per merge, edges
/// child -> parent. With `color_by`, leaves are filled by their label
/// value; every leaf must then have metadata.
pub fn export_dot(
    tree: &Dendrogram,
    color_by: Option<(&MetadataTable, LabelField)>,
) -> Result<String> {
    let n = tree.n_leaves();
    // Stable value -> color assignment: sorted distinct values.
    let mut legend: Vec<(String, &str)> = Vec::new();
    if let Some((meta, field)) = color_by {
        let mut values: Vec<String> = Vec::new();
        for id in tree.leaf_ids() {
            let rec = meta
                .get(id)
                .ok_or_else(|| Error::MissingMetadata(id.clone()))?;
            let v = field.value_of(rec).to_string();
            if !values.contains(&v) {
                values.push(v);
            }
        }
        values.sort();
        legend = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| (v, PALETTE[i % PALETTE.len()]))
            .collect();
    }

    let mut out = String::new();
    out.push_str("digraph dendrogram {\n  rankdir=BT;\n  node [fontsize=10];\n");
    for (i, id) in tree.leaf_ids().iter().enumerate() {
        let mut attrs = format!("label=\"{}\", shape=box", dot_escape(id));
        if let Some((meta, field)) = color_by {
            let rec = meta.get(id).expect("checked above");
            let value = field.value_of(rec);
            let color = legend
                .iter()
                .find(|(v, _)| v == value)
                .map(|(_, c)| *c)
                .expect("legend covers every value");
            let _ = write!(attrs, ", style=filled, fillcolor=\"{color}\"");
        }
        let _ = writeln!(out, "  n{i} [{attrs}];");
    }
    for (t, step) in tree.merges().iter().enumerate() {
        let node = n + t;
        let _ = writeln!(
            out,
            "  n{node} [label=\"{}\", shape=point, width=0.08];",
            step.height
        );
        let _ = writeln!(out, "  n{} -> n{node};", step.left);
        let _ = writeln!(out, "  n{} -> n{node};", step.right);
    }
    if !legend.is_empty() {
        out.push_str("  subgraph cluster_legend {\n    label=\"legend\";\n");
        for (i, (value, color)) in legend.iter().enumerate() {
            let _ = writeln!(
                out,
                "    legend{i} [label=\"{}\", shape=box, style=filled, fillcolor=\"{color}\"];",
                dot_escape(value)
            );
        }
        out.push_str("  }\n");
    }
    out.push_str("}\n");
    Ok(out)
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

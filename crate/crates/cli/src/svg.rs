//! Poincaré-disk figure: unit circle, one line per edge, one dot per node.

use std::fmt::Write;

use hypertree::{EmbeddingTable, HierarchyGraph, NodeId};

const STROKE: f64 = 0.003;
const DOT: f64 = 0.006;

/// `ill(child)` selects edges drawn in red.
pub fn render(g: &HierarchyGraph, table: &EmbeddingTable, ill: impl Fn(NodeId) -> bool) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="-1.05 -1.05 2.1 2.1" width="800" height="800">"#
    );
    let _ = writeln!(
        s,
        r#"<circle class="boundary" cx="0" cy="0" r="1" fill="none" stroke="gray" stroke-width="{STROKE}"/>"#
    );
    // SVG y grows downwards
    let at = |v: NodeId| {
        let r = table.row(v);
        (r[0], -r[1])
    };
    let _ = writeln!(s, r#"<g class="edges" stroke-width="{STROKE}">"#);
    for &(child, parent) in g.edges() {
        let ((x1, y1), (x2, y2)) = (at(child), at(parent));
        let color = if ill(child) { "red" } else { "black" };
        let _ = writeln!(
            s,
            r#"<line class="edge" x1="{x1:.6}" y1="{y1:.6}" x2="{x2:.6}" y2="{y2:.6}" stroke="{color}"/>"#
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g class="nodes" fill="steelblue">"#);
    for v in g.nodes() {
        let (x, y) = at(v);
        let _ = writeln!(s, r#"<circle class="node" cx="{x:.6}" cy="{y:.6}" r="{DOT}"/>"#);
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    s
}

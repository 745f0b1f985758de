//! Text rendering of a plan, one line per node.

use std::fmt::Write;

use super::plan::{Locus, PlanKind, PlanNode};

/// Renders `plan` as an indented tree. Output is a pure function of the
/// plan: motions are numbered as slices in pre-order.
pub fn explain(plan: &PlanNode) -> String {
    let mut out = String::new();
    let mut slice = 0;
    render(plan, 0, &mut slice, &mut out);
    out
}

/// Placeholder cost: proportional to the rows flowing through the subtree.
fn total_cost(node: &PlanNode) -> f64 {
    node.children.iter().map(total_cost).sum::<f64>() + node.est_rows.max(1.0) * 0.01
}

fn label(node: &PlanNode, slice: &mut usize) -> String {
    match &node.kind {
        PlanKind::Scan { table } => format!("Seq Scan on {table}"),
        PlanKind::Redistribute { nseg, .. } => {
            *slice += 1;
            let senders = match node.child().locus() {
                Locus::Segments => *nseg,
                Locus::Master => 1,
            };
            format!("Redistribute Motion {senders}:{nseg} (slice{slice}; segments: {nseg})")
        }
        PlanKind::Gather { nseg } => {
            *slice += 1;
            format!("Gather Motion {nseg}:1 (slice{slice}; segments: {nseg})")
        }
        _ => node.name().to_string(),
    }
}

fn render(node: &PlanNode, depth: usize, slice: &mut usize, out: &mut String) {
    if depth > 0 {
        out.push_str(&"  ".repeat(depth));
        out.push_str("-> ");
    }
    let rows = node.est_rows.round().max(1.0) as u64;
    let _ = writeln!(
        out,
        "{} (cost=0.00..{:.2} rows={rows} width={})",
        label(node, slice),
        total_cost(node),
        node.est_width()
    );
    for c in &node.children {
        render(c, depth + 1, slice, out);
    }
}

use std::fmt::Write;

use super::{OpKind, Schedule};

/// Canonical text form. Labels are `l<id>`, so re-parsing yields the same
/// ids.
pub fn emit_goal(s: &Schedule) -> String {
    let mut out = String::new();
    if !s.metadata.generator.is_empty() {
        let _ = writeln!(out, "#@ generator={}", s.metadata.generator);
    }
    for (k, v) in &s.metadata.params {
        let _ = writeln!(out, "#@ {k}={v}");
    }
    let _ = writeln!(out, "num_ranks {}", s.nranks);
    for (rank, ops) in s.ranks.iter().enumerate() {
        if ops.is_empty() {
            let _ = writeln!(out, "rank {rank} {{ }}");
            continue;
        }
        let _ = writeln!(out, "rank {rank} {{");
        for op in ops {
            let _ = match op.kind {
                OpKind::Send { peer, size } => writeln!(out, "  l{}: send {size}b to {peer}", op.id),
                OpKind::Recv { peer, size } => writeln!(out, "  l{}: recv {size}b from {peer}", op.id),
                OpKind::Calc { duration } => writeln!(out, "  l{}: calc {duration}", op.id),
            };
        }
        for op in ops.iter().filter(|op| !op.requires.is_empty()) {
            let deps: Vec<String> = op.requires.iter().map(|d| format!("l{d}")).collect();
            let _ = writeln!(out, "  l{} requires {}", op.id, deps.join(", "));
        }
        out.push_str("}\n");
    }
    out
}

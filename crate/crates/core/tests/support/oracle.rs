//! Brute-force reference scheduler used by the integration tests.
//!
//! Every op starts at the latest of: the finish of each op it requires,
//! the finish of the previous op on its rank, `g` after the previous
//! message op's start, and (for a recv) the matched send's finish plus the
//! wire cost. Start times are found by relaxing these constraints over the
//! whole schedule until nothing changes, which on an acyclic constraint
//! graph converges to the longest-path solution.

#![allow(dead_code)]

use std::collections::HashMap;

use nsim_core::{OpKind, Schedule};

pub struct OracleTimes {
    pub start: Vec<Vec<u64>>,
    pub finish: Vec<Vec<u64>>,
}

impl OracleTimes {
    pub fn completion(&self) -> u64 {
        self.finish.iter().flatten().copied().max().unwrap_or(0)
    }
}

/// Pairs the k-th send (src, dst, size) with the k-th recv on dst from src
/// of the same size. Returns, per recv, the (rank, op) of its send.
fn pair_messages(s: &Schedule) -> HashMap<(usize, usize), (usize, usize)> {
    let mut sends: HashMap<(usize, usize, u64), Vec<usize>> = HashMap::new();
    let mut recvs: HashMap<(usize, usize, u64), Vec<usize>> = HashMap::new();
    for (r, ops) in s.ranks.iter().enumerate() {
        for (i, op) in ops.iter().enumerate() {
            match op.kind {
                OpKind::Send { peer, size } => sends.entry((r, peer as usize, size)).or_default().push(i),
                OpKind::Recv { peer, size } => recvs.entry((peer as usize, r, size)).or_default().push(i),
                OpKind::Calc { .. } => {}
            }
        }
    }
    let mut out = HashMap::new();
    for (key @ (src, dst, _), rs) in recvs {
        let ss = &sends[&key];
        assert_eq!(ss.len(), rs.len(), "unbalanced messages for {key:?}");
        for (si, ri) in ss.iter().zip(rs) {
            out.insert((dst, ri), (src, *si));
        }
    }
    out
}

/// `wire(src_rank, send_op, size)` is the time from the send's finish to the
/// message's arrival.
pub fn longest_path(
    s: &Schedule,
    overhead: u64,
    gap: u64,
    mut wire: impl FnMut(usize, usize, u64) -> u64,
) -> OracleTimes {
    let pairs = pair_messages(s);
    let mut start: Vec<Vec<u64>> = s.ranks.iter().map(|ops| vec![0; ops.len()]).collect();
    let busy = |kind: &OpKind| match kind {
        OpKind::Calc { duration } => *duration,
        _ => overhead,
    };
    let mut wire_cost: HashMap<(usize, usize), u64> = HashMap::new();
    for (&(dst, ri), &(src, si)) in &pairs {
        let size = match s.ranks[dst][ri].kind {
            OpKind::Recv { size, .. } => size,
            _ => unreachable!(),
        };
        wire_cost.insert((dst, ri), wire(src, si, size));
    }
    let prev_message: Vec<Vec<Option<usize>>> = s
        .ranks
        .iter()
        .map(|ops| {
            let mut last = None;
            ops.iter()
                .enumerate()
                .map(|(i, op)| {
                    let prev = last;
                    if op.kind.is_message() {
                        last = Some(i);
                    }
                    prev
                })
                .collect()
        })
        .collect();
    let total: usize = s.ranks.iter().map(Vec::len).sum();
    for pass in 0.. {
        assert!(pass <= total + 1, "constraint graph has a cycle");
        let mut changed = false;
        for (r, ops) in s.ranks.iter().enumerate() {
            for (i, op) in ops.iter().enumerate() {
                let mut t = 0;
                for &d in &op.requires {
                    let d = d as usize;
                    t = t.max(start[r][d] + busy(&ops[d].kind));
                }
                if i > 0 {
                    t = t.max(start[r][i - 1] + busy(&ops[i - 1].kind));
                }
                if op.kind.is_message() {
                    if let Some(prev) = prev_message[r][i] {
                        t = t.max(start[r][prev] + gap);
                    }
                }
                if let Some(&(src, si)) = pairs.get(&(r, i)) {
                    let send_finish = start[src][si] + busy(&s.ranks[src][si].kind);
                    t = t.max(send_finish + wire_cost[&(r, i)]);
                }
                if t != start[r][i] {
                    start[r][i] = t;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let finish = s
        .ranks
        .iter()
        .zip(&start)
        .map(|(ops, st)| ops.iter().zip(st).map(|(op, t)| t + busy(&op.kind)).collect())
        .collect();
    OracleTimes { start, finish }
}

/// Wire cost under fixed LogGP parameters, rounding `(size - 1) G` half-up.
pub fn loggp_wire(latency: u64, gap_per_byte: f64) -> impl FnMut(usize, usize, u64) -> u64 {
    move |_, _, size| latency + ((size - 1) as f64 * gap_per_byte + 0.5).floor() as u64
}

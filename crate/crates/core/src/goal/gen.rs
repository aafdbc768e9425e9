use serde::{Deserialize, Serialize};

use super::{Metadata, OpId, OpKind, Rank, Schedule};
use crate::error::{Error, Result};

/// Number of dissemination rounds, `ceil(log2 p)`.
fn rounds(p: u32) -> u32 {
    debug_assert!(p >= 2);
    u32::BITS - (p - 1).leading_zeros()
}

/// Appends one dissemination to every rank. Each op of the first round
/// requires `entry[rank]`; returns the ids of every rank's final round.
fn append_dissemination(s: &mut Schedule, size: u64, entry: &[Vec<OpId>]) -> Vec<Vec<OpId>> {
    let p = s.nranks;
    let mut exits = Vec::with_capacity(p as usize);
    for r in 0..p {
        let mut prev = entry[r as usize].clone();
        for k in 0..rounds(p) {
            let dist = 1u32 << k;
            let to = (r + dist) % p;
            let from = (r + p - dist % p) % p;
            let send = s.push(r, OpKind::Send { peer: to, size }, prev.clone());
            let recv = s.push(r, OpKind::Recv { peer: from, size }, prev);
            prev = vec![send, recv];
        }
        exits.push(prev);
    }
    exits
}

/// Dissemination over `p` ranks: in round `k` rank `r` sends `size` bytes
/// to `(r + 2^k) mod p` and receives from `(r - 2^k) mod p`. Both ops of
/// round `k + 1` require both ops of round `k`.
pub fn gen_dissemination(p: u32, size: u64) -> Result<Schedule> {
    if p < 2 {
        return Err(Error::invalid(format!("dissemination needs at least 2 ranks, got {p}")));
    }
    if size == 0 {
        return Err(Error::invalid("message size must be at least 1 byte"));
    }
    let mut s = Schedule::empty(p);
    append_dissemination(&mut s, size, &vec![Vec::new(); p as usize]);
    s.metadata = Metadata::new("dissemination").with("nranks", p).with("size", size);
    Ok(s)
}

/// Bytes moved per ring step: `ceil(size / p)`.
pub fn ring_chunk_size(p: u32, size: u64) -> u64 {
    size.div_ceil(u64::from(p))
}

fn append_ring(s: &mut Schedule, size: u64, reduce_cost: u64, entry: &[Vec<OpId>]) -> Vec<Vec<OpId>> {
    let p = s.nranks;
    let chunk = ring_chunk_size(p, size);
    let steps = 2 * (p - 1);
    let mut exits = Vec::with_capacity(p as usize);
    for r in 0..p {
        let right = (r + 1) % p;
        let left = (r + p - 1) % p;
        let mut send_deps = entry[r as usize].clone();
        let mut recv_deps = entry[r as usize].clone();
        let mut last_send = 0;
        for step in 0..steps {
            last_send = s.push(
                r,
                OpKind::Send {
                    peer: right,
                    size: chunk,
                },
                send_deps,
            );
            let recv = s.push(
                r,
                OpKind::Recv {
                    peer: left,
                    size: chunk,
                },
                recv_deps,
            );
            send_deps = vec![recv];
            recv_deps = vec![recv];
            if step < p - 1 && reduce_cost > 0 {
                let calc = s.push(r, OpKind::Calc { duration: reduce_cost }, vec![recv]);
                send_deps.push(calc);
            }
        }
        // The final step's send has no dependents; the exit set covers it
        // together with the last recv (and reduction, if any).
        let mut exit = send_deps;
        exit.push(last_send);
        exit.sort_unstable();
        exits.push(exit);
    }
    exits
}

/// Ring allreduce: `p - 1` reduce-scatter steps (recv from the left,
/// reduce, send to the right) followed by `p - 1` allgather steps, moving
/// `ceil(size / p)` bytes per step.
pub fn gen_ring_allreduce(p: u32, size: u64, reduce_cost_per_chunk: u64) -> Result<Schedule> {
    if p < 2 {
        return Err(Error::invalid(format!(
            "ring allreduce needs at least 2 ranks, got {p}"
        )));
    }
    if size < u64::from(p) {
        return Err(Error::invalid(format!(
            "ring allreduce of {size} bytes over {p} ranks leaves empty chunks"
        )));
    }
    let mut s = Schedule::empty(p);
    append_ring(&mut s, size, reduce_cost_per_chunk, &vec![Vec::new(); p as usize]);
    s.metadata = Metadata::new("ring_allreduce")
        .with("nranks", p)
        .with("size", size)
        .with("reduce_cost_ns", reduce_cost_per_chunk);
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    Dissemination,
    Ring,
}

impl std::str::FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dissemination" | "dissem" => Ok(Pattern::Dissemination),
            "ring" => Ok(Pattern::Ring),
            other => Err(Error::invalid(format!("unknown pattern '{other}'"))),
        }
    }
}

impl std::fmt::Display for Pattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Pattern::Dissemination => "dissemination",
            Pattern::Ring => "ring",
        })
    }
}

/// A mock application: every iteration computes for `comp` ns on every
/// rank and then runs the collective. An iteration's calc waits for the
/// previous iteration's collective to finish on that rank.
pub fn gen_compute_collective(p: u32, comp: u64, pattern: Pattern, size: u64, iterations: u32) -> Result<Schedule> {
    if iterations == 0 {
        return Err(Error::invalid("at least one iteration is required"));
    }
    // Reuse the plain generators for argument checking.
    match pattern {
        Pattern::Dissemination => gen_dissemination(p, size).map(drop)?,
        Pattern::Ring => gen_ring_allreduce(p, size, 0).map(drop)?,
    }
    let mut s = Schedule::empty(p);
    let mut exits: Vec<Vec<OpId>> = vec![Vec::new(); p as usize];
    for _ in 0..iterations {
        let entry: Vec<Vec<OpId>> = (0..p as Rank)
            .map(|r| {
                let deps = std::mem::take(&mut exits[r as usize]);
                vec![s.push(r, OpKind::Calc { duration: comp }, deps)]
            })
            .collect();
        exits = match pattern {
            Pattern::Dissemination => append_dissemination(&mut s, size, &entry),
            Pattern::Ring => append_ring(&mut s, size, 0, &entry),
        };
    }
    s.metadata = Metadata::new("compute_collective")
        .with("nranks", p)
        .with("comp_ns", comp)
        .with("pattern", pattern)
        .with("size", size)
        .with("iterations", iterations);
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::goal::validate;

    fn count(s: &Schedule, rank: usize, pred: impl Fn(&OpKind) -> bool) -> usize {
        s.ranks[rank].iter().filter(|op| pred(&op.kind)).count()
    }

    fn is_send(k: &OpKind) -> bool {
        matches!(k, OpKind::Send { .. })
    }

    fn is_recv(k: &OpKind) -> bool {
        matches!(k, OpKind::Recv { .. })
    }

    fn is_calc(k: &OpKind) -> bool {
        matches!(k, OpKind::Calc { .. })
    }

    #[test]
    fn round_counts() {
        assert_eq!(rounds(2), 1);
        assert_eq!(rounds(3), 2);
        assert_eq!(rounds(4), 2);
        assert_eq!(rounds(5), 3);
        assert_eq!(rounds(8), 3);
        assert_eq!(rounds(9), 4);
        assert_eq!(rounds(16384), 14);
    }

    #[test]
    fn dissemination_examples() {
        let s = gen_dissemination(2, 16).unwrap();
        assert_eq!(s.ranks[0].len(), 2);
        assert_eq!(s.ranks[0][0].kind, OpKind::Send { peer: 1, size: 16 });
        assert_eq!(s.ranks[1][1].kind, OpKind::Recv { peer: 0, size: 16 });

        let s = gen_dissemination(8, 16).unwrap();
        assert!(s.ranks.iter().all(|ops| ops.len() == 6));

        let s = gen_dissemination(5, 1).unwrap();
        assert_eq!(s.ranks[4].len(), 6);
        assert_eq!(s.ranks[4][4].kind, OpKind::Send { peer: 3, size: 1 });
        assert_eq!(s.ranks[4][5].kind, OpKind::Recv { peer: 0, size: 1 });
        assert_eq!(s.ranks[4][4].requires, vec![2, 3]);

        assert!(gen_dissemination(1, 16).is_err());
        assert!(gen_dissemination(4, 0).is_err());
    }

    #[test]
    fn ring_examples() {
        let s = gen_ring_allreduce(4, 512 << 20, 0).unwrap();
        assert_eq!(count(&s, 0, is_send), 6);
        assert_eq!(
            s.ranks[0][0].kind,
            OpKind::Send {
                peer: 1,
                size: 128 << 20
            }
        );
        assert_eq!(
            s.ranks[0][1].kind,
            OpKind::Recv {
                peer: 3,
                size: 128 << 20
            }
        );

        let s = gen_ring_allreduce(3, 10, 5).unwrap();
        assert_eq!(ring_chunk_size(3, 10), 4);
        for r in 0..3 {
            assert_eq!(count(&s, r, is_calc), 2);
            let sent: u64 = s.ranks[r]
                .iter()
                .filter_map(|op| match op.kind {
                    OpKind::Send { size, .. } => Some(size),
                    _ => None,
                })
                .sum();
            assert_eq!(sent, 2 * 2 * 4);
        }
        // Step 1's send waits for step 0's recv and reduction.
        assert_eq!(s.ranks[0][3].requires, vec![1, 2]);

        assert!(gen_ring_allreduce(4, 3, 0).is_err());
        assert!(gen_ring_allreduce(1, 3, 0).is_err());
    }

    #[test]
    fn compute_collective_structure() {
        let s = gen_compute_collective(4, 1000, Pattern::Dissemination, 128 * 128 * 8, 3).unwrap();
        assert!(validate(&s).is_empty());
        // 3 iterations of (1 calc + 2 rounds * 2 ops).
        assert_eq!(s.ranks[0].len(), 15);
        assert_eq!(s.ranks[0][5].kind, OpKind::Calc { duration: 1000 });
        assert_eq!(s.ranks[0][5].requires, vec![3, 4]);
        assert_eq!(s.ranks[0][6].requires, vec![5]);

        let s = gen_compute_collective(2, 10, Pattern::Ring, 512, 2).unwrap();
        assert!(validate(&s).is_empty());
        // Ring with p = 2: 1 calc + 2 steps * 2 ops per iteration.
        assert_eq!(s.ranks[1].len(), 10);
        assert_eq!(s.ranks[1][5].requires, vec![3, 4]);

        assert!(gen_compute_collective(4, 1, Pattern::Ring, 2, 1).is_err());
        assert!(gen_compute_collective(4, 1, Pattern::Ring, 64, 0).is_err());
    }

    #[test]
    fn generators_validate_and_count() {
        for p in 2..=64u32 {
            let d = gen_dissemination(p, 16).unwrap();
            assert!(validate(&d).is_empty(), "dissemination p={p}");
            let r = rounds(p) as usize;
            for rank in 0..p as usize {
                assert_eq!(count(&d, rank, is_send), r);
                assert_eq!(count(&d, rank, is_recv), r);
            }
            for cost in [0, 7] {
                let ring = gen_ring_allreduce(p, 1 << 20, cost).unwrap();
                assert!(validate(&ring).is_empty(), "ring p={p}");
                for rank in 0..p as usize {
                    assert_eq!(count(&ring, rank, is_send), 2 * (p as usize - 1));
                    assert_eq!(count(&ring, rank, is_recv), 2 * (p as usize - 1));
                    let calcs = if cost > 0 { p as usize - 1 } else { 0 };
                    assert_eq!(count(&ring, rank, is_calc), calcs);
                }
            }
        }
    }
}

//! Per-rank operation schedules in the style of the Group Operation
//! Assembly Language, with a text parser/emitter, validation, and
//! generators for the dissemination and ring-allreduce patterns.
//!
//! Text grammar:
//!
//! ```text
//! num_ranks 2
//! rank 0 {
//!   l0: send 16b to 1
//!   l1: calc 5000
//!   l1 requires l0
//! }
//! rank 1 { l0: recv 16b from 0 }
//! ```
//!
//! `#` starts a comment. Lines of the form `#@ key=value` carry schedule
//! metadata (the generator name and its parameters).

mod emit;
mod gen;
mod parse;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use emit::emit_goal;
pub use gen::{gen_compute_collective, gen_dissemination, gen_ring_allreduce, ring_chunk_size, Pattern};
pub use parse::parse_goal;

pub type Rank = u32;
pub type OpId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OpKind {
    Send {
        peer: Rank,
        size: u64,
    },
    Recv {
        peer: Rank,
        size: u64,
    },
    /// Local computation lasting `duration` ns.
    Calc {
        duration: u64,
    },
}

impl OpKind {
    pub fn is_message(&self) -> bool {
        !matches!(self, OpKind::Calc { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleOp {
    /// Rank-local id; equal to the op's position in its rank's list.
    pub id: OpId,
    #[serde(flatten)]
    pub kind: OpKind,
    /// Rank-local ids that must finish before this op may start.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub requires: Vec<OpId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub generator: String,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl Metadata {
    pub fn new(generator: &str) -> Self {
        Metadata {
            generator: generator.to_string(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub nranks: u32,
    pub ranks: Vec<Vec<ScheduleOp>>,
    #[serde(default)]
    pub metadata: Metadata,
}

impl Schedule {
    pub fn empty(nranks: u32) -> Self {
        Schedule {
            nranks,
            ranks: vec![Vec::new(); nranks as usize],
            metadata: Metadata::default(),
        }
    }

    /// Appends an op to `rank` and returns its id.
    pub fn push(&mut self, rank: Rank, kind: OpKind, requires: Vec<OpId>) -> OpId {
        let ops = &mut self.ranks[rank as usize];
        let id = ops.len() as OpId;
        ops.push(ScheduleOp { id, kind, requires });
        id
    }

    pub fn op_count(&self) -> usize {
        self.ranks.iter().map(Vec::len).sum()
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

/// A problem found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    RankCount {
        declared: u32,
        blocks: usize,
    },
    BadOpId {
        rank: Rank,
        position: usize,
        id: OpId,
    },
    SelfMessage {
        rank: Rank,
        op: OpId,
    },
    PeerOutOfRange {
        rank: Rank,
        op: OpId,
        peer: Rank,
    },
    EmptyMessage {
        rank: Rank,
        op: OpId,
    },
    DanglingRequire {
        rank: Rank,
        op: OpId,
        missing: OpId,
    },
    DependencyCycle {
        rank: Rank,
        ops: Vec<OpId>,
    },
    Unmatched {
        src: Rank,
        dst: Rank,
        size: u64,
        sends: usize,
        recvs: usize,
    },
    MessageCycle {
        ops: Vec<(Rank, OpId)>,
    },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::RankCount { declared, blocks } => {
                write!(f, "num_ranks is {declared} but {blocks} rank lists exist")
            }
            Violation::BadOpId { rank, position, id } => {
                write!(f, "rank {rank}: op at position {position} has id {id}")
            }
            Violation::SelfMessage { rank, op } => {
                write!(f, "rank {rank} op {op}: peer is the rank itself")
            }
            Violation::PeerOutOfRange { rank, op, peer } => {
                write!(f, "rank {rank} op {op}: peer {peer} out of range")
            }
            Violation::EmptyMessage { rank, op } => {
                write!(f, "rank {rank} op {op}: message size must be at least 1 byte")
            }
            Violation::DanglingRequire { rank, op, missing } => {
                write!(f, "rank {rank} op {op}: requires unknown op {missing}")
            }
            Violation::DependencyCycle { rank, ops } => {
                write!(f, "rank {rank}: dependency cycle among ops {ops:?}")
            }
            Violation::Unmatched {
                src,
                dst,
                size,
                sends,
                recvs,
            } => write!(
                f,
                "{sends} send(s) but {recvs} recv(s) of {size}b from rank {src} to rank {dst}"
            ),
            Violation::MessageCycle { ops } => {
                write!(f, "cross-rank wait cycle involving {} op(s)", ops.len())?;
                if let Some((r, o)) = ops.first() {
                    write!(f, " (e.g. rank {r} op {o})")?;
                }
                Ok(())
            }
        }
    }
}

/// Matches every send with its recv: the k-th send from `src` to `dst` of
/// a given size pairs with the k-th such recv posted by `dst`, both counted
/// in program order. Returns `(send, recv)` pairs of `(rank, op)`;
/// unmatched ops are left out.
pub fn match_messages(s: &Schedule) -> Vec<((Rank, OpId), (Rank, OpId))> {
    let mut sends: BTreeMap<(Rank, Rank, u64), Vec<OpId>> = BTreeMap::new();
    let mut recvs: BTreeMap<(Rank, Rank, u64), Vec<OpId>> = BTreeMap::new();
    for (rank, ops) in s.ranks.iter().enumerate() {
        let rank = rank as Rank;
        for op in ops {
            match op.kind {
                OpKind::Send { peer, size } => sends.entry((rank, peer, size)).or_default().push(op.id),
                OpKind::Recv { peer, size } => recvs.entry((peer, rank, size)).or_default().push(op.id),
                OpKind::Calc { .. } => {}
            }
        }
    }
    let mut pairs = Vec::new();
    for (key @ (src, dst, _), send_ids) in &sends {
        if let Some(recv_ids) = recvs.get(key) {
            for (&a, &b) in send_ids.iter().zip(recv_ids) {
                pairs.push(((*src, a), (*dst, b)));
            }
        }
    }
    pairs
}

/// Checks structural well-formedness; an empty result means the schedule
/// can be simulated without deadlock.
pub fn validate(s: &Schedule) -> Vec<Violation> {
    let mut out = Vec::new();
    if s.ranks.len() != s.nranks as usize || s.nranks == 0 {
        out.push(Violation::RankCount {
            declared: s.nranks,
            blocks: s.ranks.len(),
        });
        if s.ranks.len() != s.nranks as usize {
            return out;
        }
    }

    let mut structurally_sound = true;
    for (rank, ops) in s.ranks.iter().enumerate() {
        let rank = rank as Rank;
        for (position, op) in ops.iter().enumerate() {
            if op.id as usize != position {
                out.push(Violation::BadOpId {
                    rank,
                    position,
                    id: op.id,
                });
                structurally_sound = false;
            }
            if let OpKind::Send { peer, size } | OpKind::Recv { peer, size } = op.kind {
                if peer == rank {
                    out.push(Violation::SelfMessage { rank, op: op.id });
                } else if peer >= s.nranks {
                    out.push(Violation::PeerOutOfRange { rank, op: op.id, peer });
                }
                if size == 0 {
                    out.push(Violation::EmptyMessage { rank, op: op.id });
                }
            }
            for &dep in &op.requires {
                if dep as usize >= ops.len() {
                    out.push(Violation::DanglingRequire {
                        rank,
                        op: op.id,
                        missing: dep,
                    });
                    structurally_sound = false;
                }
            }
        }
        if structurally_sound {
            if let Some(cycle) = rank_cycle(ops) {
                out.push(Violation::DependencyCycle { rank, ops: cycle });
                structurally_sound = false;
            }
        }
    }

    let mut counts: BTreeMap<(Rank, Rank, u64), (usize, usize)> = BTreeMap::new();
    for (rank, ops) in s.ranks.iter().enumerate() {
        for op in ops {
            match op.kind {
                OpKind::Send { peer, size } => counts.entry((rank as Rank, peer, size)).or_default().0 += 1,
                OpKind::Recv { peer, size } => counts.entry((peer, rank as Rank, size)).or_default().1 += 1,
                OpKind::Calc { .. } => {}
            }
        }
    }
    let mut matched = true;
    for ((src, dst, size), (sends, recvs)) in counts {
        if sends != recvs {
            matched = false;
            out.push(Violation::Unmatched {
                src,
                dst,
                size,
                sends,
                recvs,
            });
        }
    }

    if structurally_sound && matched && out.is_empty() {
        if let Some(ops) = message_cycle(s) {
            out.push(Violation::MessageCycle { ops });
        }
    }
    out
}

/// Returns the ops left over by Kahn's algorithm, if any.
fn rank_cycle(ops: &[ScheduleOp]) -> Option<Vec<OpId>> {
    let n = ops.len();
    let mut indegree = vec![0usize; n];
    let mut dependents = vec![Vec::new(); n];
    for op in ops {
        for &dep in &op.requires {
            indegree[op.id as usize] += 1;
            dependents[dep as usize].push(op.id as usize);
        }
    }
    let mut stack: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut seen = 0;
    while let Some(i) = stack.pop() {
        seen += 1;
        for &d in &dependents[i] {
            indegree[d] -= 1;
            if indegree[d] == 0 {
                stack.push(d);
            }
        }
    }
    (seen < n).then(|| (0..n).filter(|&i| indegree[i] > 0).map(|i| i as OpId).collect())
}

/// Detects waits that can never be satisfied once send->recv edges are
/// added to the per-rank dependencies.
fn message_cycle(s: &Schedule) -> Option<Vec<(Rank, OpId)>> {
    let offsets: Vec<usize> = s
        .ranks
        .iter()
        .scan(0usize, |acc, ops| {
            let base = *acc;
            *acc += ops.len();
            Some(base)
        })
        .collect();
    let n = s.op_count();
    let mut indegree = vec![0usize; n];
    let mut dependents = vec![Vec::new(); n];
    for (rank, ops) in s.ranks.iter().enumerate() {
        for op in ops {
            let me = offsets[rank] + op.id as usize;
            for &dep in &op.requires {
                indegree[me] += 1;
                dependents[offsets[rank] + dep as usize].push(me);
            }
        }
    }
    for ((sr, so), (rr, ro)) in match_messages(s) {
        let send = offsets[sr as usize] + so as usize;
        let recv = offsets[rr as usize] + ro as usize;
        indegree[recv] += 1;
        dependents[send].push(recv);
    }
    let mut stack: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut seen = 0;
    while let Some(i) = stack.pop() {
        seen += 1;
        for &d in &dependents[i] {
            indegree[d] -= 1;
            if indegree[d] == 0 {
                stack.push(d);
            }
        }
    }
    if seen == n {
        return None;
    }
    let mut stuck = Vec::new();
    for (rank, ops) in s.ranks.iter().enumerate() {
        for op in ops {
            if indegree[offsets[rank] + op.id as usize] > 0 {
                stuck.push((rank as Rank, op.id));
            }
        }
    }
    Some(stuck)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> Schedule {
        let mut s = Schedule::empty(2);
        s.push(0, OpKind::Send { peer: 1, size: 16 }, vec![]);
        s.push(1, OpKind::Recv { peer: 0, size: 16 }, vec![]);
        s
    }

    #[test]
    fn minimal_schedule_is_valid() {
        assert!(validate(&pair()).is_empty());
    }

    #[test]
    fn unmatched_send_is_one_violation() {
        let mut s = pair();
        s.push(0, OpKind::Send { peer: 1, size: 8 }, vec![]);
        let v = validate(&s);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(matches!(
            v[0],
            Violation::Unmatched {
                sends: 1,
                recvs: 0,
                size: 8,
                ..
            }
        ));
    }

    #[test]
    fn cyclic_requires_is_one_violation() {
        let mut s = Schedule::empty(1);
        s.push(0, OpKind::Calc { duration: 1 }, vec![1]);
        s.push(0, OpKind::Calc { duration: 1 }, vec![0]);
        let v = validate(&s);
        assert_eq!(
            v,
            vec![Violation::DependencyCycle {
                rank: 0,
                ops: vec![0, 1]
            }]
        );
    }

    #[test]
    fn peer_checks() {
        let mut s = Schedule::empty(2);
        s.push(0, OpKind::Send { peer: 0, size: 1 }, vec![]);
        s.push(0, OpKind::Send { peer: 5, size: 1 }, vec![]);
        let v = validate(&s);
        assert!(v.contains(&Violation::SelfMessage { rank: 0, op: 0 }));
        assert!(v.contains(&Violation::PeerOutOfRange {
            rank: 0,
            op: 1,
            peer: 5
        }));
    }

    #[test]
    fn crossed_blocking_waits_are_reported() {
        // Each rank's send waits for its own recv: nobody can go first.
        let mut s = Schedule::empty(2);
        for (me, other) in [(0, 1), (1, 0)] {
            let r = s.push(me, OpKind::Recv { peer: other, size: 4 }, vec![]);
            s.push(me, OpKind::Send { peer: other, size: 4 }, vec![r]);
        }
        let v = validate(&s);
        assert_eq!(v.len(), 1);
        assert!(matches!(&v[0], Violation::MessageCycle { ops } if ops.len() == 4));
    }

    #[test]
    fn matching_is_in_program_order_per_triple() {
        let mut s = Schedule::empty(2);
        s.push(0, OpKind::Send { peer: 1, size: 4 }, vec![]);
        s.push(0, OpKind::Send { peer: 1, size: 8 }, vec![]);
        s.push(0, OpKind::Send { peer: 1, size: 4 }, vec![]);
        s.push(1, OpKind::Recv { peer: 0, size: 8 }, vec![]);
        s.push(1, OpKind::Recv { peer: 0, size: 4 }, vec![]);
        s.push(1, OpKind::Recv { peer: 0, size: 4 }, vec![]);
        let mut pairs = match_messages(&s);
        pairs.sort();
        assert_eq!(pairs, vec![((0, 0), (1, 1)), ((0, 1), (1, 0)), ((0, 2), (1, 2))]);
    }

    #[test]
    fn json_mirrors_ir() {
        let s = gen_ring_allreduce(3, 300, 10).unwrap();
        let back = Schedule::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
        let text = serde_json::to_string(&s.ranks[0][0]).unwrap();
        assert_eq!(text, r#"{"id":0,"kind":"send","peer":1,"size":100}"#);
    }
}

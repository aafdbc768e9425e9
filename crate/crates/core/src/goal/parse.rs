use std::collections::HashMap;

use super::{validate, Metadata, OpId, OpKind, Schedule, ScheduleOp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(u64),
    /// An integer with a `b` suffix.
    Bytes(u64),
    Colon,
    Comma,
    LBrace,
    RBrace,
    /// `#@ key=value`
    Pragma(String),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Int(v) => format!("number {v}"),
            Tok::Bytes(v) => format!("size {v}b"),
            Tok::Colon => "':'".into(),
            Tok::Comma => "','".into(),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::Pragma(_) => "metadata line".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pos {
    line: usize,
    col: usize,
}

fn syntax(pos: Pos, msg: impl Into<String>) -> Error {
    Error::Syntax {
        line: pos.line,
        col: pos.col,
        msg: msg.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(Tok, Pos)>> {
    let mut toks = Vec::new();
    let mut chars = text.chars().peekable();
    let mut pos = Pos { line: 1, col: 1 };
    let advance = |c: char, pos: &mut Pos| {
        if c == '\n' {
            pos.line += 1;
            pos.col = 1;
        } else {
            pos.col += 1;
        }
    };
    while let Some(&c) = chars.peek() {
        let start = pos;
        match c {
            c if c.is_whitespace() => {
                chars.next();
                advance(c, &mut pos);
            }
            '#' => {
                let mut line = String::new();
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    line.push(c);
                    chars.next();
                    advance(c, &mut pos);
                }
                if let Some(rest) = line.strip_prefix("#@") {
                    toks.push((Tok::Pragma(rest.trim().to_string()), start));
                }
            }
            ':' | ',' | '{' | '}' => {
                chars.next();
                advance(c, &mut pos);
                let tok = match c {
                    ':' => Tok::Colon,
                    ',' => Tok::Comma,
                    '{' => Tok::LBrace,
                    _ => Tok::RBrace,
                };
                toks.push((tok, start));
            }
            c if c.is_ascii_digit() => {
                let mut digits = String::new();
                while let Some(&d) = chars.peek() {
                    if !d.is_ascii_digit() {
                        break;
                    }
                    digits.push(d);
                    chars.next();
                    advance(d, &mut pos);
                }
                let value: u64 = digits
                    .parse()
                    .map_err(|_| syntax(start, format!("number '{digits}' out of range")))?;
                let mut suffix = String::new();
                while let Some(&d) = chars.peek() {
                    if !(d.is_ascii_alphanumeric() || d == '_') {
                        break;
                    }
                    suffix.push(d);
                    chars.next();
                    advance(d, &mut pos);
                }
                match suffix.as_str() {
                    "" => toks.push((Tok::Int(value), start)),
                    "b" => toks.push((Tok::Bytes(value), start)),
                    other => {
                        return Err(syntax(
                            start,
                            format!("unexpected suffix '{other}' after number {value}"),
                        ))
                    }
                }
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut ident = String::new();
                while let Some(&d) = chars.peek() {
                    if !(d.is_alphanumeric() || d == '_') {
                        break;
                    }
                    ident.push(d);
                    chars.next();
                    advance(d, &mut pos);
                }
                toks.push((Tok::Ident(ident), start));
            }
            other => return Err(syntax(start, format!("unexpected character '{other}'"))),
        }
    }
    toks.push((Tok::Eof, pos));
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    at: usize,
    metadata: Metadata,
}

impl Parser {
    fn peek(&mut self) -> &(Tok, Pos) {
        while let (Tok::Pragma(p), pos) = &self.toks[self.at] {
            let (p, pos) = (p.clone(), *pos);
            self.at += 1;
            self.apply_pragma(&p, pos);
        }
        &self.toks[self.at]
    }

    fn next(&mut self) -> (Tok, Pos) {
        let t = self.peek().clone();
        if t.0 != Tok::Eof {
            self.at += 1;
        }
        t
    }

    fn apply_pragma(&mut self, text: &str, _pos: Pos) {
        // Malformed metadata lines are treated as comments.
        if let Some((k, v)) = text.split_once('=') {
            let (k, v) = (k.trim(), v.trim());
            if k == "generator" {
                self.metadata.generator = v.to_string();
            } else if !k.is_empty() {
                self.metadata.params.insert(k.to_string(), v.to_string());
            }
        }
    }

    fn keyword(&mut self, word: &str) -> Result<Pos> {
        match self.next() {
            (Tok::Ident(s), pos) if s == word => Ok(pos),
            (tok, pos) => Err(syntax(pos, format!("expected '{word}', found {}", tok.describe()))),
        }
    }

    fn int(&mut self, what: &str) -> Result<(u64, Pos)> {
        match self.next() {
            (Tok::Int(v), pos) => Ok((v, pos)),
            (tok, pos) => Err(syntax(pos, format!("expected {what}, found {}", tok.describe()))),
        }
    }

    fn bytes(&mut self) -> Result<u64> {
        match self.next() {
            (Tok::Bytes(v), _) => Ok(v),
            (tok, pos) => Err(syntax(
                pos,
                format!("expected a message size like '16b', found {}", tok.describe()),
            )),
        }
    }

    fn punct(&mut self, want: Tok) -> Result<Pos> {
        let (tok, pos) = self.next();
        if tok == want {
            Ok(pos)
        } else {
            Err(syntax(
                pos,
                format!("expected {}, found {}", want.describe(), tok.describe()),
            ))
        }
    }

    fn rank_block(&mut self, nranks: u64) -> Result<(u32, Vec<ScheduleOp>)> {
        self.keyword("rank")?;
        let (rank, rank_pos) = self.int("a rank number")?;
        if rank >= nranks {
            return Err(syntax(
                rank_pos,
                format!("rank {rank} out of range for num_ranks {nranks}"),
            ));
        }
        let rank = rank as u32;
        self.punct(Tok::LBrace)?;

        let mut ops: Vec<ScheduleOp> = Vec::new();
        let mut labels: HashMap<String, OpId> = HashMap::new();
        let mut deps: Vec<(String, Pos, Vec<(String, Pos)>)> = Vec::new();
        loop {
            let (tok, pos) = self.next();
            let label = match tok {
                Tok::RBrace => break,
                Tok::Ident(label) => label,
                other => {
                    return Err(syntax(
                        pos,
                        format!("expected a label or '}}', found {}", other.describe()),
                    ))
                }
            };
            match self.next() {
                (Tok::Colon, _) => {
                    let kind = self.op_kind(rank, nranks)?;
                    let id = ops.len() as OpId;
                    if labels.insert(label.clone(), id).is_some() {
                        return Err(syntax(pos, format!("label '{label}' defined twice in rank {rank}")));
                    }
                    ops.push(ScheduleOp {
                        id,
                        kind,
                        requires: Vec::new(),
                    });
                }
                (Tok::Ident(kw), _) if kw == "requires" => {
                    let mut list = Vec::new();
                    loop {
                        match self.next() {
                            (Tok::Ident(dep), dpos) => list.push((dep, dpos)),
                            (tok, tpos) => {
                                return Err(syntax(
                                    tpos,
                                    format!("expected a label after 'requires', found {}", tok.describe()),
                                ))
                            }
                        }
                        if self.peek().0 == Tok::Comma {
                            self.next();
                        } else {
                            break;
                        }
                    }
                    deps.push((label, pos, list));
                }
                (tok, tpos) => {
                    return Err(syntax(
                        tpos,
                        format!(
                            "expected ':' or 'requires' after label '{label}', found {}",
                            tok.describe()
                        ),
                    ))
                }
            }
        }

        for (label, pos, list) in deps {
            let &id = labels
                .get(&label)
                .ok_or_else(|| syntax(pos, format!("unknown label '{label}' in rank {rank}")))?;
            for (dep, dpos) in list {
                let &dep_id = labels
                    .get(&dep)
                    .ok_or_else(|| syntax(dpos, format!("unknown label '{dep}' in rank {rank}")))?;
                ops[id as usize].requires.push(dep_id);
            }
        }
        for op in &mut ops {
            op.requires.sort_unstable();
            op.requires.dedup();
        }
        Ok((rank, ops))
    }

    fn op_kind(&mut self, rank: u32, nranks: u64) -> Result<OpKind> {
        let (tok, pos) = self.next();
        let verb = match tok {
            Tok::Ident(v) => v,
            other => {
                return Err(syntax(
                    pos,
                    format!("expected send, recv or calc, found {}", other.describe()),
                ))
            }
        };
        match verb.as_str() {
            "send" | "recv" => {
                let size = self.bytes()?;
                self.keyword(if verb == "send" { "to" } else { "from" })?;
                let (peer, ppos) = self.int("a peer rank")?;
                if peer >= nranks {
                    return Err(syntax(ppos, format!("peer {peer} out of range for num_ranks {nranks}")));
                }
                if peer == u64::from(rank) {
                    return Err(syntax(ppos, format!("rank {rank} cannot message itself")));
                }
                let peer = peer as u32;
                Ok(if verb == "send" {
                    OpKind::Send { peer, size }
                } else {
                    OpKind::Recv { peer, size }
                })
            }
            "calc" => {
                let (duration, _) = self.int("a duration in ns")?;
                Ok(OpKind::Calc { duration })
            }
            other => Err(syntax(pos, format!("unknown operation '{other}'"))),
        }
    }
}

/// Parses and validates a schedule. Grammar problems are reported as
/// [`Error::Syntax`] with a position; well-formed text describing an
/// unusable schedule yields [`Error::Validation`].
pub fn parse_goal(text: &str) -> Result<Schedule> {
    let mut p = Parser {
        toks: lex(text)?,
        at: 0,
        metadata: Metadata::default(),
    };
    p.keyword("num_ranks")?;
    let (n, npos) = p.int("the number of ranks")?;
    if n == 0 || n > u64::from(u32::MAX) {
        return Err(syntax(npos, format!("num_ranks must be in 1..=2^32-1, got {n}")));
    }
    let mut ranks: Vec<Option<Vec<ScheduleOp>>> = vec![None; n as usize];
    while p.peek().0 != Tok::Eof {
        let block_pos = p.peek().1;
        let (rank, ops) = p.rank_block(n)?;
        if ranks[rank as usize].replace(ops).is_some() {
            return Err(syntax(block_pos, format!("rank {rank} defined twice")));
        }
    }
    let schedule = Schedule {
        nranks: n as u32,
        ranks: ranks.into_iter().map(Option::unwrap_or_default).collect(),
        metadata: p.metadata,
    };
    let violations = validate(&schedule);
    if !violations.is_empty() {
        return Err(Error::Validation(violations.iter().map(ToString::to_string).collect()));
    }
    Ok(schedule)
}

//! Setup handshake shared by both roles. All integers are big-endian.
//!
//! ```text
//! setup   : "NSIM" version:u8 mode:u8 size:u64 connections:u16 iterations:u32
//! session : index:u16 epoch_ns:u64
//! ```
//!
//! `size` is the whole message, `iterations` counts warmup too, and `index`
//! says which part of the message the connection carries. After the
//! handshake each iteration is a raw payload followed by its echo.

use std::io::{self, Read, Write};

pub const MAGIC: [u8; 4] = *b"NSIM";
pub const VERSION: u8 = 1;
pub const SETUP_LEN: usize = 20;
pub const SESSION_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum WireMode {
    /// The responder echoes.
    PingPong = 1,
    /// Bidirectional run, initiator-driven half: the responder echoes.
    BidirForward = 2,
    /// Bidirectional run, responder-driven half: the responder pings and
    /// reports its trace back when done.
    BidirReverse = 3,
}

impl TryFrom<u8> for WireMode {
    type Error = io::Error;

    fn try_from(v: u8) -> io::Result<Self> {
        match v {
            1 => Ok(WireMode::PingPong),
            2 => Ok(WireMode::BidirForward),
            3 => Ok(WireMode::BidirReverse),
            _ => Err(protocol(format!("unknown mode byte {v}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Setup {
    pub mode: WireMode,
    pub size: u64,
    pub connections: u16,
    pub iterations: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Session {
    pub index: u16,
    pub epoch_ns: u64,
}

pub(crate) fn protocol(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

impl Setup {
    pub fn encode(&self) -> [u8; SETUP_LEN] {
        let mut b = [0u8; SETUP_LEN];
        b[..4].copy_from_slice(&MAGIC);
        b[4] = VERSION;
        b[5] = self.mode as u8;
        b[6..14].copy_from_slice(&self.size.to_be_bytes());
        b[14..16].copy_from_slice(&self.connections.to_be_bytes());
        b[16..20].copy_from_slice(&self.iterations.to_be_bytes());
        b
    }

    pub fn decode(b: &[u8; SETUP_LEN]) -> io::Result<Self> {
        if b[..4] != MAGIC {
            return Err(protocol("bad magic; peer is not an nsim benchmark".into()));
        }
        if b[4] != VERSION {
            return Err(protocol(format!("protocol version {} is not supported", b[4])));
        }
        Ok(Setup {
            mode: WireMode::try_from(b[5])?,
            size: u64::from_be_bytes(b[6..14].try_into().unwrap()),
            connections: u16::from_be_bytes(b[14..16].try_into().unwrap()),
            iterations: u32::from_be_bytes(b[16..20].try_into().unwrap()),
        })
    }
}

pub fn write_handshake<W: Write>(w: &mut W, setup: &Setup, session: &Session) -> io::Result<()> {
    let mut b = [0u8; SETUP_LEN + SESSION_LEN];
    b[..SETUP_LEN].copy_from_slice(&setup.encode());
    b[SETUP_LEN..SETUP_LEN + 2].copy_from_slice(&session.index.to_be_bytes());
    b[SETUP_LEN + 2..].copy_from_slice(&session.epoch_ns.to_be_bytes());
    w.write_all(&b)?;
    w.flush()
}

pub fn read_handshake<R: Read>(r: &mut R) -> io::Result<(Setup, Session)> {
    let mut b = [0u8; SETUP_LEN + SESSION_LEN];
    r.read_exact(&mut b)?;
    let setup = Setup::decode(b[..SETUP_LEN].try_into().unwrap())?;
    let session = Session {
        index: u16::from_be_bytes(b[SETUP_LEN..SETUP_LEN + 2].try_into().unwrap()),
        epoch_ns: u64::from_be_bytes(b[SETUP_LEN + 2..].try_into().unwrap()),
    };
    Ok((setup, session))
}

/// Trace rows sent back by the responder after a bidirectional run:
/// count:u32, then (timestamp_ns:u64, value:f64 bits) per row.
pub fn write_rows<W: Write>(w: &mut W, rows: &[(u64, f64)]) -> io::Result<()> {
    let mut b = Vec::with_capacity(4 + 16 * rows.len());
    b.extend_from_slice(&(rows.len() as u32).to_be_bytes());
    for (t, v) in rows {
        b.extend_from_slice(&t.to_be_bytes());
        b.extend_from_slice(&v.to_bits().to_be_bytes());
    }
    w.write_all(&b)?;
    w.flush()
}

pub fn read_rows<R: Read>(r: &mut R) -> io::Result<Vec<(u64, f64)>> {
    let mut n = [0u8; 4];
    r.read_exact(&mut n)?;
    let n = u32::from_be_bytes(n) as usize;
    let mut b = vec![0u8; 16 * n];
    r.read_exact(&mut b)?;
    Ok(b.chunks_exact(16)
        .map(|c| {
            (
                u64::from_be_bytes(c[..8].try_into().unwrap()),
                f64::from_bits(u64::from_be_bytes(c[8..].try_into().unwrap())),
            )
        })
        .collect())
}

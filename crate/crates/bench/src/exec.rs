//! Runs a schedule for real: one thread per rank, one loopback TCP
//! connection per communicating pair of ranks.
//!
//! Ops run in program order on their rank. Sends are eager writes, so
//! message sizes are capped at [`EAGER_LIMIT`] to keep them within the
//! socket buffers. Recvs read the next bytes from the peer's connection;
//! messages between a pair therefore must be received in the order they
//! were sent, which holds for every generated schedule.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::{Ipv4Addr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Barrier, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use nsim_core::goal::validate;
use nsim_core::{Error, OpKind, Result, Schedule};

pub const EAGER_LIMIT: u64 = 64 * 1024;

fn check(s: &Schedule) -> Result<()> {
    let violations = validate(s);
    if !violations.is_empty() {
        return Err(Error::Validation(violations.iter().map(ToString::to_string).collect()));
    }
    for (r, ops) in s.ranks.iter().enumerate() {
        for op in ops {
            if let Some(&d) = op.requires.iter().find(|&&d| d >= op.id) {
                return Err(Error::InvalidArgument(format!(
                    "rank {r} op {} requires later op {d}; only program-ordered schedules can be executed",
                    op.id
                )));
            }
            if let OpKind::Send { size, .. } | OpKind::Recv { size, .. } = op.kind {
                if size > EAGER_LIMIT {
                    return Err(Error::InvalidArgument(format!(
                        "rank {r} op {}: {size} bytes exceeds the eager limit of {EAGER_LIMIT}",
                        op.id
                    )));
                }
            }
        }
    }
    Ok(())
}

fn connect_pairs(s: &Schedule) -> Result<Vec<HashMap<usize, TcpStream>>> {
    let listener = TcpListener::bind((Ipv4Addr::LOCALHOST, 0))?;
    let addr = listener.local_addr()?;
    let mut links: Vec<HashMap<usize, TcpStream>> = (0..s.ranks.len()).map(|_| HashMap::new()).collect();
    for (r, ops) in s.ranks.iter().enumerate() {
        for op in ops {
            let peer = match op.kind {
                OpKind::Send { peer, .. } | OpKind::Recv { peer, .. } => peer as usize,
                OpKind::Calc { .. } => continue,
            };
            if links[r].contains_key(&peer) {
                continue;
            }
            let a = TcpStream::connect(addr)?;
            let (b, _) = listener.accept()?;
            for stream in [&a, &b] {
                stream.set_nodelay(true)?;
            }
            links[r].insert(peer, a);
            links[peer].insert(r, b);
        }
    }
    Ok(links)
}

fn spin(ns: u64) {
    let end = Instant::now() + Duration::from_nanos(ns);
    while Instant::now() < end {
        std::hint::spin_loop();
    }
}

fn run_rank(
    ops: &[nsim_core::ScheduleOp],
    links: &mut HashMap<usize, TcpStream>,
    buf: &mut [u8],
) -> std::io::Result<()> {
    for op in ops {
        match op.kind {
            OpKind::Send { peer, size } => {
                let s = links.get_mut(&(peer as usize)).unwrap();
                s.write_all(&buf[..size as usize])?;
            }
            OpKind::Recv { peer, size } => {
                let s = links.get_mut(&(peer as usize)).unwrap();
                s.read_exact(&mut buf[..size as usize])?;
            }
            OpKind::Calc { duration } => spin(duration),
        }
    }
    Ok(())
}

/// Executes `s` `warmup + iterations` times and returns the completion time
/// of each non-warmup iteration in ns. As in MPI benchmarks, every rank
/// times itself from its own release at the barrier and the iteration
/// reports the slowest rank; staggered wakeups at the barrier are not
/// counted.
pub fn execute_schedule(s: &Schedule, warmup: u32, iterations: u32) -> Result<Vec<u64>> {
    check(s)?;
    let mut links = connect_pairs(s)?;
    let n = s.ranks.len();
    let start = Barrier::new(n + 1);
    let done = Barrier::new(n + 1);
    let stop = AtomicBool::new(false);
    let elapsed: Vec<AtomicU64> = (0..n).map(|_| AtomicU64::new(0)).collect();
    let failure: Mutex<Option<std::io::Error>> = Mutex::new(None);
    let mut out = Vec::with_capacity(iterations as usize);

    thread::scope(|scope| {
        for (r, rank_links) in links.iter_mut().enumerate() {
            let ops = &s.ranks[r];
            let (start, done, stop, elapsed, failure) = (&start, &done, &stop, &elapsed, &failure);
            scope.spawn(move || {
                let mut buf = vec![0x5Au8; EAGER_LIMIT as usize];
                let mut healthy = true;
                loop {
                    start.wait();
                    if stop.load(Ordering::Acquire) {
                        return;
                    }
                    let began = Instant::now();
                    if healthy {
                        if let Err(e) = run_rank(ops, rank_links, &mut buf) {
                            healthy = false;
                            failure.lock().unwrap().get_or_insert(e);
                            // Unblock peers waiting on us.
                            for l in rank_links.values() {
                                let _ = l.shutdown(std::net::Shutdown::Both);
                            }
                        }
                    }
                    elapsed[r].store(began.elapsed().as_nanos() as u64, Ordering::Release);
                    done.wait();
                }
            });
        }
        for i in 0..warmup + iterations {
            start.wait();
            done.wait();
            if failure.lock().unwrap().is_some() {
                break;
            }
            if i >= warmup {
                out.push(elapsed.iter().map(|e| e.load(Ordering::Acquire)).max().unwrap());
            }
        }
        stop.store(true, Ordering::Release);
        start.wait();
    });
    match failure.into_inner().unwrap() {
        Some(e) => Err(e.into()),
        None => Ok(out),
    }
}

//! Multi-connection ping-pong, one- and two-directional.

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Barrier, Mutex};
use std::thread;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use nsim_core::noise::TraceRow;
use nsim_core::{Error, Result, SampleTrace, Unit};

use crate::wire::{self, Session, Setup, WireMode};

/// Anything that behaves like a reliable byte stream. TCP in production;
/// Unix socket pairs in tests.
pub trait Stream: Read + Write + Send {}
impl<T: Read + Write + Send> Stream for T {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    PingPong,
    PingPongBidir,
    Detour,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Initiator,
    Responder,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchPlan {
    pub mode: Mode,
    pub size: u64,
    pub iterations: u32,
    pub warmup_iterations: u32,
    pub connections: u16,
    /// Pause between one iteration's completion and the next one's start.
    pub inter_message_interval_ns: u64,
    pub peer: String,
    pub role: Role,
}

pub const DEFAULT_WARMUP: u32 = 10;

impl BenchPlan {
    pub fn pingpong(peer: &str, size: u64, iterations: u32) -> Self {
        BenchPlan {
            mode: Mode::PingPong,
            size,
            iterations,
            warmup_iterations: DEFAULT_WARMUP,
            connections: 1,
            inter_message_interval_ns: 0,
            peer: peer.to_string(),
            role: Role::Initiator,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::InvalidArgument("message size must be at least 1 byte".into()));
        }
        if self.connections == 0 {
            return Err(Error::InvalidArgument("at least one connection is required".into()));
        }
        if self.size < u64::from(self.connections) {
            return Err(Error::InvalidArgument(format!(
                "{} bytes cannot be split over {} connections",
                self.size, self.connections
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("at least one iteration is required".into()));
        }
        if self.iterations.checked_add(self.warmup_iterations).is_none() {
            return Err(Error::InvalidArgument("too many iterations".into()));
        }
        Ok(())
    }

    fn total_iterations(&self) -> u32 {
        self.iterations + self.warmup_iterations
    }
}

/// Contiguous, non-empty parts of `size` bytes, one per connection; the
/// first `size % n` parts carry one extra byte.
pub fn split_parts(size: u64, n: u16) -> Vec<u64> {
    let n = u64::from(n);
    (0..n).map(|i| size / n + u64::from(i < size % n)).collect()
}

pub(crate) fn wall_ns() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0)
}

/// Maps monotonic instants onto wall-clock nanoseconds since `epoch_ns`.
#[derive(Clone, Copy)]
struct Clock {
    base: Instant,
    base_since_epoch: u64,
}

impl Clock {
    fn new(epoch_ns: u64) -> Self {
        let base = Instant::now();
        Clock {
            base,
            base_since_epoch: wall_ns().saturating_sub(epoch_ns),
        }
    }

    fn stamp(&self, t: Instant) -> u64 {
        self.base_since_epoch + t.duration_since(self.base).as_nanos() as u64
    }
}

fn pause(d: Duration) {
    if d.is_zero() {
        return;
    }
    // Short pauses spin; the scheduler's wakeup latency would dominate them.
    if d >= Duration::from_micros(200) {
        thread::sleep(d);
    } else {
        let end = Instant::now() + d;
        while Instant::now() < end {
            std::hint::spin_loop();
        }
    }
}

fn ping<S: Stream>(s: &mut S, buf: &mut [u8]) -> io::Result<()> {
    s.write_all(buf)?;
    s.flush()?;
    s.read_exact(buf)
}

fn echo<S: Stream>(s: &mut S, part: u64, iterations: u32) -> io::Result<()> {
    let mut buf = vec![0u8; part as usize];
    for _ in 0..iterations {
        s.read_exact(&mut buf)?;
        s.write_all(&buf)?;
        s.flush()?;
    }
    Ok(())
}

/// Runs the timed loop on `streams` and returns (timestamp, RTT/2) rows for
/// the non-warmup iterations.
fn timed_loop<S: Stream>(
    streams: &mut [S],
    parts: &[u64],
    warmup: u32,
    iterations: u32,
    interval: Duration,
    clock: Clock,
) -> io::Result<Vec<(u64, f64)>> {
    let total = warmup + iterations;
    let mut rows = Vec::with_capacity(iterations as usize);
    let mut record = |i: u32, t0: Instant, t1: Instant| {
        if i >= warmup {
            rows.push((clock.stamp(t0), t1.duration_since(t0).as_nanos() as f64 / 2.0));
        }
    };

    if let [stream] = streams {
        // A single connection needs no barrier and no helper thread.
        let mut buf = vec![0xA5u8; parts[0] as usize];
        for i in 0..total {
            if i > 0 {
                pause(interval);
            }
            let t0 = Instant::now();
            ping(stream, &mut buf)?;
            record(i, t0, Instant::now());
        }
        return Ok(rows);
    }

    let n = streams.len();
    let start = Barrier::new(n + 1);
    let done = Barrier::new(n + 1);
    let stop = AtomicBool::new(false);
    let finish: Vec<AtomicU64> = (0..n).map(|_| AtomicU64::new(0)).collect();
    let failure: Mutex<Option<io::Error>> = Mutex::new(None);
    let origin = Instant::now();

    thread::scope(|scope| {
        for (k, (stream, &part)) in streams.iter_mut().zip(parts).enumerate() {
            let (start, done, stop, finish, failure) = (&start, &done, &stop, &finish, &failure);
            scope.spawn(move || {
                let mut buf = vec![0xA5u8; part as usize];
                let mut healthy = true;
                loop {
                    start.wait();
                    if stop.load(Ordering::Acquire) {
                        return;
                    }
                    if healthy {
                        if let Err(e) = ping(stream, &mut buf) {
                            healthy = false;
                            failure.lock().unwrap().get_or_insert(e);
                        }
                    }
                    finish[k].store(origin.elapsed().as_nanos() as u64, Ordering::Release);
                    done.wait();
                }
            });
        }
        for i in 0..total {
            if i > 0 {
                pause(interval);
            }
            let t0 = Instant::now();
            start.wait();
            done.wait();
            if failure.lock().unwrap().is_some() {
                break;
            }
            let last = finish.iter().map(|f| f.load(Ordering::Acquire)).max().unwrap();
            record(i, t0, origin + Duration::from_nanos(last));
        }
        stop.store(true, Ordering::Release);
        start.wait();
    });
    match failure.into_inner().unwrap() {
        Some(e) => Err(e),
        None => Ok(rows),
    }
}

fn to_trace(rows: Vec<(u64, f64)>) -> Result<SampleTrace> {
    let rows = rows
        .into_iter()
        .map(|(timestamp_ns, value)| TraceRow { timestamp_ns, value })
        .collect();
    SampleTrace::new(rows, Unit::Nanoseconds)
}

fn handshake<S: Stream>(streams: &mut [S], setup: Setup, first_index: u16, epoch_ns: u64) -> io::Result<()> {
    for (i, s) in streams.iter_mut().enumerate() {
        let session = Session {
            index: first_index + i as u16,
            epoch_ns,
        };
        wire::write_handshake(s, &setup, &session)?;
    }
    Ok(())
}

/// Initiator side of a ping-pong over already connected streams, one per
/// connection in `plan`.
pub fn pingpong_over<S: Stream>(plan: &BenchPlan, mut streams: Vec<S>) -> Result<SampleTrace> {
    plan.check()?;
    if streams.len() != usize::from(plan.connections) {
        return Err(Error::InvalidArgument(format!(
            "{} streams for {} connections",
            streams.len(),
            plan.connections
        )));
    }
    let setup = Setup {
        mode: WireMode::PingPong,
        size: plan.size,
        connections: plan.connections,
        iterations: plan.total_iterations(),
    };
    let epoch = wall_ns();
    handshake(&mut streams, setup, 0, epoch)?;
    let rows = timed_loop(
        &mut streams,
        &split_parts(plan.size, plan.connections),
        plan.warmup_iterations,
        plan.iterations,
        Duration::from_nanos(plan.inter_message_interval_ns),
        Clock::new(epoch),
    )?;
    to_trace(rows)
}

/// Initiator side of the bidirectional ping-pong. `streams` holds
/// `2 * connections` streams: the first half carry this side's pings, the
/// second half the peer's. Returns (this side's trace, the peer's trace),
/// both timestamped from the epoch this side sent at setup.
pub fn pingpong_bidirectional_over<S: Stream>(
    plan: &BenchPlan,
    mut streams: Vec<S>,
) -> Result<(SampleTrace, SampleTrace)> {
    plan.check()?;
    let c = usize::from(plan.connections);
    if streams.len() != 2 * c {
        return Err(Error::InvalidArgument(format!(
            "{} streams for a bidirectional run over {c} connections",
            streams.len()
        )));
    }
    let epoch = wall_ns();
    let mut setup = Setup {
        mode: WireMode::BidirForward,
        size: plan.size,
        connections: plan.connections,
        iterations: plan.total_iterations(),
    };
    let (forward, reverse) = streams.split_at_mut(c);
    handshake(forward, setup, 0, epoch)?;
    setup.mode = WireMode::BidirReverse;
    handshake(reverse, setup, plan.connections, epoch)?;

    let parts = split_parts(plan.size, plan.connections);
    let total = plan.total_iterations();
    let (outgoing, echo_result) = thread::scope(|scope| {
        let echoes: Vec<_> = reverse
            .iter_mut()
            .zip(&parts)
            .map(|(s, &part)| scope.spawn(move || echo(s, part, total)))
            .collect();
        let out = timed_loop(
            forward,
            &parts,
            plan.warmup_iterations,
            plan.iterations,
            Duration::from_nanos(plan.inter_message_interval_ns),
            Clock::new(epoch),
        );
        let echoed: io::Result<()> = echoes.into_iter().try_for_each(|h| h.join().unwrap());
        (out, echoed)
    });
    let outgoing = outgoing?;
    echo_result?;
    let incoming = wire::read_rows(&mut reverse[0])?;
    Ok((to_trace(outgoing)?, to_trace(incoming)?))
}

fn connect(peer: &str) -> Result<TcpStream> {
    let s = TcpStream::connect(peer)?;
    s.set_nodelay(true)?;
    Ok(s)
}

/// Ping-pong against a responder at `plan.peer` over TCP.
pub fn pingpong(plan: &BenchPlan) -> Result<SampleTrace> {
    plan.check()?;
    let streams = (0..plan.connections)
        .map(|_| connect(&plan.peer))
        .collect::<Result<Vec<_>>>()?;
    pingpong_over(plan, streams)
}

/// Bidirectional ping-pong against a responder at `plan.peer` over TCP.
pub fn pingpong_bidirectional(plan: &BenchPlan) -> Result<(SampleTrace, SampleTrace)> {
    plan.check()?;
    let streams = (0..2 * plan.connections)
        .map(|_| connect(&plan.peer))
        .collect::<Result<Vec<_>>>()?;
    pingpong_bidirectional_over(plan, streams)
}

/// What a responder saw in one session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionSummary {
    pub setup: Setup,
    /// The responder's own trace in a bidirectional session.
    pub reverse: Option<SampleTrace>,
}

/// Serves one session. `first` is an accepted stream; `accept` yields the
/// remaining ones.
pub fn serve_session<S: Stream>(mut first: S, mut accept: impl FnMut() -> io::Result<S>) -> Result<SessionSummary> {
    let (setup, session) = wire::read_handshake(&mut first)?;
    let c = usize::from(setup.connections);
    if c == 0 || setup.size < setup.connections as u64 {
        return Err(Error::InvalidArgument(format!(
            "peer asked for {} bytes over {c} connections",
            setup.size
        )));
    }
    let expected = if setup.mode == WireMode::PingPong { c } else { 2 * c };
    let mut slots: Vec<Option<S>> = (0..expected).map(|_| None).collect();
    let place = |s: S, sess: Session, slots: &mut Vec<Option<S>>| -> Result<()> {
        let i = usize::from(sess.index);
        if i >= expected || slots[i].is_some() || sess.epoch_ns != session.epoch_ns {
            return Err(Error::InvalidArgument(format!("unexpected connection index {i}")));
        }
        slots[i] = Some(s);
        Ok(())
    };
    place(first, session, &mut slots)?;
    for _ in 1..expected {
        let mut s = accept()?;
        let (_, sess) = wire::read_handshake(&mut s)?;
        place(s, sess, &mut slots)?;
    }
    let mut streams: Vec<S> = slots.into_iter().map(Option::unwrap).collect();
    let parts = split_parts(setup.size, setup.connections);

    if setup.mode == WireMode::PingPong {
        thread::scope(|scope| {
            let handles: Vec<_> = streams
                .iter_mut()
                .zip(&parts)
                .map(|(s, &part)| scope.spawn(move || echo(s, part, setup.iterations)))
                .collect();
            handles.into_iter().try_for_each(|h| h.join().unwrap())
        })?;
        return Ok(SessionSummary { setup, reverse: None });
    }

    // Bidirectional: echo the initiator's pings while timing our own. Warmup
    // iterations are not on the wire protocol, so none are skipped here.
    let (forward, reverse) = streams.split_at_mut(c);
    let (mine, echoed) = thread::scope(|scope| {
        let handles: Vec<_> = forward
            .iter_mut()
            .zip(&parts)
            .map(|(s, &part)| scope.spawn(move || echo(s, part, setup.iterations)))
            .collect();
        let mine = timed_loop(
            reverse,
            &parts,
            0,
            setup.iterations,
            Duration::ZERO,
            Clock::new(session.epoch_ns),
        );
        let echoed: io::Result<()> = handles.into_iter().try_for_each(|h| h.join().unwrap());
        (mine, echoed)
    });
    let mine = mine?;
    echoed?;
    wire::write_rows(&mut reverse[0], &mine)?;
    Ok(SessionSummary {
        setup,
        reverse: Some(to_trace(mine)?),
    })
}

/// Accepts and serves sessions until `max_sessions` have completed, or
/// forever when it is `None`.
pub fn serve(listener: &TcpListener, max_sessions: Option<usize>) -> Result<Vec<SessionSummary>> {
    let mut done = Vec::new();
    let accept = || -> io::Result<TcpStream> {
        let (s, _) = listener.accept()?;
        s.set_nodelay(true)?;
        Ok(s)
    };
    while max_sessions.is_none_or(|m| done.len() < m) {
        let first = accept()?;
        done.push(serve_session(first, accept)?);
    }
    Ok(done)
}

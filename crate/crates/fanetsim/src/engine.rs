//! Deterministic discrete-event engine: simulation clock, ordered event queue,
//! and reproducible per-node random streams.
//!
//! Time is integer microseconds. Events fire in strict `(fire_at, seq)` order,
//! where `seq` is the insertion counter, so replays are exact regardless of
//! how ties arise. Randomness is never shared: every consumer derives its own
//! stream from `(master_seed, node, purpose)` so that adding or reordering one
//! consumer cannot perturb another's draws.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulation time in integer microseconds since simulation start.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_us(us: u64) -> Self {
        SimTime(us)
    }

    pub fn from_ms(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    pub fn as_us(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn plus_us(self, us: u64) -> Self {
        SimTime(self.0 + us)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

/// Index of a node within a run. Assigned in scenario order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn idx(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Identifier handed back by [`EventQueue::schedule`]; equals the event's
/// insertion sequence number, unique within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventId(pub u64);

/// A scheduled event: fires at `fire_at`, targeting `target`, carrying an
/// opaque action descriptor chosen by the embedding simulation.
#[derive(Debug, Clone)]
pub struct Event<A> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub target: NodeId,
    pub action: A,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("event scheduled into the past: fire_at {fire_at} < now {now} (logic bug)")]
pub struct PastScheduleError {
    pub now: SimTime,
    pub fire_at: SimTime,
}

struct HeapEntry<A>(Event<A>);

impl<A> PartialEq for HeapEntry<A> {
    fn eq(&self, other: &Self) -> bool {
        self.0.fire_at == other.0.fire_at && self.0.seq == other.0.seq
    }
}

impl<A> Eq for HeapEntry<A> {}

impl<A> PartialOrd for HeapEntry<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<A> Ord for HeapEntry<A> {
    // Reversed so the BinaryHeap pops the smallest (fire_at, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.fire_at, other.0.seq).cmp(&(self.0.fire_at, self.0.seq))
    }
}

/// Ordered future event set plus the simulation clock.
pub struct EventQueue<A> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<HeapEntry<A>>,
}

impl<A> Default for EventQueue<A> {
    fn default() -> Self {
        Self::new()
    }
}

impl<A> EventQueue<A> {
    pub fn new() -> Self {
        EventQueue {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Schedules an event. Scheduling into the past is a logic bug and is
    /// rejected rather than silently reordered.
    pub fn schedule(
        &mut self,
        fire_at: SimTime,
        target: NodeId,
        action: A,
    ) -> Result<EventId, PastScheduleError> {
        if fire_at < self.now {
            return Err(PastScheduleError {
                now: self.now,
                fire_at,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(HeapEntry(Event {
            fire_at,
            seq,
            target,
            action,
        }));
        Ok(EventId(seq))
    }

    /// Pops the next event if it fires at or before `t_end`, advancing the
    /// clock to its fire time. Does not advance the clock past the last
    /// popped event; callers use [`advance_to`](Self::advance_to) to close a
    /// window.
    pub fn pop_ready(&mut self, t_end: SimTime) -> Option<Event<A>> {
        match self.heap.peek() {
            Some(entry) if entry.0.fire_at <= t_end => {
                let ev = self.heap.pop().expect("peeked entry present").0;
                debug_assert!(ev.fire_at >= self.now, "clock monotonicity violated");
                self.now = ev.fire_at;
                Some(ev)
            }
            _ => None,
        }
    }

    /// Moves the clock forward to `t` (never backwards).
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }

    /// Runs every event with `fire_at <= t_end` exactly once, in
    /// `(fire_at, seq)` order, leaving the clock at `t_end`. The handler may
    /// schedule follow-up events; follow-ups inside the window fire in the
    /// same call. Returns the number of fired events.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, Event<A>),
    {
        assert!(
            t_end >= self.now,
            "run_until target {t_end} is before now {}",
            self.now
        );
        let mut fired = 0u64;
        while let Some(ev) = self.pop_ready(t_end) {
            handler(self, ev);
            fired += 1;
        }
        self.advance_to(t_end);
        fired
    }
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

// Stafford variant 13 of the splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic per-(seed, node, purpose) random stream.
///
/// The derivation is a fixed avalanche mix of the origin triple, so identical
/// triples always yield identical sequences while distinct purpose tags on
/// the same node produce independent streams. The generator itself is
/// splitmix64 (64-bit state, golden-ratio increment).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RandomStream {
    state: u64,
}

impl RandomStream {
    pub fn derive(master_seed: u64, node: NodeId, purpose: &str) -> Self {
        let mut s = mix64(master_seed ^ GOLDEN_GAMMA);
        s = mix64(s ^ u64::from(node.0));
        for b in purpose.bytes() {
            s = mix64(s ^ u64::from(b));
        }
        RandomStream { state: s }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform draw in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [lo, hi). Degenerate ranges (lo == hi) return lo.
    pub fn next_range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        debug_assert!(lo <= hi);
        lo + self.next_f64() * (hi - lo)
    }

    /// Uniform integer draw in [0, n). n must be positive.
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        let v = (self.next_f64() * n as f64) as u64;
        v.min(n - 1)
    }
}

/// Free-function alias for [`RandomStream::derive`].
pub fn rng_stream(master_seed: u64, node: NodeId, purpose: &str) -> RandomStream {
    RandomStream::derive(master_seed, node, purpose)
}

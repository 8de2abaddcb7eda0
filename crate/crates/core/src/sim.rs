//! Deterministic discrete-event network simulator.
//!
//! Time is integer nanoseconds. Every node owns one serial pipe that its
//! outgoing serialization, incoming transmission, and compute charges all
//! share, so a node saturated by traffic falls behind in a measurable way.
//! A message's delivery instant is its sender-side departure (FIFO egress:
//! earlier sends finish serializing first) plus a propagation delay sampled
//! uniformly from a configured band. Runs are reproducible: one seeded
//! generator drives all sampling, ties break by insertion order, and a
//! chained digest over every processed event fingerprints the whole run.
//!
//! Nodes can be scheduled sluggish for time windows. A send while either
//! endpoint is sluggish parks the message with the sender; it is
//! re-serialized (and re-charged) at the first instant both endpoints are
//! prompt, and a receiver that turns sluggish before arrival bounces the
//! message back into that buffered state.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest as _, Sha256};

use crate::crypto::NodeId;
use crate::merkle::Digest;
use crate::messages::Msg;
use crate::types::{Block, Certificate, Height, IdentifierBlock, Rank, View};
use crate::wire::{self, Wire};

pub fn secs_to_ns(s: f64) -> u64 {
    (s * 1e9).round() as u64
}

pub fn ns_to_secs(ns: u64) -> f64 {
    ns as f64 / 1e9
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dest {
    To(NodeId),
    Broadcast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimerTag {
    /// Pre-commit countdown for one proposal.
    CommitTimer { view: View, height: Height },
    /// New leader's grace period for collecting status reports.
    NewViewWait { view: View },
    /// Expected-progress checkpoint `level` within a view.
    Silence { view: View, level: u32 },
}

impl TimerTag {
    fn hash_bytes(&self, out: &mut Vec<u8>) {
        match self {
            TimerTag::CommitTimer { view, height } => {
                wire::put_u8(out, 1);
                wire::put_u64(out, *view);
                wire::put_u64(out, *height);
            }
            TimerTag::NewViewWait { view } => {
                wire::put_u8(out, 2);
                wire::put_u64(out, *view);
            }
            TimerTag::Silence { view, level } => {
                wire::put_u8(out, 3);
                wire::put_u64(out, *view);
                wire::put_u32(out, *level);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Init,
    Deliver { from: NodeId, msg: Msg },
    Timer { tag: TimerTag },
    Batch { height: Height, requests: Vec<Digest> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvidenceKind {
    Equivocation,
    Coding,
    Silence,
}

/// Protocol-level occurrences surfaced to the harness.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Note {
    Committed {
        view: View,
        identifier: IdentifierBlock,
        block: Option<Block>,
    },
    FollowCommitted {
        identifier: IdentifierBlock,
        block: Block,
    },
    VoteCast {
        view: View,
        identifier: IdentifierBlock,
    },
    CertFormed {
        cert: Certificate,
    },
    LockRaised {
        rank: Rank,
    },
    ViewEntered {
        view: View,
    },
    NewViewAccepted {
        view: View,
    },
    BatchNeeded {
        height: Height,
    },
    EvidenceDetected {
        view: View,
        kind: EvidenceKind,
    },
    BlameSent {
        view: View,
        level: u32,
    },
}

/// Everything a node does in reaction to one event.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct Output {
    pub sends: Vec<(Dest, Msg)>,
    pub timers: Vec<(u64, TimerTag)>,
    pub notes: Vec<Note>,
    /// Extra compute time charged to the node's pipe, in nanoseconds.
    pub busy: u64,
}

impl Output {
    pub fn send(&mut self, to: NodeId, msg: Msg) {
        self.sends.push((Dest::To(to), msg));
    }

    pub fn broadcast(&mut self, msg: Msg) {
        self.sends.push((Dest::Broadcast, msg));
    }

    pub fn timer(&mut self, delay: u64, tag: TimerTag) {
        self.timers.push((delay, tag));
    }

    pub fn note(&mut self, note: Note) {
        self.notes.push(note);
    }

    pub fn merge(&mut self, other: Output) {
        self.sends.extend(other.sends);
        self.timers.extend(other.timers);
        self.notes.extend(other.notes);
        self.busy += other.busy;
    }
}

/// A deterministic state machine driven by the simulator.
pub trait Actor {
    fn on_event(&mut self, now: u64, ev: Event) -> Output;
}

/// Sluggish windows for one node: sorted, disjoint, half-open [start, end).
#[derive(Debug, Clone, Default)]
pub struct SluggishSchedule {
    intervals: Vec<(u64, u64)>,
}

impl SluggishSchedule {
    pub fn new(mut intervals: Vec<(u64, u64)>) -> Self {
        intervals.retain(|(s, e)| e > s);
        intervals.sort_unstable();
        for w in intervals.windows(2) {
            assert!(w[0].1 <= w[1].0, "sluggish intervals must not overlap");
        }
        SluggishSchedule { intervals }
    }

    pub fn is_sluggish(&self, t: u64) -> bool {
        self.intervals.iter().any(|&(s, e)| s <= t && t < e)
    }

    /// End of the interval covering `t`, if any.
    fn release_after(&self, t: u64) -> Option<u64> {
        self.intervals
            .iter()
            .find(|&&(s, e)| s <= t && t < e)
            .map(|&(_, e)| e)
    }

    fn overlaps(&self, t0: u64, t1: u64) -> bool {
        self.intervals.iter().any(|&(s, e)| s < t1 && t0 < e)
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NetParams {
    pub n: usize,
    pub bandwidth_bytes_per_sec: f64,
    /// Upper bound on propagation delay, in nanoseconds.
    pub prop_max_ns: u64,
    /// Propagation is sampled uniformly from [frac * max, max].
    pub prop_min_frac: f64,
    /// Synchrony bound used only for violation accounting.
    pub delta_ns: u64,
}

impl NetParams {
    fn tx_ns(&self, bytes: u64) -> u64 {
        assert!(self.bandwidth_bytes_per_sec > 0.0);
        ((bytes as f64) / self.bandwidth_bytes_per_sec * 1e9).round() as u64
    }
}

enum Kind {
    Actor {
        ev: Event,
        /// Transmission of this message still has to be charged to the
        /// receiver's pipe (false for timers, batches, and self-sends).
        from_net: bool,
        /// Arrival-instant sluggishness already checked (set when an event
        /// is re-queued behind a busy pipe).
        checked: bool,
        size: u64,
    },
    /// Sender-side buffered message coming due: serialize and ship it.
    Release { to: NodeId, msg: Msg },
}

struct Entry {
    time: u64,
    seq: u64,
    target: NodeId,
    kind: Kind,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

/// What one simulator step processed.
pub struct StepReport {
    pub time: u64,
    pub node: NodeId,
    pub notes: Vec<Note>,
}

pub struct SimCore {
    params: NetParams,
    schedules: Vec<SluggishSchedule>,
    heap: BinaryHeap<Reverse<Entry>>,
    seq: u64,
    now: u64,
    pipe_free: Vec<u64>,
    rng: ChaCha12Rng,
    trace: Digest,
    bytes_tx: Vec<u64>,
    bytes_rx: Vec<u64>,
    msgs_delivered: u64,
    events_processed: u64,
    delta_violations: u64,
    bufferings: u64,
}

impl SimCore {
    pub fn new(params: NetParams, schedules: Vec<SluggishSchedule>, seed: u64) -> Self {
        assert_eq!(schedules.len(), params.n);
        assert!(params.bandwidth_bytes_per_sec > 0.0);
        assert!((0.0..=1.0).contains(&params.prop_min_frac));
        let n = params.n;
        SimCore {
            params,
            schedules,
            heap: BinaryHeap::new(),
            seq: 0,
            now: 0,
            pipe_free: vec![0; n],
            rng: ChaCha12Rng::seed_from_u64(seed),
            trace: [0; 32],
            bytes_tx: vec![0; n],
            bytes_rx: vec![0; n],
            msgs_delivered: 0,
            events_processed: 0,
            delta_violations: 0,
            bufferings: 0,
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.heap.peek().map(|Reverse(e)| e.time)
    }

    pub fn bytes_tx(&self) -> &[u64] {
        &self.bytes_tx
    }

    pub fn bytes_rx(&self) -> &[u64] {
        &self.bytes_rx
    }

    pub fn msgs_delivered(&self) -> u64 {
        self.msgs_delivered
    }

    pub fn events_processed(&self) -> u64 {
        self.events_processed
    }

    pub fn delta_violations(&self) -> u64 {
        self.delta_violations
    }

    pub fn bufferings(&self) -> u64 {
        self.bufferings
    }

    pub fn trace_hash(&self) -> Digest {
        self.trace
    }

    fn push(&mut self, time: u64, target: NodeId, kind: Kind) {
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Reverse(Entry {
            time,
            seq,
            target,
            kind,
        }));
    }

    pub fn push_event(&mut self, time: u64, target: NodeId, ev: Event) {
        self.push(
            time,
            target,
            Kind::Actor {
                ev,
                from_net: false,
                checked: true,
                size: 0,
            },
        );
    }

    /// Schedule Init for every node at time zero, in id order.
    pub fn schedule_init(&mut self) {
        for id in 0..self.params.n as NodeId {
            self.push_event(0, id, Event::Init);
        }
    }

    fn sluggish(&self, node: NodeId, t: u64) -> bool {
        self.schedules[node as usize].is_sluggish(t)
    }

    /// First instant at or after `t` when both nodes are prompt. Schedules
    /// are finite, so this always exists.
    fn next_both_prompt(&self, a: NodeId, b: NodeId, t: u64) -> u64 {
        let mut t = t;
        loop {
            if let Some(e) = self.schedules[a as usize].release_after(t) {
                t = e;
                continue;
            }
            if let Some(e) = self.schedules[b as usize].release_after(t) {
                t = e;
                continue;
            }
            return t;
        }
    }

    fn prompt_throughout(&self, a: NodeId, b: NodeId, t0: u64, t1: u64) -> bool {
        !self.schedules[a as usize].overlaps(t0, t1)
            && !self.schedules[b as usize].overlaps(t0, t1)
    }

    /// Serialize one message on the sender's pipe starting at `*cursor` and
    /// schedule its delivery; `sent_at` is when the protocol issued it.
    fn transmit(&mut self, from: NodeId, to: NodeId, msg: Msg, cursor: &mut u64, sent_at: u64) {
        let size = msg.wire_len() as u64;
        let tx = self.params.tx_ns(size);
        *cursor += tx;
        self.bytes_tx[from as usize] += size;
        let span = self.params.prop_max_ns;
        let lo = (self.params.prop_min_frac * span as f64).round() as u64;
        let prop = if lo >= span {
            span
        } else {
            self.rng.random_range(lo..=span)
        };
        let arrival = *cursor + prop;
        if arrival - sent_at > self.params.delta_ns
            && self.prompt_throughout(from, to, sent_at, arrival)
        {
            self.delta_violations += 1;
        }
        self.push(
            arrival,
            to,
            Kind::Actor {
                ev: Event::Deliver { from, msg },
                from_net: true,
                checked: false,
                size,
            },
        );
    }

    /// Route one protocol send: immediate self-delivery, sender-side
    /// buffering while either endpoint is sluggish, or normal transmission.
    fn dispatch(&mut self, from: NodeId, to: NodeId, msg: Msg, cursor: &mut u64, sent_at: u64) {
        if to == from {
            self.push(
                sent_at,
                to,
                Kind::Actor {
                    ev: Event::Deliver { from, msg },
                    from_net: false,
                    checked: true,
                    size: 0,
                },
            );
            return;
        }
        if self.sluggish(from, *cursor) || self.sluggish(to, *cursor) {
            let release = self.next_both_prompt(from, to, *cursor);
            self.bufferings += 1;
            self.push(release, from, Kind::Release { to, msg });
            return;
        }
        self.transmit(from, to, msg, cursor, sent_at);
    }

    fn absorb_output(&mut self, node: NodeId, acted_at: u64, cursor: &mut u64, out: &mut Output) {
        let sends = std::mem::take(&mut out.sends);
        *cursor += out.busy;
        for (dest, msg) in sends {
            match dest {
                Dest::To(to) => self.dispatch(node, to, msg, cursor, acted_at),
                Dest::Broadcast => {
                    for to in 0..self.params.n as NodeId {
                        if to != node {
                            self.dispatch(node, to, msg.clone(), cursor, acted_at);
                        }
                    }
                }
            }
        }
        for (delay, tag) in out.timers.drain(..) {
            self.push_event(acted_at + delay, node, Event::Timer { tag });
        }
    }

    fn record_trace(&mut self, time: u64, target: NodeId, ev: &Event) {
        let mut h = Sha256::new();
        h.update(self.trace);
        h.update(time.to_be_bytes());
        h.update(target.to_be_bytes());
        let mut body = Vec::new();
        match ev {
            Event::Init => wire::put_u8(&mut body, 0),
            Event::Deliver { from, msg } => {
                wire::put_u8(&mut body, 1);
                wire::put_u32(&mut body, *from);
                match msg {
                    Msg::Hamster(m) => {
                        wire::put_u8(&mut body, 0x11);
                        m.write(&mut body);
                    }
                    Msg::Shs(m) => {
                        wire::put_u8(&mut body, 0x12);
                        m.write(&mut body);
                    }
                }
            }
            Event::Timer { tag } => {
                wire::put_u8(&mut body, 2);
                tag.hash_bytes(&mut body);
            }
            Event::Batch { height, requests } => {
                wire::put_u8(&mut body, 3);
                wire::put_u64(&mut body, *height);
                wire::put_u32(&mut body, requests.len() as u32);
                for d in requests {
                    wire::put_digest(&mut body, d);
                }
            }
        }
        h.update(&body);
        self.trace = h.finalize().into();
    }

    /// Process the next event. Returns None when the queue is empty.
    pub fn step(&mut self, actors: &mut [Box<dyn Actor>]) -> Option<StepReport> {
        loop {
            let Reverse(entry) = self.heap.pop()?;
            let Entry {
                time, target, kind, ..
            } = entry;
            debug_assert!(time >= self.now, "time went backwards");
            self.now = time;
            match kind {
                Kind::Release { to, msg } => {
                    // Both endpoints are prompt at this instant by
                    // construction; serialize on the sender's pipe.
                    let mut cursor = self.pipe_free[target as usize].max(time);
                    self.transmit(target, to, msg, &mut cursor, time);
                    self.pipe_free[target as usize] = cursor;
                    continue;
                }
                Kind::Actor {
                    ev,
                    from_net,
                    checked,
                    size,
                } => {
                    if from_net && !checked {
                        if let Event::Deliver { from, msg } = &ev {
                            if self.sluggish(target, time) {
                                // Bounce back to the sender's buffer.
                                let release = self.next_both_prompt(*from, target, time);
                                self.bufferings += 1;
                                self.push(
                                    release,
                                    *from,
                                    Kind::Release {
                                        to: target,
                                        msg: msg.clone(),
                                    },
                                );
                                continue;
                            }
                        }
                    }
                    let free = self.pipe_free[target as usize];
                    if free > time {
                        // Busy node: requeue at the instant its pipe clears.
                        self.push(
                            free,
                            target,
                            Kind::Actor {
                                ev,
                                from_net,
                                checked: true,
                                size,
                            },
                        );
                        continue;
                    }
                    let mut cursor = time;
                    if from_net {
                        cursor += self.params.tx_ns(size);
                        self.bytes_rx[target as usize] += size;
                        self.msgs_delivered += 1;
                    }
                    self.record_trace(time, target, &ev);
                    self.events_processed += 1;
                    let mut out = actors[target as usize].on_event(time, ev);
                    self.absorb_output(target, time, &mut cursor, &mut out);
                    self.pipe_free[target as usize] = cursor;
                    return Some(StepReport {
                        time,
                        node: target,
                        notes: std::mem::take(&mut out.notes),
                    });
                }
            }
        }
    }
}

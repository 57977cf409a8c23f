//! Deterministic discrete-event core: simulated clock, ordered event queue,
//! agent registry, and message delivery.
//!
//! Events fire in `(fire_at, seq)` order; `seq` is the insertion sequence
//! number, so ties on time resolve FIFO and a run is a pure function of its
//! inputs.

use crate::model::{DeviceId, NodeId};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;
use std::io::Write;
use thiserror::Error;

/// Simulated time in seconds. Total-ordered; never NaN by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimTime(pub f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub fn seconds(self) -> f64 {
        self.0
    }

    pub fn after(self, delay: f64) -> SimTime {
        SimTime(self.0 + delay)
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Address of an agent: one per IoT device, one per node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AgentId {
    Device(DeviceId),
    Node(NodeId),
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentId::Device(d) => write!(f, "da:{}", d),
            AgentId::Node(n) => write!(f, "na:{}", n),
        }
    }
}

/// What the engine needs to know about an event payload: who it is
/// addressed to (for dead-lettering) and how to describe it in the trace.
pub trait Payload {
    /// Addressed agent, or `None` for engine-level events that always fire.
    fn recipient(&self) -> Option<AgentId>;
    fn kind(&self) -> &'static str;
    fn detail(&self) -> String;
}

/// A scheduled event. `seq` is assigned by the engine at insertion.
#[derive(Debug, Clone)]
pub struct SimEvent<P> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub payload: P,
}

struct Queued<P>(SimEvent<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.fire_at == other.0.fire_at && self.0.seq == other.0.seq
    }
}
impl<P> Eq for Queued<P> {}
impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap reversed into a min-heap on (fire_at, seq).
        match other.0.fire_at.cmp(&self.0.fire_at) {
            Ordering::Equal => other.0.seq.cmp(&self.0.seq),
            ord => ord,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("event dated {event} is in the past (clock at {now})")]
    PastEvent { event: SimTime, now: SimTime },
    #[error("agent {agent} faulted on {event}: {message}")]
    HandlerFault {
        agent: String,
        event: String,
        message: String,
    },
}

/// Fault raised by an agent handler; the engine aborts the run with a
/// diagnostic naming the agent and event.
#[derive(Debug, Error)]
#[error("{message}")]
pub struct HandlerFault {
    pub message: String,
}

impl HandlerFault {
    pub fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

/// The world driven by the engine: owns all agent state and interprets
/// payloads when their events fire.
pub trait AgentWorld {
    type Msg: Payload;

    fn handle(
        &mut self,
        engine: &mut Engine<Self::Msg>,
        event: SimEvent<Self::Msg>,
    ) -> Result<(), HandlerFault>;
}

/// Deterministic event loop. One instance per simulation run.
pub struct Engine<P> {
    clock: SimTime,
    seq: u64,
    queue: BinaryHeap<Queued<P>>,
    alive: BTreeSet<AgentId>,
    control_latency: f64,
    messages_sent: u64,
    messages_delivered: u64,
    dead_letters: u64,
    trace: Option<Box<dyn Write>>,
}

impl<P: Payload> Engine<P> {
    pub fn new(control_latency: f64) -> Self {
        Self {
            clock: SimTime::ZERO,
            seq: 0,
            queue: BinaryHeap::new(),
            alive: BTreeSet::new(),
            control_latency,
            messages_sent: 0,
            messages_delivered: 0,
            dead_letters: 0,
            trace: None,
        }
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn control_latency(&self) -> f64 {
        self.control_latency
    }

    /// Installs a trace sink; one tab-separated line per dispatched event.
    pub fn set_trace(&mut self, sink: Box<dyn Write>) {
        self.trace = Some(sink);
    }

    pub fn register(&mut self, agent: AgentId) {
        self.alive.insert(agent);
    }

    /// Marks an agent as gone; later deliveries to it dead-letter.
    pub fn kill(&mut self, agent: AgentId) {
        self.alive.remove(&agent);
    }

    pub fn is_alive(&self, agent: AgentId) -> bool {
        self.alive.contains(&agent)
    }

    pub fn messages_sent(&self) -> u64 {
        self.messages_sent
    }

    pub fn messages_delivered(&self) -> u64 {
        self.messages_delivered
    }

    pub fn dead_letters(&self) -> u64 {
        self.dead_letters
    }

    /// Enqueues an event; ties on `fire_at` fire in insertion order.
    pub fn post(&mut self, fire_at: SimTime, payload: P) -> Result<(), EngineError> {
        if fire_at < self.clock {
            return Err(EngineError::PastEvent {
                event: fire_at,
                now: self.clock,
            });
        }
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Queued(SimEvent {
            fire_at,
            seq,
            payload,
        }));
        Ok(())
    }

    /// Posts a message delivery at `now + control_latency`. Delivery is
    /// reliable and ordered per sender–receiver pair; a recipient that is
    /// gone when the event fires is counted as a dead letter instead.
    pub fn send(&mut self, payload: P) {
        debug_assert!(payload.recipient().is_some(), "send requires a recipient");
        self.messages_sent += 1;
        let at = self.clock.after(self.control_latency);
        self.post(at, payload).expect("delivery is never past-dated");
    }

    /// Pops and dispatches events in (fire_at, seq) order until the queue
    /// is empty or the horizon is reached. Returns the final clock: the
    /// last dispatched fire_at, or the horizon when one is given.
    pub fn run<W>(&mut self, world: &mut W, until: Option<SimTime>) -> Result<SimTime, EngineError>
    where
        W: AgentWorld<Msg = P>,
    {
        loop {
            let due = match self.queue.peek() {
                Some(q) => q.0.fire_at,
                None => break,
            };
            if let Some(horizon) = until {
                if due > horizon {
                    break;
                }
            }
            let event = self.queue.pop().expect("peeked").0;
            debug_assert!(event.fire_at >= self.clock, "clock must not run backwards");
            self.clock = event.fire_at;

            if let Some(to) = event.payload.recipient() {
                if !self.alive.contains(&to) {
                    match event.payload.kind() {
                        "message" => {
                            self.dead_letters += 1;
                            self.trace_line(event.fire_at, to, "dead-letter", event.payload.detail());
                        }
                        kind => {
                            self.trace_line(event.fire_at, to, "dropped", format!("{kind} to dead agent"));
                        }
                    }
                    continue;
                }
                if event.payload.kind() == "message" {
                    self.messages_delivered += 1;
                }
                self.trace_line(
                    event.fire_at,
                    to,
                    event.payload.kind(),
                    event.payload.detail(),
                );
            } else {
                self.trace_engine_line(event.fire_at, event.payload.kind(), event.payload.detail());
            }

            let agent = event
                .payload
                .recipient()
                .map(|a| a.to_string())
                .unwrap_or_else(|| "engine".to_string());
            let event_desc = format!("{} {}", event.payload.kind(), event.payload.detail());
            if let Err(fault) = world.handle(self, event) {
                return Err(EngineError::HandlerFault {
                    agent,
                    event: event_desc,
                    message: fault.message,
                });
            }
        }
        if let Some(horizon) = until {
            if horizon > self.clock {
                self.clock = horizon;
            }
        }
        Ok(self.clock)
    }

    fn trace_line(&mut self, at: SimTime, agent: AgentId, kind: &str, detail: String) {
        if let Some(sink) = self.trace.as_mut() {
            let _ = writeln!(sink, "{at}\t{agent}\t{kind}\t{detail}");
        }
    }

    fn trace_engine_line(&mut self, at: SimTime, kind: &str, detail: String) {
        if let Some(sink) = self.trace.as_mut() {
            let _ = writeln!(sink, "{at}\tengine\t{kind}\t{detail}");
        }
    }
}

//! The simulation world: device and node agents wired to the event
//! engine, the negotiation protocol, task execution, transfer accounting,
//! and the per-run driver. Load-balance and uncertain-event handlers
//! extend [`World`] from their own modules.

use crate::agents::{
    self, commit, handle_request, select_proposal, BatchProfile, CommitOutcome, Contract,
    DeviceAgentState, NodeAgentState, Proposal, RoundMode, Slot,
};
use crate::baselines::{self, AssignmentPlan, PlanDevice, PlanNode};
use crate::engine::{AgentId, AgentWorld, Engine, EngineError, HandlerFault, Payload, SimEvent, SimTime};
use crate::metrics::{self, RunMetrics};
use crate::model::{shortest_hops, DeviceId, Node, NodeId, NodeKind, Topology};
use crate::resched::{EventId, ReschedOutcome, ReschedulingRecord, UncertainEvent};
use crate::scenario::Scenario;
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::Instant;
use thiserror::Error;

/// Scheduling policy driving a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheduler {
    /// The negotiation protocol: BFS ranking, theta-bounded rounds,
    /// earliest-completion selection, plus load balancing and reactive
    /// rescheduling.
    Agent,
    RoundRobin,
    MinMin,
    Geo,
}

impl Scheduler {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheduler::Agent => "agent",
            Scheduler::RoundRobin => "rr",
            Scheduler::MinMin => "minmin",
            Scheduler::Geo => "geo",
        }
    }
}

impl std::str::FromStr for Scheduler {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "agent" => Ok(Scheduler::Agent),
            "rr" => Ok(Scheduler::RoundRobin),
            "minmin" => Ok(Scheduler::MinMin),
            "geo" => Ok(Scheduler::Geo),
            other => Err(format!("unknown scheduler '{other}' (agent|rr|minmin|geo)")),
        }
    }
}

/// Engine-level knobs of one run.
#[derive(Debug, Clone)]
pub struct SimParams {
    pub scheduler: Scheduler,
    /// Node agents contacted per negotiation round.
    pub theta: u32,
    /// Pairwise load-variance threshold for migration.
    pub delta: f64,
    /// Load-balance timer period in simulated seconds.
    pub balance_period: f64,
    /// Load balancing applies to the agent scheduler only.
    pub balancing: bool,
    /// Simulated latency of control messages.
    pub control_latency: f64,
    pub events_on: bool,
    /// Count cancelled tasks in the success-rate denominator.
    pub include_cancelled: bool,
    /// Capture per-device selection snapshots for oracle checks.
    pub record_decisions: bool,
    /// Optional per-node admission horizon.
    pub node_horizon: Option<f64>,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            scheduler: Scheduler::Agent,
            theta: 20,
            delta: 0.01,
            balance_period: 10.0,
            balancing: true,
            control_latency: 0.0,
            events_on: false,
            include_cancelled: false,
            record_decisions: false,
            node_horizon: None,
        }
    }
}

impl SimParams {
    /// Replies outstanding past this delay count as refusals; it also
    /// bounds how long an accepted-but-uncommitted proposal is waited on.
    pub fn round_timeout(&self) -> f64 {
        self.control_latency * 10.0 + 1.0
    }
}

/// Protocol messages exchanged between device and node agents.
#[derive(Debug, Clone)]
pub enum Msg {
    /// Device agent asks a node for a slot covering its whole batch.
    Request {
        device: DeviceId,
        round: u64,
        profile: BatchProfile,
        depth: u32,
    },
    Propose { round: u64, proposal: Proposal },
    Refuse { node: NodeId, round: u64 },
    /// Winner notification; the node tries to reserve the interval.
    Accept { device: DeviceId, proposal: Proposal },
    /// Loser notification; proposals are non-binding, nothing to undo.
    Reject { device: DeviceId },
    Committed { contract: Contract, quoted_et: f64 },
    Stale { node: NodeId },
    /// Device abandons its reserved slot (contract switch).
    Release { device: DeviceId },
}

impl Msg {
    fn name(&self) -> &'static str {
        match self {
            Msg::Request { .. } => "request",
            Msg::Propose { .. } => "propose",
            Msg::Refuse { .. } => "refuse",
            Msg::Accept { .. } => "accept",
            Msg::Reject { .. } => "reject",
            Msg::Committed { .. } => "committed",
            Msg::Stale { .. } => "stale",
            Msg::Release { .. } => "release",
        }
    }
}

/// Every event kind the engine can carry in this simulation.
#[derive(Debug, Clone)]
pub enum SimPayload {
    Message { from: AgentId, to: AgentId, msg: Msg },
    /// Device agent wakes up and starts negotiating its batch.
    DeviceStart { device: DeviceId },
    /// All replies of a round must be in by now; stragglers are refusals.
    RoundTimeout { device: DeviceId, round: u64 },
    /// The accepted node never answered; restart the pass.
    AcceptTimeout { device: DeviceId, round: u64 },
    /// Periodic load-balance wakeup of one fog node.
    BalanceTick { node: NodeId },
    /// Uncertain-event injection (index into the scenario's event list).
    Inject { index: usize },
    /// A reserved slot ran to completion (stale when versions mismatch).
    Complete { device: DeviceId, version: u64 },
}

impl Payload for SimPayload {
    fn recipient(&self) -> Option<AgentId> {
        match self {
            SimPayload::Message { to, .. } => Some(*to),
            SimPayload::DeviceStart { device }
            | SimPayload::RoundTimeout { device, .. }
            | SimPayload::AcceptTimeout { device, .. } => Some(AgentId::Device(*device)),
            SimPayload::BalanceTick { node } => Some(AgentId::Node(*node)),
            SimPayload::Inject { .. } | SimPayload::Complete { .. } => None,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            SimPayload::Message { .. } => "message",
            SimPayload::DeviceStart { .. }
            | SimPayload::RoundTimeout { .. }
            | SimPayload::AcceptTimeout { .. }
            | SimPayload::BalanceTick { .. } => "timer",
            SimPayload::Inject { .. } => "uncertainty",
            SimPayload::Complete { .. } => "exec-complete",
        }
    }

    fn detail(&self) -> String {
        match self {
            SimPayload::Message { from, msg, .. } => format!("{} from {from}", msg.name()),
            SimPayload::DeviceStart { device } => format!("start {device}"),
            SimPayload::RoundTimeout { device, round } => format!("round-timeout {device} r{round}"),
            SimPayload::AcceptTimeout { device, round } => format!("accept-timeout {device} r{round}"),
            SimPayload::BalanceTick { node } => format!("balance {node}"),
            SimPayload::Inject { index } => format!("event #{index}"),
            SimPayload::Complete { device, version } => format!("complete {device} v{version}"),
        }
    }
}

/// Completion bookkeeping of one device batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletionRecord {
    pub at: SimTime,
    pub successes: u64,
    pub attempted: u64,
}

/// Per-device simulation state on top of the agent protocol state.
#[derive(Debug, Clone)]
pub struct DeviceRuntime {
    pub da: DeviceAgentState,
    /// Bumped on every contract rewrite; stale completion events carry an
    /// older version and are ignored.
    pub version: u64,
    /// Slot length quoted when the current contract was (re)committed.
    pub quoted_et: f64,
    pub completed: Option<CompletionRecord>,
    pub failed: bool,
    /// Whole batch cancelled; nothing left to run.
    pub dissolved: bool,
    /// Uncertain events whose resolution is waiting on this device.
    pub open_events: Vec<EventId>,
}

impl DeviceRuntime {
    fn new(da: DeviceAgentState) -> Self {
        Self {
            da,
            version: 0,
            quoted_et: 0.0,
            completed: None,
            failed: false,
            dissolved: false,
            open_events: Vec::new(),
        }
    }

    pub fn settled(&self) -> bool {
        self.completed.is_some() || self.failed || self.dissolved
    }
}

#[derive(Debug, Clone)]
pub struct NodeRuntime {
    pub na: NodeAgentState,
    pub alive: bool,
}

/// Node capabilities and schedule as some device saw them when selecting a
/// winner; raw material for exhaustive optimality checks.
#[derive(Debug, Clone)]
pub struct CandidateState {
    pub node: Node,
    pub alive: bool,
    pub schedule: Vec<Slot>,
    pub depth: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct DecisionSnapshot {
    pub device: DeviceId,
    pub now: SimTime,
    pub chosen: NodeId,
    pub batch: BatchProfile,
    pub candidates: Vec<CandidateState>,
}

#[derive(Debug, Default)]
struct EventAgg {
    waiting: BTreeSet<DeviceId>,
    any_new_contract: bool,
    any_failed: bool,
    base: ReschedOutcome2,
}

/// Outcome before device resolutions are folded in.
#[derive(Debug, Default, Clone, Copy, PartialEq)]
enum ReschedOutcome2 {
    #[default]
    Kept,
    Cancelled,
}

/// The whole mutable state of one run.
pub struct World {
    pub params: SimParams,
    pub topology: Topology,
    pub devices: BTreeMap<DeviceId, DeviceRuntime>,
    pub nodes: BTreeMap<NodeId, NodeRuntime>,
    pub events: Vec<UncertainEvent>,
    pub records: Vec<ReschedulingRecord>,
    record_of: BTreeMap<EventId, usize>,
    aggregates: BTreeMap<EventId, EventAgg>,
    remaining_injects: usize,
    /// (payload GB, hops) per task transmission or migration.
    pub transfers: Vec<(f64, u32)>,
    pub successful_tasks: u64,
    pub submitted_tasks: u64,
    pub cancelled_tasks: u64,
    pub warnings: u64,
    pub decision_ns: u128,
    pub decisions: BTreeMap<DeviceId, DecisionSnapshot>,
    rr_ordinal: u64,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Result of one run: metrics plus the final world for inspection.
pub struct RunReport {
    pub metrics: RunMetrics,
    pub world: World,
    pub final_time: SimTime,
    pub dead_letters: u64,
    pub messages_sent: u64,
    pub messages_delivered: u64,
}

/// Builds the world, drives it to exhaustion, and computes the metrics.
pub fn run_experiment(
    scenario: &Scenario,
    params: &SimParams,
    trace: Option<Box<dyn Write>>,
) -> Result<RunReport, SimError> {
    if params.theta < 1 {
        return Err(SimError::InvalidParams("theta must be >= 1".into()));
    }
    if params.balance_period <= 0.0 {
        return Err(SimError::InvalidParams("balance period must be > 0".into()));
    }
    if params.delta < 0.0 {
        return Err(SimError::InvalidParams("delta must be >= 0".into()));
    }
    let mut engine: Engine<SimPayload> = Engine::new(params.control_latency);
    if let Some(sink) = trace {
        engine.set_trace(sink);
    }
    let mut world = World::new(scenario, params.clone());
    world.bootstrap(&mut engine)?;
    let final_time = engine.run(&mut world, None)?;
    let metrics = world.finalize();
    Ok(RunReport {
        metrics,
        world,
        final_time,
        dead_letters: engine.dead_letters(),
        messages_sent: engine.messages_sent(),
        messages_delivered: engine.messages_delivered(),
    })
}

impl World {
    pub fn new(scenario: &Scenario, params: SimParams) -> Self {
        let nodes: BTreeMap<NodeId, NodeRuntime> = scenario
            .nodes
            .iter()
            .map(|n| {
                let mut na = NodeAgentState::new(n.clone());
                na.horizon = params.node_horizon.map(SimTime);
                (n.id, NodeRuntime { na, alive: true })
            })
            .collect();
        let devices: BTreeMap<DeviceId, DeviceRuntime> = scenario
            .devices
            .iter()
            .map(|d| (d.id, DeviceRuntime::new(DeviceAgentState::new(d.clone()))))
            .collect();
        let submitted_tasks = scenario.total_tasks() as u64;
        Self {
            params,
            topology: scenario.topology.clone(),
            devices,
            nodes,
            events: scenario.events.clone(),
            records: Vec::new(),
            record_of: BTreeMap::new(),
            aggregates: BTreeMap::new(),
            remaining_injects: 0,
            transfers: Vec::new(),
            successful_tasks: 0,
            submitted_tasks,
            cancelled_tasks: 0,
            warnings: 0,
            decision_ns: 0,
            decisions: BTreeMap::new(),
            rr_ordinal: 0,
        }
    }

    /// Registers agents and seeds the initial events.
    pub fn bootstrap(&mut self, engine: &mut Engine<SimPayload>) -> Result<(), EngineError> {
        for &id in self.nodes.keys() {
            engine.register(AgentId::Node(id));
        }
        let device_ids: Vec<DeviceId> = self.devices.keys().copied().collect();
        for &id in &device_ids {
            engine.register(AgentId::Device(id));
        }

        match self.params.scheduler {
            Scheduler::Agent | Scheduler::Geo => {
                for &id in &device_ids {
                    engine.post(SimTime::ZERO, SimPayload::DeviceStart { device: id })?;
                }
            }
            Scheduler::RoundRobin | Scheduler::MinMin => {
                let plan = self.plan_with_policy(&device_ids, SimTime::ZERO);
                self.apply_plan(engine, plan, SimTime::ZERO);
            }
        }

        if self.params.balancing && self.params.scheduler == Scheduler::Agent {
            let period = self.params.balance_period;
            let fog_ids: Vec<NodeId> = self
                .nodes
                .iter()
                .filter(|(_, rt)| rt.na.node.kind == NodeKind::Fog)
                .map(|(&id, _)| id)
                .collect();
            for id in fog_ids {
                engine.post(SimTime(period), SimPayload::BalanceTick { node: id })?;
            }
        }

        if self.params.events_on {
            self.remaining_injects = self.events.len();
            for (index, ev) in self.events.iter().enumerate() {
                engine.post(ev.fire_at, SimPayload::Inject { index })?;
            }
        }
        Ok(())
    }

    // -- shared views -----------------------------------------------------

    /// Current node capabilities, for BFS ranking and planning.
    pub fn node_caps(&self) -> BTreeMap<NodeId, Node> {
        self.nodes.iter().map(|(&id, rt)| (id, rt.na.node.clone())).collect()
    }

    pub fn outstanding_devices(&self) -> usize {
        self.devices.values().filter(|rt| !rt.settled()).count()
    }

    pub(crate) fn work_remains(&self) -> bool {
        self.outstanding_devices() > 0 || self.remaining_injects > 0
    }

    pub(crate) fn note_warning(&mut self) {
        self.warnings += 1;
    }

    // -- negotiation ------------------------------------------------------

    /// Starts (or restarts) a contract-seeking pass over a fresh ranking.
    pub(crate) fn begin_negotiation(&mut self, engine: &mut Engine<SimPayload>, device: DeviceId) {
        let started = Instant::now();
        let caps = self.node_caps();
        let rt = self.devices.get_mut(&device).expect("known device");
        if rt.completed.is_some() || rt.dissolved {
            return;
        }
        rt.failed = false;
        let ranking = match self.params.scheduler {
            Scheduler::Geo => baselines::geo_ranking(&rt.da.device, &self.topology, &caps),
            _ => agents::rank_nodes(&rt.da.device, &self.topology, &caps).unwrap_or_default(),
        };
        rt.da.node_ranking = ranking;
        rt.da.cursor = 0;
        rt.da.mode = RoundMode::Seeking;
        rt.da.proposals.clear();
        rt.da.pending.clear();
        rt.da.awaiting = None;
        self.decision_ns += started.elapsed().as_nanos();
        self.advance_round(engine, device);
    }

    /// Contacts the next theta ranked nodes, or fails the device when the
    /// ranking is exhausted.
    fn advance_round(&mut self, engine: &mut Engine<SimPayload>, device: DeviceId) {
        let theta = self.params.theta;
        let timeout = self.params.round_timeout();
        let rt = self.devices.get_mut(&device).expect("known device");
        let batch = rt.da.next_round_nodes(theta);
        if batch.is_empty() {
            match rt.da.mode {
                RoundMode::Probe => {
                    // Nothing left to probe: keep the current contract.
                    rt.da.mode = RoundMode::Idle;
                    self.settle_open_events(engine, device, DeviceResolution::Kept);
                }
                _ => self.fail_device(engine, device),
            }
            return;
        }
        rt.da.round += 1;
        let round = rt.da.round;
        rt.da.proposals.clear();
        rt.da.pending = batch.iter().map(|r| r.node).collect();
        let profile = rt.da.profile();
        for ranked in batch {
            engine.send(SimPayload::Message {
                from: AgentId::Device(device),
                to: AgentId::Node(ranked.node),
                msg: Msg::Request {
                    device,
                    round,
                    profile,
                    depth: ranked.depth,
                },
            });
        }
        engine
            .post(
                engine.now().after(timeout),
                SimPayload::RoundTimeout { device, round },
            )
            .expect("timeout is in the future");
    }

    /// All replies (or the timeout) are in: pick a winner or move on.
    fn decide_round(&mut self, engine: &mut Engine<SimPayload>, device: DeviceId) {
        let started = Instant::now();
        let scheduler = self.params.scheduler;
        let rt = self.devices.get_mut(&device).expect("known device");
        debug_assert!(rt.da.pending.is_empty());
        if rt.da.mode == RoundMode::Idle || rt.settled() {
            rt.da.mode = RoundMode::Idle;
            rt.da.proposals.clear();
            self.decision_ns += started.elapsed().as_nanos();
            self.settle_open_events(engine, device, DeviceResolution::Kept);
            return;
        }

        let winner = match scheduler {
            Scheduler::Geo => baselines::geo_select(&rt.da),
            _ => select_proposal(&rt.da.proposals).copied(),
        };

        let Some(winner) = winner else {
            self.decision_ns += started.elapsed().as_nanos();
            match self.devices[&device].da.mode {
                RoundMode::Probe => {
                    let rt = self.devices.get_mut(&device).expect("known device");
                    rt.da.mode = RoundMode::Idle;
                    self.settle_open_events(engine, device, DeviceResolution::Kept);
                }
                _ => self.advance_round(engine, device),
            }
            return;
        };

        if rt.da.mode == RoundMode::Probe {
            let current_ct = rt.da.contract.map(|c| c.slot.completion);
            let better = current_ct.is_some_and(|ct| winner.completion < ct);
            if !better {
                rt.da.mode = RoundMode::Idle;
                rt.da.proposals.clear();
                self.decision_ns += started.elapsed().as_nanos();
                self.settle_open_events(engine, device, DeviceResolution::Kept);
                return;
            }
        }

        if self.params.record_decisions && rt.da.mode == RoundMode::Seeking {
            let snapshot = DecisionSnapshot {
                device,
                now: engine.now(),
                chosen: winner.node,
                batch: rt.da.profile(),
                candidates: self
                    .nodes
                    .iter()
                    .map(|(id, nrt)| CandidateState {
                        node: nrt.na.node.clone(),
                        alive: nrt.alive,
                        schedule: nrt.na.schedule.clone(),
                        depth: rt.da.node_ranking.iter().find(|r| r.node == *id).map(|r| r.depth),
                    })
                    .collect(),
            };
            self.decisions.insert(device, snapshot);
        }

        let rt = self.devices.get_mut(&device).expect("known device");
        rt.da.awaiting = Some(winner);
        let round = rt.da.round;
        let losers: Vec<NodeId> = rt
            .da
            .proposals
            .iter()
            .map(|p| p.node)
            .filter(|&n| n != winner.node)
            .collect();
        rt.da.proposals.clear();
        self.decision_ns += started.elapsed().as_nanos();

        engine.send(SimPayload::Message {
            from: AgentId::Device(device),
            to: AgentId::Node(winner.node),
            msg: Msg::Accept {
                device,
                proposal: winner,
            },
        });
        for loser in losers {
            engine.send(SimPayload::Message {
                from: AgentId::Device(device),
                to: AgentId::Node(loser),
                msg: Msg::Reject { device },
            });
        }
        engine
            .post(
                engine.now().after(self.params.round_timeout()),
                SimPayload::AcceptTimeout { device, round },
            )
            .expect("timeout is in the future");
    }

    /// The winner reserved the slot: install the contract, schedule the
    /// completion, account the data transfer.
    fn on_committed(
        &mut self,
        engine: &mut Engine<SimPayload>,
        device: DeviceId,
        contract: Contract,
        quoted_et: f64,
    ) {
        let rt = self.devices.get_mut(&device).expect("known device");
        rt.da.awaiting = None;
        if rt.settled() {
            engine.send(SimPayload::Message {
                from: AgentId::Device(device),
                to: AgentId::Node(contract.node),
                msg: Msg::Release { device },
            });
            rt.da.mode = RoundMode::Idle;
            self.settle_open_events(engine, device, DeviceResolution::Kept);
            return;
        }
        let prev = rt.da.contract;
        let was_probe = rt.da.mode == RoundMode::Probe;
        rt.da.contract = Some(contract);
        rt.da.mode = RoundMode::Idle;
        rt.quoted_et = quoted_et;
        rt.version += 1;
        let version = rt.version;
        let fire = contract.slot.completion.max(engine.now());
        engine
            .post(fire, SimPayload::Complete { device, version })
            .expect("completion is in the future");

        if was_probe {
            if let Some(old) = prev {
                engine.send(SimPayload::Message {
                    from: AgentId::Device(device),
                    to: AgentId::Node(old.node),
                    msg: Msg::Release { device },
                });
            }
        }
        self.log_device_transfer(device, contract.node);
        self.settle_open_events(engine, device, DeviceResolution::NewContract);
    }

    /// Stale commit: another reservation landed first. Treat it as a
    /// refusal and renegotiate over fresh schedules.
    fn on_stale(&mut self, engine: &mut Engine<SimPayload>, device: DeviceId) {
        let rt = self.devices.get_mut(&device).expect("known device");
        rt.da.awaiting = None;
        match rt.da.mode {
            RoundMode::Probe => {
                rt.da.mode = RoundMode::Idle;
                self.settle_open_events(engine, device, DeviceResolution::Kept);
            }
            _ => self.begin_negotiation(engine, device),
        }
    }

    /// Ranking exhausted without a contract: the whole batch fails.
    pub(crate) fn fail_device(&mut self, engine: &mut Engine<SimPayload>, device: DeviceId) {
        let rt = self.devices.get_mut(&device).expect("known device");
        rt.failed = true;
        rt.da.mode = RoundMode::Idle;
        rt.da.pending.clear();
        rt.da.proposals.clear();
        rt.da.awaiting = None;
        self.settle_open_events(engine, device, DeviceResolution::Failed);
    }

    /// Payload data moves from the device through its gateway to the
    /// contracted node: one access hop plus the topology path.
    fn log_device_transfer(&mut self, device: DeviceId, node: NodeId) {
        let rt = &self.devices[&device];
        let gateway = rt.da.device.gateway;
        let gb = rt.da.profile().total_data;
        match shortest_hops(&self.topology, gateway, node) {
            Ok(Some(hops)) => self.transfers.push((gb, hops + 1)),
            _ => {
                // No path at transfer time (the topology changed under a
                // committed contract); account the access hop only.
                self.warnings += 1;
                self.transfers.push((gb, 1));
            }
        }
    }

    pub(crate) fn log_migration_transfer(&mut self, gb: f64, from: NodeId, to: NodeId) {
        if let Ok(Some(hops)) = shortest_hops(&self.topology, from, to) {
            self.transfers.push((gb, hops));
        }
    }

    // -- execution ---------------------------------------------------------

    fn on_complete(&mut self, engine: &mut Engine<SimPayload>, device: DeviceId, version: u64) {
        let rt = self.devices.get_mut(&device).expect("known device");
        if rt.version != version || rt.completed.is_some() || rt.dissolved {
            return;
        }
        let contract = rt
            .da
            .contract
            .expect("live version implies a live contract");
        let at = contract.slot.completion;
        let successes = rt
            .da
            .device
            .tasks
            .iter()
            .filter(|t| at.seconds() <= t.deadline)
            .count() as u64;
        let attempted = rt.da.device.tasks.len() as u64;
        rt.completed = Some(CompletionRecord {
            at,
            successes,
            attempted,
        });
        self.successful_tasks += successes;
        let _ = engine;
    }

    // -- rescheduling-record bookkeeping ------------------------------------

    /// Opens the record for an injected event. `base` pre-sets the outcome
    /// for event kinds that resolve without device renegotiation.
    pub(crate) fn open_record(&mut self, event: &UncertainEvent, now: SimTime, cancelled: bool) {
        let record = ReschedulingRecord::new(event.id, event.change.kind(), now);
        self.record_of.insert(event.id, self.records.len());
        self.records.push(record);
        self.aggregates.insert(
            event.id,
            EventAgg {
                base: if cancelled {
                    ReschedOutcome2::Cancelled
                } else {
                    ReschedOutcome2::Kept
                },
                ..Default::default()
            },
        );
    }

    /// Marks `device` as one the event is waiting on.
    pub(crate) fn event_waits_on(&mut self, event: EventId, device: DeviceId) {
        self.aggregates
            .get_mut(&event)
            .expect("record opened")
            .waiting
            .insert(device);
        self.devices
            .get_mut(&device)
            .expect("known device")
            .open_events
            .push(event);
    }

    /// Resolves the record when no device is (or remains) involved.
    pub(crate) fn try_resolve_record(&mut self, event: EventId, now: SimTime) {
        let agg = self.aggregates.get(&event).expect("record opened");
        if !agg.waiting.is_empty() {
            return;
        }
        let outcome = if agg.any_failed {
            ReschedOutcome::Failed
        } else if agg.any_new_contract {
            ReschedOutcome::NewContract
        } else {
            match agg.base {
                ReschedOutcome2::Cancelled => ReschedOutcome::Cancelled,
                ReschedOutcome2::Kept => ReschedOutcome::KeptNode,
            }
        };
        let idx = self.record_of[&event];
        let record = &mut self.records[idx];
        if record.resolved.is_none() {
            record.resolved = Some(now);
            record.outcome = Some(outcome);
        }
    }

    pub(crate) fn settle_open_events(
        &mut self,
        engine: &mut Engine<SimPayload>,
        device: DeviceId,
        resolution: DeviceResolution,
    ) {
        let open = std::mem::take(&mut self.devices.get_mut(&device).expect("known").open_events);
        for event in open {
            let agg = self.aggregates.get_mut(&event).expect("record opened");
            agg.waiting.remove(&device);
            match resolution {
                DeviceResolution::NewContract => agg.any_new_contract = true,
                DeviceResolution::Failed => agg.any_failed = true,
                DeviceResolution::Kept => {}
            }
            self.try_resolve_record(event, engine.now());
        }
    }

    // -- baseline planning ---------------------------------------------------

    /// Runs the configured central policy over the given devices against
    /// the current schedules.
    pub(crate) fn plan_with_policy(&mut self, devices: &[DeviceId], now: SimTime) -> AssignmentPlan {
        let started = Instant::now();
        let plan_devices: Vec<PlanDevice> = devices
            .iter()
            .map(|id| {
                let rt = &self.devices[id];
                PlanDevice {
                    id: *id,
                    gateway: rt.da.device.gateway,
                    profile: rt.da.profile(),
                }
            })
            .collect();
        let mut plan_nodes: BTreeMap<NodeId, PlanNode> = self
            .nodes
            .iter()
            .map(|(&id, rt)| {
                (
                    id,
                    PlanNode {
                        node: rt.na.node.clone(),
                        alive: rt.alive,
                        schedule: rt.na.schedule.clone(),
                        horizon: rt.na.horizon,
                    },
                )
            })
            .collect();
        let plan = match self.params.scheduler {
            Scheduler::RoundRobin => baselines::round_robin(
                &plan_devices,
                &mut plan_nodes,
                &self.topology,
                now,
                &mut self.rr_ordinal,
            ),
            Scheduler::MinMin => {
                baselines::min_min(&plan_devices, &mut plan_nodes, &self.topology, now)
            }
            other => unreachable!("{other:?} does not plan centrally"),
        };
        self.decision_ns += started.elapsed().as_nanos();
        plan
    }

    /// Commits a plan: reserve slots, install contracts, schedule
    /// completions, account transfers, fail the unplannable.
    pub(crate) fn apply_plan(
        &mut self,
        engine: &mut Engine<SimPayload>,
        plan: AssignmentPlan,
        now: SimTime,
    ) {
        for binding in plan.bindings {
            let node_rt = self.nodes.get_mut(&binding.node).expect("known node");
            let proposal = Proposal {
                node: binding.node,
                start: binding.start,
                completion: binding.completion,
                et: binding.et,
                depth: 0,
            };
            match commit(&mut node_rt.na, &proposal, binding.device) {
                CommitOutcome::Committed(contract) => {
                    let rt = self.devices.get_mut(&binding.device).expect("known device");
                    rt.failed = false;
                    rt.da.contract = Some(contract);
                    rt.quoted_et = binding.et;
                    rt.version += 1;
                    let version = rt.version;
                    engine
                        .post(
                            contract.slot.completion.max(now),
                            SimPayload::Complete {
                                device: binding.device,
                                version,
                            },
                        )
                        .expect("completion is in the future");
                    self.log_device_transfer(binding.device, binding.node);
                    self.settle_open_events(engine, binding.device, DeviceResolution::NewContract);
                }
                CommitOutcome::Stale => {
                    unreachable!("plans are packed against live schedules")
                }
            }
        }
        for device in plan.failed {
            self.fail_device(engine, device);
        }
    }

    // -- finalization --------------------------------------------------------

    pub fn finalize(&self) -> RunMetrics {
        let completions: Vec<f64> = self
            .devices
            .values()
            .filter_map(|rt| rt.completed.map(|c| c.at.seconds()))
            .collect();
        let makespan = metrics::makespan(&completions);

        let fog_load_variance = metrics::load_variance(&self.final_fog_loads());

        let network_usage_gb = metrics::network_usage(self.transfers.iter().copied());

        let tn = if self.params.include_cancelled {
            self.submitted_tasks
        } else {
            self.submitted_tasks - self.cancelled_tasks
        };
        let success_rate =
            metrics::success_rate(self.successful_tasks, tn).expect("SN never exceeds TN");

        let responses: Vec<f64> = self
            .records
            .iter()
            .filter_map(|r| r.response_time().ok())
            .collect();
        let mean_response_time = if responses.is_empty() {
            0.0
        } else {
            responses.iter().sum::<f64>() / responses.len() as f64
        };

        RunMetrics {
            makespan,
            fog_load_variance,
            network_usage_gb,
            success_rate,
            mean_response_time,
            decision_wallclock_us: (self.decision_ns / 1000) as u64,
        }
    }

    /// Full-run load of every fog node: total allocated time over the
    /// run's horizon (the latest completion anywhere), so the variance
    /// reflects how unevenly busy time is spread across the fog layer.
    pub fn final_fog_loads(&self) -> Vec<f64> {
        let horizon = self
            .nodes
            .values()
            .flat_map(|rt| rt.na.schedule.iter().map(|s| s.completion))
            .max()
            .unwrap_or(SimTime::ZERO)
            .seconds();
        self.nodes
            .values()
            .filter(|rt| rt.na.node.kind == NodeKind::Fog)
            .map(|rt| {
                if horizon > 0.0 {
                    crate::loadbalance::compute_load(&rt.na.schedule, SimTime::ZERO).allocated
                        / horizon
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Panics when any schedule or contract invariant is broken.
    pub fn check_invariants(&self) {
        let mut bound: BTreeMap<DeviceId, NodeId> = BTreeMap::new();
        for (id, rt) in &self.nodes {
            rt.na.check_invariants();
            for slot in &rt.na.schedule {
                if let Some(prev) = bound.insert(slot.device, *id) {
                    panic!("device {} holds slots on {} and {}", slot.device, prev, id);
                }
            }
        }
        for (id, rt) in &self.devices {
            if let Some(contract) = &rt.da.contract {
                let node = &self.nodes[&contract.node];
                let slot = node
                    .na
                    .slot_of(*id)
                    .unwrap_or_else(|| panic!("contract of {id} has no slot on {}", contract.node));
                let len = slot.completion.seconds() - slot.start.seconds();
                assert!(
                    (len - rt.quoted_et).abs() <= 1e-9 * rt.quoted_et.max(1.0),
                    "slot length {} of {id} differs from quoted ET {}",
                    len,
                    rt.quoted_et
                );
            }
            let deadlines_sorted = rt
                .da
                .device
                .tasks
                .windows(2)
                .all(|w| w[0].deadline <= w[1].deadline);
            assert!(deadlines_sorted, "task queue of {id} is not deadline-sorted");
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum DeviceResolution {
    Kept,
    NewContract,
    Failed,
}

impl AgentWorld for World {
    type Msg = SimPayload;

    fn handle(
        &mut self,
        engine: &mut Engine<SimPayload>,
        event: SimEvent<SimPayload>,
    ) -> Result<(), HandlerFault> {
        match event.payload {
            SimPayload::DeviceStart { device } => {
                self.begin_negotiation(engine, device);
            }
            SimPayload::Message { from, to, msg } => {
                self.on_message(engine, from, to, msg)?;
            }
            SimPayload::RoundTimeout { device, round } => {
                let rt = self.devices.get_mut(&device).expect("known device");
                if rt.da.round == round && rt.da.awaiting.is_none() && !rt.da.pending.is_empty() {
                    // Outstanding replies are dead-lettered nodes: refusals.
                    rt.da.pending.clear();
                    self.decide_round(engine, device);
                }
            }
            SimPayload::AcceptTimeout { device, round } => {
                let rt = self.devices.get_mut(&device).expect("known device");
                if rt.da.round == round && rt.da.awaiting.is_some() {
                    // The accepted node is gone; same path as a stale commit.
                    self.on_stale(engine, device);
                }
            }
            SimPayload::BalanceTick { node } => {
                self.on_balance_tick(engine, node)?;
            }
            SimPayload::Inject { index } => {
                self.remaining_injects -= 1;
                let event = self.events[index].clone();
                self.on_uncertain_event(engine, &event);
            }
            SimPayload::Complete { device, version } => {
                self.on_complete(engine, device, version);
            }
        }
        Ok(())
    }
}

impl World {
    fn on_message(
        &mut self,
        engine: &mut Engine<SimPayload>,
        _from: AgentId,
        to: AgentId,
        msg: Msg,
    ) -> Result<(), HandlerFault> {
        match (to, msg) {
            (
                AgentId::Node(node),
                Msg::Request {
                    device,
                    round,
                    profile,
                    depth,
                },
            ) => {
                let started = Instant::now();
                let na = &self.nodes.get(&node).expect("known node").na;
                let reply = handle_request(na, &profile, depth, engine.now());
                self.decision_ns += started.elapsed().as_nanos();
                let msg = match reply {
                    Some(proposal) => Msg::Propose { round, proposal },
                    None => Msg::Refuse { node, round },
                };
                engine.send(SimPayload::Message {
                    from: AgentId::Node(node),
                    to: AgentId::Device(device),
                    msg,
                });
            }
            (AgentId::Device(device), Msg::Propose { round, proposal }) => {
                let rt = self.devices.get_mut(&device).expect("known device");
                if rt.da.round != round || !rt.da.is_negotiating() {
                    return Ok(()); // late reply from a superseded round
                }
                rt.da.pending.remove(&proposal.node);
                rt.da.proposals.push(proposal);
                if rt.da.pending.is_empty() && rt.da.awaiting.is_none() {
                    self.decide_round(engine, device);
                }
            }
            (AgentId::Device(device), Msg::Refuse { node, round }) => {
                let rt = self.devices.get_mut(&device).expect("known device");
                if rt.da.round != round || !rt.da.is_negotiating() {
                    return Ok(());
                }
                rt.da.pending.remove(&node);
                if rt.da.pending.is_empty() && rt.da.awaiting.is_none() {
                    self.decide_round(engine, device);
                }
            }
            (AgentId::Node(node), Msg::Accept { device, proposal }) => {
                let started = Instant::now();
                let na = &mut self.nodes.get_mut(&node).expect("known node").na;
                let outcome = commit(na, &proposal, device);
                self.decision_ns += started.elapsed().as_nanos();
                let msg = match outcome {
                    CommitOutcome::Committed(contract) => Msg::Committed {
                        contract,
                        quoted_et: proposal.et,
                    },
                    CommitOutcome::Stale => Msg::Stale { node },
                };
                engine.send(SimPayload::Message {
                    from: AgentId::Node(node),
                    to: AgentId::Device(device),
                    msg,
                });
            }
            (AgentId::Node(_), Msg::Reject { .. }) => {
                // Proposals are non-binding; nothing was held.
            }
            (AgentId::Device(device), Msg::Committed { contract, quoted_et }) => {
                self.on_committed(engine, device, contract, quoted_et);
            }
            (AgentId::Device(device), Msg::Stale { .. }) => {
                self.on_stale(engine, device);
            }
            (AgentId::Node(node), Msg::Release { device }) => {
                let na = &mut self.nodes.get_mut(&node).expect("known node").na;
                na.remove_device_slot(device);
            }
            (to, msg) => {
                return Err(HandlerFault::new(format!(
                    "message {} misdelivered to {to}",
                    msg.name()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{GeoLocation, IoTDevice, NodeKind, Task, TaskId, Topology};
    use crate::scenario::{Scenario, ScenarioSpec};

    pub(crate) fn fog(id: u32, x: f64, y: f64, ram: f64) -> Node {
        Node {
            id: NodeId(id),
            kind: NodeKind::Fog,
            location: GeoLocation::new(x, y),
            ram,
            bandwidth: 8.0,
            cpu_rate: 1000.0,
        }
    }

    pub(crate) fn task(id: u64, ram: f64, data: f64, cpu: f64, deadline: f64) -> Task {
        Task {
            id: TaskId(id),
            ram_req: ram,
            data_size: data,
            cpu_length: cpu,
            deadline,
        }
    }

    pub(crate) fn device(id: u32, x: f64, y: f64, gateway: u32, tasks: Vec<Task>) -> IoTDevice {
        IoTDevice {
            id: DeviceId(id),
            location: GeoLocation::new(x, y),
            gateway: NodeId(gateway),
            tasks,
        }
    }

    pub(crate) fn scenario(
        nodes: Vec<Node>,
        devices: Vec<IoTDevice>,
        edges: &[(u32, u32)],
    ) -> Scenario {
        let order = nodes.len();
        let edges: Vec<_> = edges.iter().map(|&(a, b)| (NodeId(a), NodeId(b))).collect();
        Scenario {
            meta: ScenarioSpec::desk_default(),
            topology: Topology::from_edges(order, &edges),
            nodes,
            devices,
            events: vec![],
        }
    }

    pub(crate) fn agent_params(theta: u32) -> SimParams {
        SimParams {
            theta,
            balancing: false,
            ..SimParams::default()
        }
    }

    #[test]
    fn first_round_proposal_is_accepted() {
        // Gateway refuses on RAM; its neighbour proposes in the same round.
        let s = scenario(
            vec![fog(0, 0.0, 0.0, 1.0), fog(1, 1.0, 0.0, 8.0)],
            vec![device(0, 0.0, 0.0, 0, vec![task(0, 4.0, 0.1, 100.0, 1000.0)])],
            &[(0, 1)],
        );
        let report = run_experiment(&s, &agent_params(2), None).unwrap();
        let rt = &report.world.devices[&DeviceId(0)];
        let contract = rt.da.contract.expect("contracted");
        assert_eq!(contract.node, NodeId(1));
        assert_eq!(rt.da.round, 1, "accepted within the first round");
        assert!(rt.completed.is_some());
    }

    #[test]
    fn all_refusals_advance_to_the_next_theta_nodes() {
        // Line 0-1-2-3: ranking is depth order; the first two refuse on
        // RAM, round two reaches the feasible pair and the closer wins.
        let s = scenario(
            vec![
                fog(0, 0.0, 0.0, 1.0),
                fog(1, 10.0, 0.0, 1.0),
                fog(2, 20.0, 0.0, 8.0),
                fog(3, 30.0, 0.0, 8.0),
            ],
            vec![device(0, 0.0, 0.0, 0, vec![task(0, 4.0, 0.1, 100.0, 10_000.0)])],
            &[(0, 1), (1, 2), (2, 3)],
        );
        let report = run_experiment(&s, &agent_params(2), None).unwrap();
        let rt = &report.world.devices[&DeviceId(0)];
        let contract = rt.da.contract.expect("contracted");
        assert_eq!(contract.node, NodeId(2), "closer feasible node wins");
        assert_eq!(rt.da.round, 2, "agreement in the second round");
        assert_eq!(rt.da.cursor, 4, "cursor advanced by theta per round");
    }

    #[test]
    fn theta_covering_the_ranking_takes_one_round() {
        let s = scenario(
            vec![fog(0, 0.0, 0.0, 8.0), fog(1, 5.0, 0.0, 8.0), fog(2, 9.0, 0.0, 8.0)],
            vec![device(0, 0.0, 0.0, 0, vec![task(0, 1.0, 0.1, 100.0, 10_000.0)])],
            &[(0, 1), (1, 2), (0, 2)],
        );
        let report = run_experiment(&s, &agent_params(10), None).unwrap();
        let rt = &report.world.devices[&DeviceId(0)];
        assert!(rt.da.contract.is_some());
        assert_eq!(rt.da.round, 1);
        assert_eq!(rt.da.cursor, 3, "every reachable node contacted once");
    }

    #[test]
    fn stale_commit_renegotiates_into_the_next_gap() {
        // Two identical devices race for the only node: the loser's commit
        // is stale, it renegotiates, and lands right after the winner.
        let batch = |base: u64| vec![task(base, 1.0, 0.5, 1000.0, 10_000.0)];
        let s = scenario(
            vec![fog(0, 0.0, 0.0, 8.0)],
            vec![
                device(0, 0.0, 0.0, 0, batch(0)),
                device(1, 0.0, 0.0, 0, batch(1)),
            ],
            &[],
        );
        let report = run_experiment(&s, &agent_params(1), None).unwrap();
        let w = &report.world;
        let c0 = w.devices[&DeviceId(0)].da.contract.expect("d0 contracted");
        let c1 = w.devices[&DeviceId(1)].da.contract.expect("d1 contracted");
        assert_eq!(c0.node, NodeId(0));
        assert_eq!(c1.node, NodeId(0));
        let schedule = &w.nodes[&NodeId(0)].na.schedule;
        assert_eq!(schedule.len(), 2);
        assert!(schedule[0].completion <= schedule[1].start, "slots disjoint");
        // Both batches are identical, so the second lands exactly at the
        // first one's completion.
        assert_eq!(c1.slot.start, c0.slot.completion);
        w.check_invariants();
    }

    #[test]
    fn exhausted_ranking_fails_the_device_and_the_success_rate_shows_it() {
        let s = scenario(
            vec![fog(0, 0.0, 0.0, 1.0)],
            vec![device(0, 0.0, 0.0, 0, vec![task(0, 4.0, 0.1, 100.0, 1000.0)])],
            &[],
        );
        let report = run_experiment(&s, &agent_params(3), None).unwrap();
        let rt = &report.world.devices[&DeviceId(0)];
        assert!(rt.failed);
        assert!(rt.da.contract.is_none());
        assert_eq!(report.metrics.success_rate, 0.0);
        assert_eq!(report.metrics.makespan, 0.0, "failed-only run has no completions");
    }

    #[test]
    fn completion_checks_each_task_against_its_deadline() {
        // Co-located node, ET = 15000/1000 = 15 s.
        let loose = scenario(
            vec![fog(0, 0.0, 0.0, 8.0)],
            vec![device(
                0,
                0.0,
                0.0,
                0,
                vec![task(0, 1.0, 0.1, 7500.0, 20.0), task(1, 1.0, 0.1, 7500.0, 30.0)],
            )],
            &[],
        );
        let report = run_experiment(&loose, &agent_params(1), None).unwrap();
        assert_eq!(report.metrics.success_rate, 1.0);
        assert_eq!(report.metrics.makespan, 15.0);

        let tight = scenario(
            vec![fog(0, 0.0, 0.0, 8.0)],
            vec![device(
                0,
                0.0,
                0.0,
                0,
                vec![task(0, 1.0, 0.1, 7500.0, 10.0), task(1, 1.0, 0.1, 7500.0, 30.0)],
            )],
            &[],
        );
        let report = run_experiment(&tight, &agent_params(1), None).unwrap();
        assert_eq!(report.metrics.success_rate, 0.5);
    }

    #[test]
    fn network_usage_counts_access_hop_plus_topology_path() {
        // Device -> gateway (1 hop) -> contracted node 2 hops away.
        // Only node 2 is RAM-feasible; batch carries 2 GB.
        let s = scenario(
            vec![fog(0, 0.0, 0.0, 1.0), fog(1, 1.0, 0.0, 1.0), fog(2, 2.0, 0.0, 8.0)],
            vec![device(
                0,
                0.0,
                0.0,
                0,
                vec![task(0, 4.0, 2.0, 100.0, 100_000.0)],
            )],
            &[(0, 1), (1, 2)],
        );
        let report = run_experiment(&s, &agent_params(3), None).unwrap();
        assert_eq!(report.world.devices[&DeviceId(0)].da.contract.unwrap().node, NodeId(2));
        assert!((report.metrics.network_usage_gb - 2.0 * 3.0).abs() < 1e-9);
    }

    #[test]
    fn identical_runs_produce_identical_outcomes() {
        let spec = ScenarioSpec::desk_default().with_seed(5);
        let s = crate::scenario::generate(&spec).unwrap();
        let params = SimParams::default();
        let a = run_experiment(&s, &params, None).unwrap();
        let b = run_experiment(&s, &params, None).unwrap();
        let strip = |m: &RunMetrics| RunMetrics {
            decision_wallclock_us: 0,
            ..m.clone()
        };
        assert_eq!(strip(&a.metrics), strip(&b.metrics));
        for (id, rt) in &a.world.nodes {
            assert_eq!(rt.na.schedule, b.world.nodes[id].na.schedule);
        }
        a.world.check_invariants();
    }

    #[test]
    fn control_latency_shifts_the_protocol_in_simulated_time() {
        let s = scenario(
            vec![fog(0, 0.0, 0.0, 8.0)],
            vec![device(0, 0.0, 0.0, 0, vec![task(0, 1.0, 0.1, 1000.0, 1000.0)])],
            &[],
        );
        let mut params = agent_params(1);
        params.control_latency = 0.01;
        let report = run_experiment(&s, &params, None).unwrap();
        let slot = report.world.devices[&DeviceId(0)].da.contract.unwrap().slot;
        // Request at 0 arrives at 0.01; the quoted gap starts then.
        assert!((slot.start.seconds() - 0.01).abs() < 1e-12);
    }
}

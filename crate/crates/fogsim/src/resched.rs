//! Uncertain events and their resolution: typed perturbations injected
//! into a run, the handlers that rewrite contracts and schedules in
//! response, and the per-event rescheduling records behind the response
//! time and success rate metrics.

use crate::engine::SimTime;
use crate::model::{DeviceId, GeoLocation, NodeId, TaskId};
use serde::{Deserialize, Serialize};

/// Identifier of an injected uncertain event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EventId(pub u64);

/// Kind-specific payload of an uncertain event. Task and node deltas
/// carry the new absolute values, computed at generation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventChange {
    /// A task's requirements change before completion.
    TaskChange {
        device: DeviceId,
        task: TaskId,
        new_ram: f64,
        new_data: f64,
        new_cpu: f64,
        new_deadline: f64,
    },
    /// A mobile device moves; its gateway is reassigned to the nearest fog.
    LocationChange {
        device: DeviceId,
        new_location: GeoLocation,
    },
    /// One or more tasks are withdrawn before completion.
    Cancellation {
        device: DeviceId,
        tasks: Vec<TaskId>,
    },
    /// A node's capabilities change at run time.
    CapabilityChange {
        node: NodeId,
        new_ram: f64,
        new_bw: f64,
        new_cpu: f64,
    },
    /// A node drops off the network: its row and column of the adjacency
    /// matrix go to zero and its agent stops replying.
    Disconnection { node: NodeId },
}

impl EventChange {
    pub fn kind(&self) -> &'static str {
        match self {
            EventChange::TaskChange { .. } => "task-change",
            EventChange::LocationChange { .. } => "location-change",
            EventChange::Cancellation { .. } => "cancellation",
            EventChange::CapabilityChange { .. } => "capability-change",
            EventChange::Disconnection { .. } => "disconnection",
        }
    }
}

/// A typed, timestamped perturbation scheduled against a device or node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertainEvent {
    pub id: EventId,
    pub fire_at: SimTime,
    pub change: EventChange,
}

/// What happened to an injected event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReschedOutcome {
    /// Resolved on the already-contracted node (includes warned no-ops).
    KeptNode,
    /// At least one affected device moved to a new contract.
    NewContract,
    /// Tasks were withdrawn and the schedule revised.
    Cancelled,
    /// Some affected device exhausted its ranking without a contract.
    Failed,
}

impl ReschedOutcome {
    pub fn as_str(self) -> &'static str {
        match self {
            ReschedOutcome::KeptNode => "kept-node",
            ReschedOutcome::NewContract => "new-contract",
            ReschedOutcome::Cancelled => "cancelled",
            ReschedOutcome::Failed => "failed",
        }
    }
}

/// Per-event rescheduling bookkeeping; `resolved` is filled when every
/// affected device has settled (or failed).
#[derive(Debug, Clone, PartialEq)]
pub struct ReschedulingRecord {
    pub event: EventId,
    pub kind: &'static str,
    pub started: SimTime,
    pub resolved: Option<SimTime>,
    pub outcome: Option<ReschedOutcome>,
}

impl ReschedulingRecord {
    pub fn new(event: EventId, kind: &'static str, started: SimTime) -> Self {
        Self {
            event,
            kind,
            started,
            resolved: None,
            outcome: None,
        }
    }

    /// Time spent rescheduling, in simulated seconds.
    pub fn response_time(&self) -> Result<f64, UnresolvedRecord> {
        match self.resolved {
            Some(t) => Ok(t.seconds() - self.started.seconds()),
            None => Err(UnresolvedRecord(self.event)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("rescheduling record for event {0:?} is not resolved")]
pub struct UnresolvedRecord(pub EventId);

use crate::agents::{check_ram_profile, estimate_et_for, find_slot, Contract, RoundMode, Slot};
use crate::engine::{AgentId, Engine, SimTime as Now};
use crate::model::{distance, NodeKind};
use crate::sim::{Scheduler, SimPayload, World};

impl World {
    /// Entry point for an injected event: open its record, dispatch by
    /// kind, and resolve immediately when no renegotiation is involved.
    pub(crate) fn on_uncertain_event(
        &mut self,
        engine: &mut Engine<SimPayload>,
        event: &UncertainEvent,
    ) {
        let now = engine.now();
        let cancelled = matches!(event.change, EventChange::Cancellation { .. });
        self.open_record(event, now, cancelled);
        match event.change.clone() {
            EventChange::TaskChange {
                device,
                task,
                new_ram,
                new_data,
                new_cpu,
                new_deadline,
            } => self.on_task_change(engine, event.id, device, task, new_ram, new_data, new_cpu, new_deadline),
            EventChange::LocationChange {
                device,
                new_location,
            } => self.on_location_change(engine, event.id, device, new_location),
            EventChange::Cancellation { device, tasks } => {
                self.on_cancellation(engine, event.id, device, &tasks)
            }
            EventChange::CapabilityChange {
                node,
                new_ram,
                new_bw,
                new_cpu,
            } => self.on_capability_change(engine, event.id, node, new_ram, new_bw, new_cpu),
            EventChange::Disconnection { node } => self.on_disconnection(engine, event.id, node),
        }
        self.try_resolve_record(event.id, engine.now());
    }

    /// Re-homes a device after an event, per the configured scheduler:
    /// agents renegotiate, central baselines re-run their policy.
    fn rehome(&mut self, engine: &mut Engine<SimPayload>, devices: &[crate::model::DeviceId], now: Now) {
        match self.params.scheduler {
            Scheduler::Agent | Scheduler::Geo => {
                for &d in devices {
                    self.begin_negotiation(engine, d);
                }
            }
            Scheduler::RoundRobin | Scheduler::MinMin => {
                let plan = self.plan_with_policy(devices, now);
                self.apply_plan(engine, plan, now);
            }
        }
    }

    /// Type-1 requirement change: the contracted node re-evaluates with
    /// the old slot released; infeasibility sends the device back to a
    /// fresh negotiation.
    #[allow(clippy::too_many_arguments)]
    fn on_task_change(
        &mut self,
        engine: &mut Engine<SimPayload>,
        event: EventId,
        device: crate::model::DeviceId,
        task: crate::model::TaskId,
        new_ram: f64,
        new_data: f64,
        new_cpu: f64,
        new_deadline: f64,
    ) {
        let now = engine.now();
        let rt = self.devices.get_mut(&device).expect("known device");
        if rt.completed.is_some() || rt.dissolved {
            self.note_warning();
            return;
        }
        let Some(t) = rt.da.device.tasks.iter_mut().find(|t| t.id == task) else {
            self.note_warning();
            return;
        };
        t.ram_req = new_ram;
        t.data_size = new_data;
        t.cpu_length = new_cpu;
        t.deadline = new_deadline;
        rt.da.reprioritize();

        if let Some(contract) = rt.da.contract {
            let profile = rt.da.profile();
            let node_rt = self.nodes.get_mut(&contract.node).expect("known node");
            node_rt.na.remove_device_slot(device);
            let fits = node_rt.alive
                && check_ram_profile(&node_rt.na.node, &profile)
                && estimate_et_for(&profile, &node_rt.na.node).is_ok();
            if fits {
                let et = estimate_et_for(&profile, &node_rt.na.node).expect("checked");
                if let Some((start, completion)) =
                    find_slot(&node_rt.na.schedule, et, now, node_rt.na.horizon)
                {
                    let slot = Slot {
                        device,
                        start,
                        completion,
                    };
                    node_rt.na.insert_slot(slot);
                    let rt = self.devices.get_mut(&device).expect("known device");
                    rt.da.contract = Some(Contract {
                        device,
                        node: contract.node,
                        slot,
                    });
                    rt.quoted_et = et;
                    rt.version += 1;
                    let version = rt.version;
                    engine
                        .post(completion.max(now), SimPayload::Complete { device, version })
                        .expect("completion is in the future");
                    return; // kept-node, record resolves at the caller
                }
            }
            // The node refuses: the slot stays released and the device
            // renegotiates from a fresh ranking.
            let rt = self.devices.get_mut(&device).expect("known device");
            rt.da.contract = None;
            rt.version += 1;
            self.event_waits_on(event, device);
            self.rehome(engine, &[device], now);
        } else {
            // No live contract (still negotiating, queued, or failed):
            // fall through to a fresh negotiation with the new batch.
            self.event_waits_on(event, device);
            self.rehome(engine, &[device], now);
        }
    }

    /// Type-1 mobility: reassign the gateway, recompute the ranking, and
    /// probe the first theta nodes; switch only for a strictly earlier
    /// completion.
    fn on_location_change(
        &mut self,
        engine: &mut Engine<SimPayload>,
        event: EventId,
        device: crate::model::DeviceId,
        new_location: crate::model::GeoLocation,
    ) {
        let now = engine.now();
        let rt = self.devices.get_mut(&device).expect("known device");
        if rt.completed.is_some() || rt.dissolved {
            self.note_warning();
            return;
        }
        rt.da.device.location = new_location;
        let new_gateway = self
            .nodes
            .values()
            .filter(|n| n.alive && n.na.node.kind == NodeKind::Fog)
            .min_by(|a, b| {
                distance(new_location, a.na.node.location)
                    .total_cmp(&distance(new_location, b.na.node.location))
                    .then(a.na.node.id.cmp(&b.na.node.id))
            })
            .map(|n| n.na.node.id);
        if let Some(gw) = new_gateway {
            self.devices.get_mut(&device).expect("known device").da.device.gateway = gw;
        }

        let rt = self.devices.get_mut(&device).expect("known device");
        if rt.da.contract.is_some() && !rt.da.is_negotiating() {
            // Probe from the new position; keep the contract unless a
            // strictly earlier completion shows up.
            let caps = self.node_caps();
            let rt = self.devices.get_mut(&device).expect("known device");
            if self.params.scheduler == Scheduler::RoundRobin
                || self.params.scheduler == Scheduler::MinMin
            {
                // Central policies re-plan the moved device outright.
                let contract = rt.da.contract.take().expect("checked");
                rt.version += 1;
                self.nodes
                    .get_mut(&contract.node)
                    .expect("known node")
                    .na
                    .remove_device_slot(device);
                self.event_waits_on(event, device);
                self.rehome(engine, &[device], now);
                return;
            }
            let ranking = match self.params.scheduler {
                Scheduler::Geo => {
                    crate::baselines::geo_ranking(&rt.da.device, &self.topology, &caps)
                }
                _ => crate::agents::rank_nodes(&rt.da.device, &self.topology, &caps)
                    .unwrap_or_default(),
            };
            rt.da.node_ranking = ranking;
            rt.da.cursor = 0;
            rt.da.mode = RoundMode::Probe;
            rt.da.pending.clear();
            rt.da.proposals.clear();
            rt.da.awaiting = None;
            self.event_waits_on(event, device);
            self.advance_probe(engine, device);
        } else {
            // Uncontracted (queued, failed, or mid-negotiation): plain
            // negotiation from the new gateway.
            self.event_waits_on(event, device);
            self.rehome(engine, &[device], now);
        }
    }

    /// Type-2 cancellation: drop the tasks and shrink (or dissolve) the
    /// reserved slot; completed tasks only warn.
    fn on_cancellation(
        &mut self,
        engine: &mut Engine<SimPayload>,
        _event: EventId,
        device: crate::model::DeviceId,
        tasks: &[crate::model::TaskId],
    ) {
        let now = engine.now();
        let rt = self.devices.get_mut(&device).expect("known device");
        if rt.completed.is_some() || rt.dissolved {
            self.note_warning();
            return;
        }
        let before = rt.da.device.tasks.len();
        rt.da.device.tasks.retain(|t| !tasks.contains(&t.id));
        let removed = (before - rt.da.device.tasks.len()) as u64;
        self.cancelled_tasks += removed;
        if removed < tasks.len() as u64 {
            self.warnings += tasks.len() as u64 - removed;
        }
        if removed == 0 {
            return;
        }

        let rt = self.devices.get_mut(&device).expect("known device");
        if rt.da.device.tasks.is_empty() {
            // Whole batch withdrawn: dissolve the contract, stop any
            // negotiation in flight.
            if let Some(contract) = rt.da.contract.take() {
                self.nodes
                    .get_mut(&contract.node)
                    .expect("known node")
                    .na
                    .remove_device_slot(device);
            }
            rt.version += 1;
            rt.da.mode = RoundMode::Idle;
            rt.da.round += 1;
            rt.da.pending.clear();
            rt.da.proposals.clear();
            rt.da.awaiting = None;
            rt.dissolved = true;
            return;
        }

        if let Some(contract) = rt.da.contract {
            // Shrink the slot in place: same start, completion from the
            // re-estimated remaining batch.
            let profile = rt.da.profile();
            let node_rt = self.nodes.get_mut(&contract.node).expect("known node");
            let et = estimate_et_for(&profile, &node_rt.na.node).expect("node was serving");
            let start = contract.slot.start;
            // An in-progress slot cannot finish before `now`.
            let mut completion = start.after(et);
            if completion < now {
                completion = now;
            }
            node_rt.na.remove_device_slot(device);
            let slot = Slot {
                device,
                start,
                completion,
            };
            node_rt.na.insert_slot(slot);
            let rt = self.devices.get_mut(&device).expect("known device");
            rt.da.contract = Some(Contract {
                device,
                node: contract.node,
                slot,
            });
            rt.quoted_et = et;
            rt.version += 1;
            let version = rt.version;
            engine
                .post(completion.max(now), SimPayload::Complete { device, version })
                .expect("completion is in the future");
        } else if rt.da.is_negotiating() {
            // Batch changed under an open negotiation: restart it.
            self.begin_negotiation(engine, device);
        }
        // Never-contracted idle devices just lose the queued tasks.
    }

    /// Type-3 capability change: apply the new capabilities, re-derive
    /// every unfinished slot in schedule order, and evict devices whose
    /// re-packed completion misses their earliest deadline or whose RAM
    /// requirement no longer fits.
    fn on_capability_change(
        &mut self,
        engine: &mut Engine<SimPayload>,
        event: EventId,
        node: crate::model::NodeId,
        new_ram: f64,
        new_bw: f64,
        new_cpu: f64,
    ) {
        let now = engine.now();
        let node_rt = self.nodes.get_mut(&node).expect("known node");
        if !node_rt.alive {
            self.note_warning();
            return;
        }
        node_rt.na.node.ram = new_ram;
        node_rt.na.node.bandwidth = new_bw;
        node_rt.na.node.cpu_rate = new_cpu;

        let node_caps = node_rt.na.node.clone();
        let old_schedule = std::mem::take(&mut self.nodes.get_mut(&node).expect("known").na.schedule);
        let mut new_schedule: Vec<Slot> = Vec::with_capacity(old_schedule.len());
        let mut evicted: Vec<crate::model::DeviceId> = Vec::new();
        let mut prev_end = Now(0.0);
        let mut reposted: Vec<(crate::model::DeviceId, Slot, f64)> = Vec::new();

        for slot in old_schedule {
            if slot.completion <= now {
                // Finished work keeps its historical times.
                prev_end = prev_end.max(slot.completion);
                new_schedule.push(slot);
                continue;
            }
            let device = slot.device;
            let profile = self.devices[&device].da.profile();
            let earliest_deadline = self.devices[&device].da.earliest_deadline();
            let start = slot.start.max(prev_end);
            let fits = check_ram_profile(&node_caps, &profile);
            let et = estimate_et_for(&profile, &node_caps).ok();
            match (fits, et) {
                (true, Some(et)) => {
                    let completion = start.after(et);
                    if completion.seconds() > earliest_deadline {
                        evicted.push(device);
                    } else {
                        let repacked = Slot {
                            device,
                            start,
                            completion,
                        };
                        prev_end = completion;
                        new_schedule.push(repacked);
                        reposted.push((device, repacked, et));
                    }
                }
                _ => evicted.push(device),
            }
        }
        self.nodes.get_mut(&node).expect("known node").na.schedule = new_schedule;

        for (device, slot, et) in reposted {
            let rt = self.devices.get_mut(&device).expect("known device");
            rt.da.contract = Some(Contract {
                device,
                node,
                slot,
            });
            rt.quoted_et = et;
            rt.version += 1;
            let version = rt.version;
            engine
                .post(slot.completion.max(now), SimPayload::Complete { device, version })
                .expect("completion is in the future");
        }
        for &device in &evicted {
            let rt = self.devices.get_mut(&device).expect("known device");
            rt.da.contract = None;
            rt.version += 1;
            self.event_waits_on(event, device);
        }
        self.rehome(engine, &evicted, now);
    }

    /// Type-4 disconnection: zero the node's row and column, silence its
    /// agent, and send every device with unfinished work on it back to
    /// negotiation over the mutated topology.
    fn on_disconnection(
        &mut self,
        engine: &mut Engine<SimPayload>,
        event: EventId,
        node: crate::model::NodeId,
    ) {
        let now = engine.now();
        let node_rt = self.nodes.get_mut(&node).expect("known node");
        if !node_rt.alive {
            self.note_warning();
            return;
        }
        node_rt.alive = false;
        self.topology.disconnect_node(node);
        engine.kill(AgentId::Node(node));

        let node_rt = self.nodes.get_mut(&node).expect("known node");
        let (finished, unfinished): (Vec<Slot>, Vec<Slot>) = node_rt
            .na
            .schedule
            .drain(..)
            .partition(|s| s.completion <= now);
        node_rt.na.schedule = finished;

        let mut affected = Vec::new();
        for slot in unfinished {
            let rt = self.devices.get_mut(&slot.device).expect("known device");
            rt.da.contract = None;
            rt.version += 1;
            self.event_waits_on(event, slot.device);
            affected.push(slot.device);
        }
        self.rehome(engine, &affected, now);
    }

    /// First probe round after a location change (no cursor continuation:
    /// only the first theta ranked nodes are asked).
    fn advance_probe(&mut self, engine: &mut Engine<SimPayload>, device: crate::model::DeviceId) {
        let theta = self.params.theta;
        let timeout = self.params.round_timeout();
        let rt = self.devices.get_mut(&device).expect("known device");
        debug_assert_eq!(rt.da.mode, RoundMode::Probe);
        let batch = rt.da.next_round_nodes(theta);
        if batch.is_empty() {
            rt.da.mode = RoundMode::Idle;
            self.settle_open_events(engine, device, crate::sim::DeviceResolution::Kept);
            return;
        }
        rt.da.round += 1;
        let round = rt.da.round;
        rt.da.pending = batch.iter().map(|r| r.node).collect();
        let profile = rt.da.profile();
        for ranked in batch {
            engine.send(SimPayload::Message {
                from: AgentId::Device(device),
                to: AgentId::Node(ranked.node),
                msg: crate::sim::Msg::Request {
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
}

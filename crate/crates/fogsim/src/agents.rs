//! Device-agent and node-agent building blocks for the initial scheduling
//! protocol: task prioritisation, BFS node ranking, execution-time
//! estimation, slot search, proposal selection, and contract commitment.
//!
//! Everything here is a pure function over agent state; the message flow
//! that strings these together lives in [`crate::sim`].

use crate::engine::SimTime;
use crate::model::{distance, DeviceId, GeoLocation, IoTDevice, Node, NodeId, Task, Topology};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

/// GB payloads divide Gb/s bandwidths; convert before dividing.
const GB_TO_GBIT: f64 = 8.0;

/// A reserved execution window in a node's schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot {
    pub device: DeviceId,
    pub start: SimTime,
    pub completion: SimTime,
}

/// A node agent's offer: an execution window plus the quoted duration and
/// the BFS depth the requesting device ranked the node at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub node: NodeId,
    pub start: SimTime,
    pub completion: SimTime,
    pub et: f64,
    pub depth: u32,
}

/// Agreed binding of one device's task batch to one node's slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contract {
    pub device: DeviceId,
    pub node: NodeId,
    pub slot: Slot,
}

/// One entry of a device agent's node ranking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedNode {
    pub node: NodeId,
    pub depth: u32,
    pub distance: f64,
}

/// Snapshot of a task batch as carried in a scheduling request. Requests
/// quote the batch at send time so later batch changes cannot corrupt an
/// in-flight negotiation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchProfile {
    pub location: GeoLocation,
    pub total_data: f64,
    pub total_cpu: f64,
    pub max_ram: f64,
    pub task_count: usize,
}

impl BatchProfile {
    pub fn of(location: GeoLocation, tasks: &[Task]) -> Self {
        Self {
            location,
            total_data: tasks.iter().map(|t| t.data_size).sum(),
            total_cpu: tasks.iter().map(|t| t.cpu_length).sum(),
            max_ram: tasks.iter().map(|t| t.ram_req).fold(f64::NEG_INFINITY, f64::max),
            task_count: tasks.len(),
        }
    }

    pub fn of_device(device: &IoTDevice) -> Self {
        Self::of(device.location, &device.tasks)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum EstimateError {
    #[error("node {0} has zero bandwidth")]
    ZeroBandwidth(NodeId),
    #[error("node {0} has zero cpu rate")]
    ZeroCpuRate(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RankError {
    #[error("gateway {0} is not a node of the topology")]
    GatewayMissing(NodeId),
}

/// Stable sort ascending by deadline; equal deadlines keep input order.
pub fn prioritize_tasks(mut tasks: Vec<Task>) -> Vec<Task> {
    tasks.sort_by(|a, b| a.deadline.total_cmp(&b.deadline));
    tasks
}

/// BFS over the topology rooted at the device's gateway. Depth levels are
/// emitted in full before the next level; within a level nodes sort by
/// geographic distance to the device, ties by node id. Unreachable nodes
/// are excluded.
pub fn rank_nodes(
    device: &IoTDevice,
    topo: &Topology,
    nodes: &BTreeMap<NodeId, Node>,
) -> Result<Vec<RankedNode>, RankError> {
    let root = device.gateway;
    if (root.0 as usize) >= topo.order() || !nodes.contains_key(&root) {
        return Err(RankError::GatewayMissing(root));
    }

    let mut ranking = Vec::new();
    let mut seen = BTreeSet::from([root]);
    let mut frontier = VecDeque::from([root]);
    let mut depth = 0u32;
    while !frontier.is_empty() {
        let mut level: Vec<RankedNode> = frontier
            .iter()
            .map(|&id| RankedNode {
                node: id,
                depth,
                distance: distance(device.location, nodes[&id].location),
            })
            .collect();
        level.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.node.cmp(&b.node)));
        ranking.extend(level);

        let mut next = VecDeque::new();
        for _ in 0..frontier.len() {
            let id = frontier.pop_front().expect("frontier non-empty");
            for neighbor in topo.neighbors(id) {
                if seen.insert(neighbor) {
                    next.push_back(neighbor);
                }
            }
        }
        frontier = next;
        depth += 1;
    }
    Ok(ranking)
}

/// Estimated slot duration: distance-scaled transmission time plus CPU
/// processing time for the whole batch.
pub fn estimate_et_for(profile: &BatchProfile, node: &Node) -> Result<f64, EstimateError> {
    if node.bandwidth <= 0.0 {
        return Err(EstimateError::ZeroBandwidth(node.id));
    }
    if node.cpu_rate <= 0.0 {
        return Err(EstimateError::ZeroCpuRate(node.id));
    }
    let gamma = distance(profile.location, node.location);
    let transmission = GB_TO_GBIT * profile.total_data / node.bandwidth;
    Ok(gamma * transmission + profile.total_cpu / node.cpu_rate)
}

/// [`estimate_et_for`] over a device's current batch.
pub fn estimate_et(device: &IoTDevice, node: &Node) -> Result<f64, EstimateError> {
    estimate_et_for(&BatchProfile::of_device(device), node)
}

/// True iff the node's RAM covers the largest per-task requirement.
pub fn check_ram(node: &Node, tasks: &[Task]) -> bool {
    debug_assert!(!tasks.is_empty());
    tasks.iter().all(|t| node.ram >= t.ram_req)
}

pub fn check_ram_profile(node: &Node, profile: &BatchProfile) -> bool {
    node.ram >= profile.max_ram
}

/// Earliest gap of length `duration` starting at or after `earliest`:
/// before the first slot, between consecutive slots, or in the unbounded
/// tail. `None` only when a per-node `horizon` is configured and the gap
/// would end past it.
pub fn find_slot(
    schedule: &[Slot],
    duration: f64,
    earliest: SimTime,
    horizon: Option<SimTime>,
) -> Option<(SimTime, SimTime)> {
    debug_assert!(duration > 0.0);
    debug_assert!(schedule.windows(2).all(|w| w[0].start <= w[1].start));
    let mut candidate = earliest;
    for slot in schedule {
        if candidate.after(duration) <= slot.start {
            break;
        }
        if slot.completion > candidate {
            candidate = slot.completion;
        }
    }
    let completion = candidate.after(duration);
    match horizon {
        Some(h) if completion > h => None,
        _ => Some((candidate, completion)),
    }
}

/// Negotiation phase of a device agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundMode {
    Idle,
    /// Seeking a contract: the initial pass, a restart after a stale
    /// commit, or renegotiation after an uncertain event.
    Seeking,
    /// Probing for a better node after a location change; the current
    /// contract is kept unless a strictly earlier completion shows up.
    Probe,
}

/// Device-agent protocol state. The task queue inside `device` is kept
/// sorted ascending by deadline; `cursor` walks `node_ranking` in steps of
/// theta, contacting each ranked node at most once per pass.
#[derive(Debug, Clone)]
pub struct DeviceAgentState {
    pub device: IoTDevice,
    pub node_ranking: Vec<RankedNode>,
    pub cursor: usize,
    /// Monotone round counter; replies carry it back so late or
    /// superseded replies are recognisable.
    pub round: u64,
    pub mode: RoundMode,
    pub pending: BTreeSet<NodeId>,
    pub proposals: Vec<Proposal>,
    /// Accepted proposal whose commit outcome has not arrived yet.
    pub awaiting: Option<Proposal>,
    pub contract: Option<Contract>,
}

impl DeviceAgentState {
    pub fn new(mut device: IoTDevice) -> Self {
        device.tasks = prioritize_tasks(std::mem::take(&mut device.tasks));
        Self {
            device,
            node_ranking: Vec::new(),
            cursor: 0,
            round: 0,
            mode: RoundMode::Idle,
            pending: BTreeSet::new(),
            proposals: Vec::new(),
            awaiting: None,
            contract: None,
        }
    }

    pub fn is_negotiating(&self) -> bool {
        self.mode != RoundMode::Idle
    }

    /// Re-sorts the batch after a deadline change.
    pub fn reprioritize(&mut self) {
        self.device.tasks = prioritize_tasks(std::mem::take(&mut self.device.tasks));
    }

    pub fn profile(&self) -> BatchProfile {
        BatchProfile::of_device(&self.device)
    }

    pub fn earliest_deadline(&self) -> f64 {
        self.device
            .tasks
            .iter()
            .map(|t| t.deadline)
            .fold(f64::INFINITY, f64::min)
    }

    /// Distance annotation of a ranked node, for geo-style selection.
    pub fn ranked_distance(&self, node: NodeId) -> Option<f64> {
        self.node_ranking.iter().find(|r| r.node == node).map(|r| r.distance)
    }

    /// Next theta ranked nodes from the cursor; empty when exhausted.
    pub fn next_round_nodes(&mut self, theta: u32) -> Vec<RankedNode> {
        let upto = (self.cursor + theta as usize).min(self.node_ranking.len());
        let batch = self.node_ranking[self.cursor..upto].to_vec();
        self.cursor = upto;
        batch
    }
}

/// Node-agent schedule: pairwise non-overlapping slots sorted by start.
#[derive(Debug, Clone)]
pub struct NodeAgentState {
    pub node: Node,
    pub schedule: Vec<Slot>,
    /// Optional admission horizon; `None` means the tail gap is unbounded.
    pub horizon: Option<SimTime>,
}

/// Result of asking the winner node to reserve the accepted interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CommitOutcome {
    Committed(Contract),
    /// A conflicting reservation landed since the proposal was made.
    Stale,
}

impl NodeAgentState {
    pub fn new(node: Node) -> Self {
        Self {
            node,
            schedule: Vec::new(),
            horizon: None,
        }
    }

    /// True when `[start, completion)` overlaps no reserved slot.
    pub fn interval_free(&self, start: SimTime, completion: SimTime) -> bool {
        self.schedule
            .iter()
            .all(|s| completion <= s.start || s.completion <= start)
    }

    /// Inserts keeping the schedule sorted by start.
    pub fn insert_slot(&mut self, slot: Slot) {
        debug_assert!(self.interval_free(slot.start, slot.completion));
        let at = self
            .schedule
            .partition_point(|s| (s.start, s.device) < (slot.start, slot.device));
        self.schedule.insert(at, slot);
    }

    pub fn remove_device_slot(&mut self, device: DeviceId) -> Option<Slot> {
        let at = self.schedule.iter().position(|s| s.device == device)?;
        Some(self.schedule.remove(at))
    }

    pub fn slot_of(&self, device: DeviceId) -> Option<&Slot> {
        self.schedule.iter().find(|s| s.device == device)
    }

    /// Panics when a schedule invariant is broken; called after mutations
    /// in tests and debug builds.
    pub fn check_invariants(&self) {
        for pair in self.schedule.windows(2) {
            assert!(
                pair[0].start <= pair[1].start,
                "schedule of {} not sorted",
                self.node.id
            );
            assert!(
                pair[0].completion <= pair[1].start,
                "overlapping slots on {}: {:?} / {:?}",
                self.node.id,
                pair[0],
                pair[1]
            );
        }
        for s in &self.schedule {
            assert!(s.start < s.completion, "empty slot on {}", self.node.id);
        }
    }
}

/// Node-agent reply to a scheduling request: a proposal when the node can
/// serve the batch, otherwise a refusal (`None`). The quoted slot is not
/// reserved; reservation happens at [`commit`].
pub fn handle_request(
    na: &NodeAgentState,
    profile: &BatchProfile,
    depth: u32,
    now: SimTime,
) -> Option<Proposal> {
    if !check_ram_profile(&na.node, profile) {
        return None;
    }
    let et = estimate_et_for(profile, &na.node).ok()?;
    let (start, completion) = find_slot(&na.schedule, et, now, na.horizon)?;
    Some(Proposal {
        node: na.node.id,
        start,
        completion,
        et,
        depth,
    })
}

/// Winner proposal: minimum completion, ties by smaller depth, then
/// smaller node id. `None` on empty input (the caller must advance its
/// cursor instead).
pub fn select_proposal(proposals: &[Proposal]) -> Option<&Proposal> {
    proposals.iter().min_by(|a, b| {
        a.completion
            .cmp(&b.completion)
            .then(a.depth.cmp(&b.depth))
            .then(a.node.cmp(&b.node))
    })
}

/// Reserves the accepted interval if it still fits, else reports it stale
/// so the device agent treats it as a refusal and keeps negotiating.
pub fn commit(na: &mut NodeAgentState, proposal: &Proposal, device: DeviceId) -> CommitOutcome {
    if !na.interval_free(proposal.start, proposal.completion) {
        return CommitOutcome::Stale;
    }
    let slot = Slot {
        device,
        start: proposal.start,
        completion: proposal.completion,
    };
    na.insert_slot(slot);
    CommitOutcome::Committed(Contract {
        device,
        node: na.node.id,
        slot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{NodeKind, TaskId};

    fn task(id: u64, deadline: f64) -> Task {
        Task {
            id: TaskId(id),
            ram_req: 1.0,
            data_size: 0.1,
            cpu_length: 1000.0,
            deadline,
        }
    }

    fn node_at(id: u32, x: f64, y: f64) -> Node {
        Node {
            id: NodeId(id),
            kind: NodeKind::Fog,
            location: GeoLocation::new(x, y),
            ram: 8.0,
            bandwidth: 8.0,
            cpu_rate: 5000.0,
        }
    }

    fn slot(device: u32, start: f64, completion: f64) -> Slot {
        Slot {
            device: DeviceId(device),
            start: SimTime(start),
            completion: SimTime(completion),
        }
    }

    #[test]
    fn prioritize_sorts_by_deadline() {
        let out = prioritize_tasks(vec![task(1, 30.0), task(2, 10.0), task(3, 20.0)]);
        let deadlines: Vec<f64> = out.iter().map(|t| t.deadline).collect();
        assert_eq!(deadlines, vec![10.0, 20.0, 30.0]);
    }

    #[test]
    fn prioritize_keeps_sorted_input_unchanged() {
        let input = vec![task(1, 5.0), task(2, 6.0)];
        assert_eq!(prioritize_tasks(input.clone()), input);
    }

    #[test]
    fn prioritize_is_stable_on_equal_deadlines() {
        let out = prioritize_tasks(vec![task(7, 10.0), task(8, 10.0)]);
        assert_eq!(out[0].id, TaskId(7));
        assert_eq!(out[1].id, TaskId(8));
    }

    fn device_with_gateway(gateway: u32, x: f64, y: f64) -> IoTDevice {
        IoTDevice {
            id: DeviceId(0),
            location: GeoLocation::new(x, y),
            gateway: NodeId(gateway),
            tasks: vec![task(0, 100.0)],
        }
    }

    fn node_map(nodes: Vec<Node>) -> BTreeMap<NodeId, Node> {
        nodes.into_iter().map(|n| (n.id, n)).collect()
    }

    #[test]
    fn rank_star_topology_sorts_leaves_by_distance() {
        // Hub 0 at origin, leaves 1..3 at increasing distance from the
        // device; hand BFS gives hub at depth 0, then leaves by distance.
        let topo = Topology::from_edges(
            4,
            &[(NodeId(0), NodeId(1)), (NodeId(0), NodeId(2)), (NodeId(0), NodeId(3))],
        );
        let nodes = node_map(vec![
            node_at(0, 0.0, 0.0),
            node_at(1, 30.0, 0.0),
            node_at(2, 10.0, 0.0),
            node_at(3, 20.0, 0.0),
        ]);
        let device = device_with_gateway(0, 0.0, 0.0);
        let ranking = rank_nodes(&device, &topo, &nodes).unwrap();
        let order: Vec<(u32, u32)> = ranking.iter().map(|r| (r.node.0, r.depth)).collect();
        assert_eq!(order, vec![(0, 0), (2, 1), (3, 1), (1, 1)]);
    }

    #[test]
    fn rank_single_node_topology() {
        let topo = Topology::new(1);
        let nodes = node_map(vec![node_at(0, 1.0, 1.0)]);
        let device = device_with_gateway(0, 0.0, 0.0);
        let ranking = rank_nodes(&device, &topo, &nodes).unwrap();
        assert_eq!(ranking.len(), 1);
        assert_eq!(ranking[0].node, NodeId(0));
        assert_eq!(ranking[0].depth, 0);
    }

    #[test]
    fn rank_line_topology_by_depth() {
        // g(0) - a(1) - b(2); hand BFS: depths 0, 1, 2.
        let topo = Topology::from_edges(3, &[(NodeId(0), NodeId(1)), (NodeId(1), NodeId(2))]);
        let nodes = node_map(vec![
            node_at(0, 1.0, 0.0),
            node_at(1, 2.0, 0.0),
            node_at(2, 3.0, 0.0),
        ]);
        let device = device_with_gateway(0, 0.0, 0.0);
        let ranking = rank_nodes(&device, &topo, &nodes).unwrap();
        let order: Vec<(u32, u32)> = ranking.iter().map(|r| (r.node.0, r.depth)).collect();
        assert_eq!(order, vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn rank_excludes_unreachable_nodes() {
        let topo = Topology::from_edges(3, &[(NodeId(0), NodeId(1))]);
        let nodes = node_map(vec![
            node_at(0, 0.0, 0.0),
            node_at(1, 1.0, 0.0),
            node_at(2, 2.0, 0.0),
        ]);
        let device = device_with_gateway(0, 0.0, 0.0);
        let ranking = rank_nodes(&device, &topo, &nodes).unwrap();
        assert!(ranking.iter().all(|r| r.node != NodeId(2)));
    }

    #[test]
    fn rank_rejects_missing_gateway() {
        let topo = Topology::new(2);
        let nodes = node_map(vec![node_at(0, 0.0, 0.0), node_at(1, 1.0, 0.0)]);
        let device = device_with_gateway(9, 0.0, 0.0);
        assert_eq!(
            rank_nodes(&device, &topo, &nodes),
            Err(RankError::GatewayMissing(NodeId(9)))
        );
    }

    #[test]
    fn estimate_et_direct_substitution() {
        // gamma=5, sum s=2 GB, bw=8 Gb/s, sum l=10000 MI, cpu=5000 MIPS:
        // 5*(16/8) + 10000/5000 = 12 s.
        let profile = BatchProfile {
            location: GeoLocation::new(0.0, 0.0),
            total_data: 2.0,
            total_cpu: 10_000.0,
            max_ram: 1.0,
            task_count: 2,
        };
        let node = Node {
            location: GeoLocation::new(3.0, 4.0),
            bandwidth: 8.0,
            cpu_rate: 5000.0,
            ..node_at(0, 0.0, 0.0)
        };
        assert!((estimate_et_for(&profile, &node).unwrap() - 12.0).abs() < 1e-9);
    }

    #[test]
    fn estimate_et_colocated_is_pure_compute() {
        let profile = BatchProfile {
            location: GeoLocation::new(7.0, 7.0),
            total_data: 2.0,
            total_cpu: 10_000.0,
            max_ram: 1.0,
            task_count: 2,
        };
        let node = Node {
            location: GeoLocation::new(7.0, 7.0),
            ..node_at(0, 0.0, 0.0)
        };
        assert!((estimate_et_for(&profile, &node).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn estimate_et_cloud_hand_evaluation() {
        // Cloud row: bw=10, cpu=50000; gamma=100, 1 GB, 20000 MI:
        // 100*0.8 + 0.4 = 80.4 s.
        let profile = BatchProfile {
            location: GeoLocation::new(100.0, 0.0),
            total_data: 1.0,
            total_cpu: 20_000.0,
            max_ram: 1.0,
            task_count: 1,
        };
        let cloud = Node {
            kind: NodeKind::Cloud,
            bandwidth: 10.0,
            cpu_rate: 50_000.0,
            ram: 16.0,
            ..node_at(0, 0.0, 0.0)
        };
        assert!((estimate_et_for(&profile, &cloud).unwrap() - 80.4).abs() < 1e-9);
    }

    #[test]
    fn estimate_et_rejects_degenerate_node() {
        let profile = BatchProfile::of(GeoLocation::new(0.0, 0.0), &[task(0, 1.0)]);
        let dead = Node {
            bandwidth: 0.0,
            ..node_at(0, 0.0, 0.0)
        };
        assert!(estimate_et_for(&profile, &dead).is_err());
    }

    #[test]
    fn check_ram_against_max_requirement() {
        let mut tasks = vec![task(0, 1.0), task(1, 1.0)];
        tasks[0].ram_req = 2.0;
        tasks[1].ram_req = 7.9;
        let node = node_at(0, 0.0, 0.0);
        assert!(check_ram(&node, &tasks));

        let mut small = node_at(1, 0.0, 0.0);
        small.ram = 2.0;
        let mut heavy = vec![task(2, 1.0)];
        heavy[0].ram_req = 2.1;
        assert!(!check_ram(&small, &heavy));
    }

    #[test]
    fn find_slot_on_empty_schedule() {
        assert_eq!(
            find_slot(&[], 10.0, SimTime(0.0), None),
            Some((SimTime(0.0), SimTime(10.0)))
        );
    }

    #[test]
    fn find_slot_after_single_slot() {
        let sched = [slot(1, 0.0, 10.0)];
        assert_eq!(
            find_slot(&sched, 5.0, SimTime(0.0), None),
            Some((SimTime(10.0), SimTime(15.0)))
        );
    }

    #[test]
    fn find_slot_exhaustive_gap_enumeration() {
        // Gaps with earliest=2: [2,0)? no; between slots [10,20); tail.
        // First fit of length 5 is (10,15).
        let sched = [slot(1, 0.0, 10.0), slot(2, 20.0, 30.0)];
        assert_eq!(
            find_slot(&sched, 5.0, SimTime(2.0), None),
            Some((SimTime(10.0), SimTime(15.0)))
        );
    }

    #[test]
    fn find_slot_respects_horizon() {
        let sched = [slot(1, 0.0, 10.0)];
        assert_eq!(find_slot(&sched, 5.0, SimTime(0.0), Some(SimTime(12.0))), None);
        assert_eq!(
            find_slot(&sched, 5.0, SimTime(0.0), Some(SimTime(15.0))),
            Some((SimTime(10.0), SimTime(15.0)))
        );
    }

    fn proposal(node: u32, completion: f64, depth: u32) -> Proposal {
        Proposal {
            node: NodeId(node),
            start: SimTime(0.0),
            completion: SimTime(completion),
            et: completion,
            depth,
        }
    }

    #[test]
    fn select_minimum_completion() {
        let ps = [proposal(1, 15.0, 0), proposal(2, 12.0, 0), proposal(3, 20.0, 0)];
        assert_eq!(select_proposal(&ps).unwrap().node, NodeId(2));
    }

    #[test]
    fn select_breaks_completion_ties_by_depth() {
        let ps = [proposal(1, 12.0, 2), proposal(2, 12.0, 1)];
        assert_eq!(select_proposal(&ps).unwrap().node, NodeId(2));
    }

    #[test]
    fn select_single_proposal_is_itself() {
        let ps = [proposal(5, 9.0, 3)];
        assert_eq!(select_proposal(&ps).unwrap().node, NodeId(5));
    }

    #[test]
    fn select_empty_is_none() {
        assert!(select_proposal(&[]).is_none());
    }

    #[test]
    fn handle_request_refuses_on_ram() {
        let mut na = NodeAgentState::new(node_at(0, 0.0, 0.0));
        na.node.ram = 1.0;
        let profile = BatchProfile {
            location: GeoLocation::new(0.0, 0.0),
            total_data: 1.0,
            total_cpu: 1000.0,
            max_ram: 4.0,
            task_count: 1,
        };
        assert!(handle_request(&na, &profile, 0, SimTime(0.0)).is_none());
    }

    #[test]
    fn handle_request_quotes_earliest_gap_from_now() {
        // Empty schedule, ET=12, now=3: proposal (3,15).
        let na = NodeAgentState::new(Node {
            location: GeoLocation::new(3.0, 4.0),
            bandwidth: 8.0,
            cpu_rate: 5000.0,
            ..node_at(0, 0.0, 0.0)
        });
        let profile = BatchProfile {
            location: GeoLocation::new(0.0, 0.0),
            total_data: 2.0,
            total_cpu: 10_000.0,
            max_ram: 1.0,
            task_count: 2,
        };
        let p = handle_request(&na, &profile, 1, SimTime(3.0)).unwrap();
        assert_eq!(p.start, SimTime(3.0));
        assert_eq!(p.completion, SimTime(15.0));
        assert_eq!(p.depth, 1);
    }

    #[test]
    fn handle_request_skips_busy_prefix() {
        let mut na = NodeAgentState::new(Node {
            location: GeoLocation::new(3.0, 4.0),
            bandwidth: 8.0,
            cpu_rate: 5000.0,
            ..node_at(0, 0.0, 0.0)
        });
        na.insert_slot(slot(9, 0.0, 50.0));
        let profile = BatchProfile {
            location: GeoLocation::new(0.0, 0.0),
            total_data: 2.0,
            total_cpu: 10_000.0,
            max_ram: 1.0,
            task_count: 2,
        };
        let p = handle_request(&na, &profile, 0, SimTime(3.0)).unwrap();
        assert_eq!((p.start, p.completion), (SimTime(50.0), SimTime(62.0)));
    }

    #[test]
    fn commit_inserts_when_interval_still_free() {
        let mut na = NodeAgentState::new(node_at(0, 0.0, 0.0));
        let p = proposal(0, 10.0, 0);
        match commit(&mut na, &p, DeviceId(1)) {
            CommitOutcome::Committed(c) => {
                assert_eq!(c.slot.start, SimTime(0.0));
                assert_eq!(c.slot.completion, SimTime(10.0));
            }
            CommitOutcome::Stale => panic!("expected commit"),
        }
        na.check_invariants();
    }

    #[test]
    fn commit_reports_stale_on_conflict() {
        let mut na = NodeAgentState::new(node_at(0, 0.0, 0.0));
        na.insert_slot(slot(7, 2.0, 8.0));
        let p = proposal(0, 10.0, 0);
        assert_eq!(commit(&mut na, &p, DeviceId(1)), CommitOutcome::Stale);
        assert_eq!(na.schedule.len(), 1);
    }
}

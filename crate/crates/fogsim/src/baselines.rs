//! Reference schedulers for comparison runs: Round-Robin over the node
//! list, the min-min heuristic with global information, and a geo-aware
//! policy that ranks nodes purely by distance. All three reuse the same
//! execution-time model as the agent scheduler so comparisons isolate the
//! policy, not the cost function.

use crate::agents::{
    check_ram_profile, estimate_et_for, find_slot, BatchProfile, DeviceAgentState, Proposal,
    RankedNode, Slot,
};
use crate::engine::SimTime;
use crate::model::{distance, shortest_hops, DeviceId, IoTDevice, Node, NodeId, Topology};
use std::collections::BTreeMap;

/// One planned assignment; `completion - start == et` by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Binding {
    pub device: DeviceId,
    pub node: NodeId,
    pub start: SimTime,
    pub completion: SimTime,
    pub et: f64,
}

/// Output shape shared by the central planners.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssignmentPlan {
    pub bindings: Vec<Binding>,
    pub failed: Vec<DeviceId>,
}

/// Device view a planner works from.
#[derive(Debug, Clone)]
pub struct PlanDevice {
    pub id: DeviceId,
    pub gateway: NodeId,
    pub profile: BatchProfile,
}

/// Node view a planner packs slots into; `schedule` accumulates this
/// plan's own bindings as it grows.
#[derive(Debug, Clone)]
pub struct PlanNode {
    pub node: Node,
    pub alive: bool,
    pub schedule: Vec<Slot>,
    pub horizon: Option<SimTime>,
}

fn usable(device: &PlanDevice, node: &PlanNode, topo: &Topology) -> bool {
    node.alive
        && check_ram_profile(&node.node, &device.profile)
        && matches!(shortest_hops(topo, device.gateway, node.node.id), Ok(Some(_)))
}

fn quote(device: &PlanDevice, node: &PlanNode, now: SimTime) -> Option<Binding> {
    let et = estimate_et_for(&device.profile, &node.node).ok()?;
    let (start, completion) = find_slot(&node.schedule, et, now, node.horizon)?;
    Some(Binding {
        device: device.id,
        node: node.node.id,
        start,
        completion,
        et,
    })
}

fn pack(node: &mut PlanNode, binding: &Binding) {
    let slot = Slot {
        device: binding.device,
        start: binding.start,
        completion: binding.completion,
    };
    let at = node.schedule.partition_point(|s| s.start < slot.start);
    node.schedule.insert(at, slot);
}

/// Round-Robin: the k-th planned device starts probing at node `k mod p`
/// and takes the first usable node cyclically. `ordinal` continues across
/// re-plans so rescheduled devices keep rotating.
pub fn round_robin(
    devices: &[PlanDevice],
    nodes: &mut BTreeMap<NodeId, PlanNode>,
    topo: &Topology,
    now: SimTime,
    ordinal: &mut u64,
) -> AssignmentPlan {
    let ids: Vec<NodeId> = nodes.keys().copied().collect();
    let p = ids.len();
    let mut plan = AssignmentPlan::default();
    for device in devices {
        let k = *ordinal as usize;
        *ordinal += 1;
        let mut placed = false;
        for j in 0..p {
            let id = ids[(k + j) % p];
            let node = &nodes[&id];
            if !usable(device, node, topo) {
                continue;
            }
            if let Some(binding) = quote(device, node, now) {
                pack(nodes.get_mut(&id).expect("known node"), &binding);
                plan.bindings.push(binding);
                placed = true;
                break;
            }
        }
        if !placed {
            plan.failed.push(device.id);
        }
    }
    plan
}

/// Min-min: repeatedly commit the globally earliest (device, node)
/// completion over all unassigned devices, ties by device id.
pub fn min_min(
    devices: &[PlanDevice],
    nodes: &mut BTreeMap<NodeId, PlanNode>,
    topo: &Topology,
    now: SimTime,
) -> AssignmentPlan {
    let mut plan = AssignmentPlan::default();
    let mut remaining: BTreeMap<DeviceId, &PlanDevice> =
        devices.iter().map(|d| (d.id, d)).collect();

    let best_for = |device: &PlanDevice, nodes: &BTreeMap<NodeId, PlanNode>| -> Option<Binding> {
        nodes
            .values()
            .filter(|n| usable(device, n, topo))
            .filter_map(|n| quote(device, n, now))
            .min_by(|a, b| a.completion.cmp(&b.completion).then(a.node.cmp(&b.node)))
    };

    let mut best: BTreeMap<DeviceId, Option<Binding>> = remaining
        .values()
        .map(|d| (d.id, best_for(d, nodes)))
        .collect();

    while !remaining.is_empty() {
        // Devices with no usable node fail out of the loop.
        let infeasible: Vec<DeviceId> = best
            .iter()
            .filter(|(_, b)| b.is_none())
            .map(|(&d, _)| d)
            .collect();
        for d in infeasible {
            plan.failed.push(d);
            remaining.remove(&d);
            best.remove(&d);
        }
        let Some((&device, binding)) = best
            .iter()
            .filter_map(|(d, b)| b.as_ref().map(|b| (d, *b)))
            .min_by(|a, b| a.1.completion.cmp(&b.1.completion).then(a.0.cmp(b.0)))
        else {
            break;
        };
        pack(nodes.get_mut(&binding.node).expect("known node"), &binding);
        plan.bindings.push(binding);
        remaining.remove(&device);
        best.remove(&device);
        // Only quotes on the node that just grew can have changed.
        for (id, b) in best.iter_mut() {
            if b.map(|b| b.node) == Some(binding.node) {
                *b = best_for(remaining[id], nodes);
            }
        }
    }
    plan
}

/// Geo-aware node ranking: every node reachable from the gateway, ordered
/// by pure geographic distance (no BFS depth), ties by id. The depth
/// annotation carries the hop count for network accounting only.
pub fn geo_ranking(
    device: &IoTDevice,
    topo: &Topology,
    nodes: &BTreeMap<NodeId, Node>,
) -> Vec<RankedNode> {
    let mut ranking: Vec<RankedNode> = nodes
        .values()
        .filter_map(|n| {
            let hops = shortest_hops(topo, device.gateway, n.id).ok().flatten()?;
            Some(RankedNode {
                node: n.id,
                depth: hops,
                distance: distance(device.location, n.location),
            })
        })
        .collect();
    ranking.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.node.cmp(&b.node)));
    ranking
}

/// Geo-aware winner: nearest proposing node, ties by earlier completion,
/// then id.
pub fn geo_select(da: &DeviceAgentState) -> Option<Proposal> {
    da.proposals
        .iter()
        .min_by(|a, b| {
            let da_dist = da.ranked_distance(a.node).unwrap_or(f64::INFINITY);
            let db_dist = da.ranked_distance(b.node).unwrap_or(f64::INFINITY);
            da_dist
                .total_cmp(&db_dist)
                .then(a.completion.cmp(&b.completion))
                .then(a.node.cmp(&b.node))
        })
        .copied()
}

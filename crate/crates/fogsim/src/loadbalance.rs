//! Periodic, decentralized pairwise load balancing between directly
//! connected fog nodes: when the load variance of a pair crosses the
//! threshold, the heavier node migrates its latest-starting feasible slot
//! to the lighter neighbour.

use crate::agents::{check_ram_profile, estimate_et_for, find_slot, Contract, Slot};
use crate::engine::{Engine, HandlerFault, SimTime};
use crate::model::{NodeId, NodeKind};
use crate::sim::{SimPayload, World};
use std::time::Instant;

/// A node's load at one instant: `allocated` is the reserved time from
/// `now` onward, `horizon` the latest completion in the schedule, and
/// `load` their ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadSample {
    pub allocated: f64,
    pub horizon: SimTime,
    pub load: f64,
}

/// Load of a schedule at `now`: remaining reserved time over remaining
/// horizon. An empty (or fully elapsed) schedule has load 0.
pub fn compute_load(schedule: &[Slot], now: SimTime) -> LoadSample {
    let mut allocated = 0.0;
    let mut horizon = now;
    for slot in schedule {
        allocated += (slot.completion.seconds() - slot.start.seconds().max(now.seconds())).max(0.0);
        if slot.completion > horizon {
            horizon = slot.completion;
        }
    }
    let span = horizon.seconds() - now.seconds();
    let load = if span > 0.0 { allocated / span } else { 0.0 };
    LoadSample {
        allocated,
        horizon,
        load,
    }
}

/// Loads of two schedules normalised over the pair's common horizon, so
/// the heavier/lighter comparison reflects remaining allocated time even
/// when both schedules are contiguously packed.
pub fn pair_loads(a: &[Slot], b: &[Slot], now: SimTime) -> (f64, f64) {
    let sa = compute_load(a, now);
    let sb = compute_load(b, now);
    let span = (sa.horizon.max(sb.horizon).seconds() - now.seconds()).max(0.0);
    if span <= 0.0 {
        return (0.0, 0.0);
    }
    (sa.allocated / span, sb.allocated / span)
}

/// Sample variance of a pair of loads: ((a-m)^2 + (b-m)^2) / 2 with
/// m = (a+b)/2, equivalently (a-b)^2 / 4.
pub fn pair_variance(a: f64, b: f64) -> f64 {
    let m = (a + b) / 2.0;
    ((a - m) * (a - m) + (b - m) * (b - m)) / 2.0
}

/// Network-usage contribution of moving a batch: payload size times hops.
pub fn migrate_cost(total_data_gb: f64, hops: u32) -> f64 {
    total_data_gb * hops as f64
}

/// One completed migration, for tests and traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Migration {
    pub device: crate::model::DeviceId,
    pub from: NodeId,
    pub to: NodeId,
}

impl World {
    /// Periodic wakeup of one fog node: run a balance step, then re-arm
    /// while the run still has outstanding work.
    pub(crate) fn on_balance_tick(
        &mut self,
        engine: &mut Engine<SimPayload>,
        node: NodeId,
    ) -> Result<(), HandlerFault> {
        self.balance_step(engine, node);
        if self.work_remains() && self.nodes[&node].alive {
            let next = engine.now().after(self.params.balance_period);
            engine
                .post(next, SimPayload::BalanceTick { node })
                .expect("next tick is in the future");
        }
        Ok(())
    }

    /// Pairwise balance from `source` toward each directly connected,
    /// lighter fog neighbour; at most one migration per neighbour.
    ///
    /// A slot moves only when the neighbour passes the RAM check, the
    /// re-estimated duration fits a gap, the device's deadlines stay
    /// feasible, and the pair variance strictly decreases after the move.
    pub(crate) fn balance_step(
        &mut self,
        engine: &mut Engine<SimPayload>,
        source: NodeId,
    ) -> Vec<Migration> {
        let started = Instant::now();
        let now = engine.now();
        let mut migrations = Vec::new();
        if self.nodes[&source].na.node.kind != NodeKind::Fog {
            return migrations;
        }
        let neighbors: Vec<NodeId> = self.topology.neighbors(source).collect();
        for target in neighbors {
            if self.nodes[&source].na.schedule.is_empty() {
                break;
            }
            let target_rt = &self.nodes[&target];
            if target_rt.na.node.kind != NodeKind::Fog || !target_rt.alive {
                continue;
            }
            let (src_load, tgt_load) =
                pair_loads(&self.nodes[&source].na.schedule, &target_rt.na.schedule, now);
            let variance = pair_variance(src_load, tgt_load);
            if variance < self.params.delta || src_load <= tgt_load {
                continue;
            }

            // Latest-starting movable slot that the neighbour can handle.
            let candidates: Vec<Slot> = {
                let mut future: Vec<Slot> = self.nodes[&source]
                    .na
                    .schedule
                    .iter()
                    .filter(|s| s.start > now)
                    .copied()
                    .collect();
                future.reverse();
                future
            };
            for slot in candidates {
                let device = slot.device;
                let rt = &self.devices[&device];
                debug_assert_eq!(rt.da.contract.map(|c| c.node), Some(source));
                let profile = rt.da.profile();
                let target_node = &self.nodes[&target].na.node;
                if !check_ram_profile(target_node, &profile) {
                    continue;
                }
                let Ok(et) = estimate_et_for(&profile, target_node) else {
                    continue;
                };
                let Some((new_start, new_ct)) = find_slot(
                    &self.nodes[&target].na.schedule,
                    et,
                    now,
                    self.nodes[&target].na.horizon,
                ) else {
                    continue;
                };
                if new_ct.seconds() > rt.da.earliest_deadline() {
                    continue;
                }

                // The move must bring the pair strictly closer.
                let src_after: Vec<Slot> = self.nodes[&source]
                    .na
                    .schedule
                    .iter()
                    .filter(|s| s.device != device)
                    .copied()
                    .collect();
                let mut tgt_after = self.nodes[&target].na.schedule.clone();
                let moved = Slot {
                    device,
                    start: new_start,
                    completion: new_ct,
                };
                let at = tgt_after.partition_point(|s| s.start < moved.start);
                tgt_after.insert(at, moved);
                let (src_load_after, tgt_load_after) = pair_loads(&src_after, &tgt_after, now);
                let variance_after = pair_variance(src_load_after, tgt_load_after);
                if variance_after >= variance {
                    continue;
                }

                self.nodes
                    .get_mut(&source)
                    .expect("known node")
                    .na
                    .remove_device_slot(device);
                self.nodes.get_mut(&target).expect("known node").na.insert_slot(moved);
                let rt = self.devices.get_mut(&device).expect("known device");
                rt.da.contract = Some(Contract {
                    device,
                    node: target,
                    slot: moved,
                });
                rt.quoted_et = et;
                rt.version += 1;
                let version = rt.version;
                engine
                    .post(new_ct.max(now), SimPayload::Complete { device, version })
                    .expect("completion is in the future");
                self.log_migration_transfer(profile.total_data, source, target);
                migrations.push(Migration {
                    device,
                    from: source,
                    to: target,
                });
                break;
            }
        }
        self.decision_ns += started.elapsed().as_nanos();
        migrations
    }
}

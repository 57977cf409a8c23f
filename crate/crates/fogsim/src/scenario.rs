//! Seeded generation and serialization of experiment environments: node
//! and device populations, the network topology, and the uncertain-event
//! stream. Generation is a pure function of the spec, so a scenario file
//! plus its embedded spec is fully self-describing.

use crate::agents::estimate_et;
use crate::engine::SimTime;
use crate::model::{
    distance, validate_topology, DeviceId, GeoLocation, IoTDevice, Node, NodeId, NodeKind, Task,
    TaskId, Topology,
};
use crate::resched::{EventChange, EventId, UncertainEvent};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

/// Closed interval `[min, max]` a scalar parameter is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueRange {
    pub min: f64,
    pub max: f64,
}

impl ValueRange {
    pub fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.min <= v && v <= self.max
    }

    fn sample(&self, rng: &mut ChaCha12Rng) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }
}

/// How node connectivity is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum TopologyModel {
    /// Fog pairs within `radius` are connected; each cloud uplinks to its
    /// `cloud_uplinks` nearest fogs (0 = all fogs). A minimum spanning
    /// chain is added when the sample comes out disconnected.
    RandomGeometric { radius: f64, cloud_uplinks: u32 },
    /// Fogs split into `clusters` fully-connected groups whose heads form
    /// a ring; clouds connect to every cluster head.
    RingOfClusters { clusters: u32 },
}

/// Everything needed to regenerate a scenario: counts, parameter ranges,
/// topology model, and the per-entity uncertain-event probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub seed: u64,
    pub cloud_count: u32,
    pub fog_count: u32,
    pub device_count: u32,
    /// Fixed cloud row: location, RAM (GB), bandwidth (Gb/s), CPU (MIPS).
    pub cloud_location: GeoLocation,
    pub cloud_ram: f64,
    pub cloud_bw: f64,
    pub cloud_cpu: f64,
    /// Fog ranges; locations are drawn per axis from `fog_gl`.
    pub fog_gl: ValueRange,
    pub fog_ram: ValueRange,
    pub fog_bw: ValueRange,
    pub fog_cpu: ValueRange,
    /// Device ranges; task counts are integers in `tasks_per_device`.
    pub device_gl: ValueRange,
    pub tasks_per_device: ValueRange,
    pub task_ram: ValueRange,
    pub task_data: ValueRange,
    pub task_cpu: ValueRange,
    pub task_deadline: ValueRange,
    pub topology_model: TopologyModel,
    /// Per-task / per-node probability of involving one uncertain event.
    pub event_probability: f64,
    /// Uncertain-event deltas: task r/s/l grow by a factor in
    /// `event_task_increase`, deadlines move earlier by
    /// `event_deadline_advance` seconds, node ram/cpu shrink by a factor
    /// in `event_node_decrease`, bandwidth shrinks by `event_bw_decrease`.
    pub event_task_increase: ValueRange,
    pub event_deadline_advance: ValueRange,
    pub event_node_decrease: ValueRange,
    pub event_bw_decrease: f64,
}

impl ScenarioSpec {
    /// Experiment-1 scale: 2 clouds, 48 fogs, 1000 devices on a 500-unit
    /// grid, with the published node, device, and event parameter ranges.
    pub fn paper_default() -> Self {
        Self {
            seed: 0,
            cloud_count: 2,
            fog_count: 48,
            device_count: 1000,
            cloud_location: GeoLocation::new(0.0, 0.0),
            cloud_ram: 16.0,
            cloud_bw: 80.0,
            cloud_cpu: 50_000.0,
            fog_gl: ValueRange::new(0.0, 500.0),
            fog_ram: ValueRange::new(2.0, 8.0),
            fog_bw: ValueRange::new(8.0, 40.0),
            fog_cpu: ValueRange::new(5_000.0, 10_000.0),
            device_gl: ValueRange::new(0.0, 500.0),
            tasks_per_device: ValueRange::new(10.0, 25.0),
            task_ram: ValueRange::new(0.1, 0.8),
            task_data: ValueRange::new(0.1, 0.2),
            task_cpu: ValueRange::new(1_000.0, 2_000.0),
            task_deadline: ValueRange::new(2_000.0, 3_000.0),
            topology_model: TopologyModel::RandomGeometric {
                radius: 150.0,
                cloud_uplinks: 3,
            },
            event_probability: 0.0,
            event_task_increase: ValueRange::new(0.10, 1.00),
            event_deadline_advance: ValueRange::new(20.0, 50.0),
            event_node_decrease: ValueRange::new(0.20, 0.50),
            event_bw_decrease: 0.50,
        }
    }

    /// Small instance for fast tests: 2 clouds, 10 fogs, 100 devices on a
    /// compact grid so event-free runs finish well inside the deadlines.
    pub fn desk_default() -> Self {
        Self {
            cloud_count: 2,
            fog_count: 10,
            device_count: 100,
            fog_gl: ValueRange::new(0.0, 120.0),
            device_gl: ValueRange::new(0.0, 120.0),
            topology_model: TopologyModel::RandomGeometric {
                radius: 60.0,
                cloud_uplinks: 2,
            },
            ..Self::paper_default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_event_probability(mut self, p: f64) -> Self {
        self.event_probability = p;
        self
    }

    fn validate(&self) -> Result<(), GenerateError> {
        let ranges = [
            ("fog_gl", self.fog_gl),
            ("fog_ram", self.fog_ram),
            ("fog_bw", self.fog_bw),
            ("fog_cpu", self.fog_cpu),
            ("device_gl", self.device_gl),
            ("tasks_per_device", self.tasks_per_device),
            ("task_ram", self.task_ram),
            ("task_data", self.task_data),
            ("task_cpu", self.task_cpu),
            ("task_deadline", self.task_deadline),
            ("event_task_increase", self.event_task_increase),
            ("event_deadline_advance", self.event_deadline_advance),
            ("event_node_decrease", self.event_node_decrease),
        ];
        for (name, r) in ranges {
            if !(r.min <= r.max) {
                return Err(GenerateError::InvalidSpec(format!(
                    "range {name} is empty: [{}, {}]",
                    r.min, r.max
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.event_probability) {
            return Err(GenerateError::InvalidSpec(format!(
                "event_probability {} outside [0,1]",
                self.event_probability
            )));
        }
        if self.device_count > 0 && self.fog_count == 0 {
            return Err(GenerateError::InvalidSpec(
                "devices need at least one fog node to act as gateway".into(),
            ));
        }
        Ok(())
    }
}

/// A fully generated environment plus the spec that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub meta: ScenarioSpec,
    pub nodes: Vec<Node>,
    pub devices: Vec<IoTDevice>,
    pub topology: Topology,
    pub events: Vec<UncertainEvent>,
}

impl Scenario {
    pub fn fog_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Fog).count()
    }

    pub fn total_tasks(&self) -> usize {
        self.devices.iter().map(|d| d.tasks.len()).sum()
    }
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("invalid scenario spec: {0}")]
    InvalidSpec(String),
    #[error("could not build a connected topology after {0} attempts")]
    Disconnected(usize),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("io error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path} at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario in {path}: {message}")]
    Invalid { path: String, message: String },
}

/// Generates the environment described by `spec`. Pure in `spec`: the same
/// spec (including its seed) always yields the identical scenario.
pub fn generate(spec: &ScenarioSpec) -> Result<Scenario, GenerateError> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);

    // Nodes: fogs first (ids 0..fog_count), then clouds.
    let mut nodes = Vec::with_capacity((spec.fog_count + spec.cloud_count) as usize);
    for i in 0..spec.fog_count {
        nodes.push(Node {
            id: NodeId(i),
            kind: NodeKind::Fog,
            location: GeoLocation::new(spec.fog_gl.sample(&mut rng), spec.fog_gl.sample(&mut rng)),
            ram: spec.fog_ram.sample(&mut rng),
            bandwidth: spec.fog_bw.sample(&mut rng),
            cpu_rate: spec.fog_cpu.sample(&mut rng),
        });
    }
    for i in 0..spec.cloud_count {
        nodes.push(Node {
            id: NodeId(spec.fog_count + i),
            kind: NodeKind::Cloud,
            location: spec.cloud_location,
            ram: spec.cloud_ram,
            bandwidth: spec.cloud_bw,
            cpu_rate: spec.cloud_cpu,
        });
    }

    // Devices, each wired to the nearest fog.
    let mut devices = Vec::with_capacity(spec.device_count as usize);
    let mut next_task = 0u64;
    for i in 0..spec.device_count {
        let location =
            GeoLocation::new(spec.device_gl.sample(&mut rng), spec.device_gl.sample(&mut rng));
        let gateway = nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Fog)
            .min_by(|a, b| {
                distance(location, a.location)
                    .total_cmp(&distance(location, b.location))
                    .then(a.id.cmp(&b.id))
            })
            .map(|n| n.id)
            .expect("validated: fog exists when devices exist");
        let task_count =
            rng.random_range(spec.tasks_per_device.min as u32..=spec.tasks_per_device.max as u32);
        let tasks = (0..task_count)
            .map(|_| {
                let t = Task {
                    id: TaskId(next_task),
                    ram_req: spec.task_ram.sample(&mut rng),
                    data_size: spec.task_data.sample(&mut rng),
                    cpu_length: spec.task_cpu.sample(&mut rng),
                    deadline: spec.task_deadline.sample(&mut rng),
                };
                next_task += 1;
                t
            })
            .collect();
        devices.push(IoTDevice {
            id: DeviceId(i),
            location,
            gateway,
            tasks,
        });
    }

    let topology = build_topology(spec, &nodes)?;
    debug_assert!(validate_topology(&topology).is_ok());

    let events = sample_events(spec, &nodes, &devices, &mut rng);

    Ok(Scenario {
        meta: spec.clone(),
        nodes,
        devices,
        topology,
        events,
    })
}

fn build_topology(spec: &ScenarioSpec, nodes: &[Node]) -> Result<Topology, GenerateError> {
    let order = nodes.len();
    let mut topo = Topology::new(order);
    match spec.topology_model {
        TopologyModel::RandomGeometric {
            radius,
            cloud_uplinks,
        } => {
            let fogs: Vec<&Node> = nodes.iter().filter(|n| n.kind == NodeKind::Fog).collect();
            for (ai, a) in fogs.iter().enumerate() {
                for b in fogs.iter().skip(ai + 1) {
                    if distance(a.location, b.location) <= radius {
                        topo.set_edge(a.id, b.id, true);
                    }
                }
            }
            for cloud in nodes.iter().filter(|n| n.kind == NodeKind::Cloud) {
                let mut by_distance: Vec<&&Node> = fogs.iter().collect();
                by_distance.sort_by(|a, b| {
                    distance(cloud.location, a.location)
                        .total_cmp(&distance(cloud.location, b.location))
                        .then(a.id.cmp(&b.id))
                });
                let take = if cloud_uplinks == 0 {
                    by_distance.len()
                } else {
                    (cloud_uplinks as usize).min(by_distance.len())
                };
                for fog in by_distance.into_iter().take(take) {
                    topo.set_edge(cloud.id, fog.id, true);
                }
            }
        }
        TopologyModel::RingOfClusters { clusters } => {
            let fogs: Vec<&Node> = nodes.iter().filter(|n| n.kind == NodeKind::Fog).collect();
            if !fogs.is_empty() {
                let g = (clusters.max(1) as usize).min(fogs.len());
                let per = fogs.len().div_ceil(g);
                let groups: Vec<&[&Node]> = fogs.chunks(per).collect();
                for group in &groups {
                    for (ai, a) in group.iter().enumerate() {
                        for b in group.iter().skip(ai + 1) {
                            topo.set_edge(a.id, b.id, true);
                        }
                    }
                }
                let heads: Vec<NodeId> = groups.iter().map(|g| g[0].id).collect();
                for (i, &head) in heads.iter().enumerate() {
                    let next = heads[(i + 1) % heads.len()];
                    topo.set_edge(head, next, true);
                }
                for cloud in nodes.iter().filter(|n| n.kind == NodeKind::Cloud) {
                    for &head in &heads {
                        topo.set_edge(cloud.id, head, true);
                    }
                }
            }
        }
    }

    // Connect any leftover components with a minimum spanning chain over
    // the geographically closest cross-component pairs.
    let mut guard = 0;
    while !topo.is_connected() {
        guard += 1;
        if guard > order {
            return Err(GenerateError::Disconnected(guard));
        }
        let components = component_labels(&topo);
        let mut best: Option<(f64, NodeId, NodeId)> = None;
        for i in 0..order {
            for j in (i + 1)..order {
                if components[i] != components[j] {
                    let d = distance(nodes[i].location, nodes[j].location);
                    let cand = (d, NodeId(i as u32), NodeId(j as u32));
                    if best.map_or(true, |b| cand.0 < b.0) {
                        best = Some(cand);
                    }
                }
            }
        }
        let (_, a, b) = best.expect("disconnected graph has a cross-component pair");
        topo.set_edge(a, b, true);
    }
    Ok(topo)
}

fn component_labels(topo: &Topology) -> Vec<usize> {
    let order = topo.order();
    let mut label = vec![usize::MAX; order];
    let mut next = 0;
    for start in 0..order {
        if label[start] != usize::MAX {
            continue;
        }
        let mut queue = std::collections::VecDeque::from([start]);
        label[start] = next;
        while let Some(i) = queue.pop_front() {
            for j in topo.neighbors(NodeId(i as u32)) {
                let j = j.0 as usize;
                if label[j] == usize::MAX {
                    label[j] = next;
                    queue.push_back(j);
                }
            }
        }
        next += 1;
    }
    label
}

/// Rough event-free makespan: total gateway-local execution time spread
/// over all nodes. Only used to place event fire times inside the run.
pub fn estimate_horizon(nodes: &[Node], devices: &[IoTDevice]) -> f64 {
    if nodes.is_empty() || devices.is_empty() {
        return 1.0;
    }
    let by_id: std::collections::BTreeMap<NodeId, &Node> =
        nodes.iter().map(|n| (n.id, n)).collect();
    let total: f64 = devices
        .iter()
        .map(|d| estimate_et(d, by_id[&d.gateway]).unwrap_or(0.0))
        .sum();
    (total / nodes.len() as f64).max(1.0)
}

fn sample_events(
    spec: &ScenarioSpec,
    nodes: &[Node],
    devices: &[IoTDevice],
    rng: &mut ChaCha12Rng,
) -> Vec<UncertainEvent> {
    let mut events = Vec::new();
    if spec.event_probability <= 0.0 {
        return events;
    }
    let horizon = 0.8 * estimate_horizon(nodes, devices);
    let mut next_id = 0u64;
    let mut push = |change: EventChange, rng: &mut ChaCha12Rng, events: &mut Vec<UncertainEvent>| {
        let fire_at = SimTime(rng.random_range(0.0..horizon).max(f64::MIN_POSITIVE));
        events.push(UncertainEvent {
            id: EventId(next_id),
            fire_at,
            change,
        });
        next_id += 1;
    };

    // Each task can involve at most one event over the run.
    for device in devices {
        for task in &device.tasks {
            if rng.random_range(0.0..1.0) >= spec.event_probability {
                continue;
            }
            if rng.random_range(0.0..1.0) < 0.5 {
                let grow = |v: f64, rng: &mut ChaCha12Rng| {
                    v * (1.0 + spec.event_task_increase.sample(rng))
                };
                let new_ram = grow(task.ram_req, rng);
                let new_data = grow(task.data_size, rng);
                let new_cpu = grow(task.cpu_length, rng);
                let advance = spec.event_deadline_advance.sample(rng);
                let new_deadline = (task.deadline - advance).max(1.0);
                push(
                    EventChange::TaskChange {
                        device: device.id,
                        task: task.id,
                        new_ram,
                        new_data,
                        new_cpu,
                        new_deadline,
                    },
                    rng,
                    &mut events,
                );
            } else {
                push(
                    EventChange::Cancellation {
                        device: device.id,
                        tasks: vec![task.id],
                    },
                    rng,
                    &mut events,
                );
            }
        }
    }

    // Each node can involve at most one event over the run.
    for node in nodes {
        if rng.random_range(0.0..1.0) >= spec.event_probability {
            continue;
        }
        if rng.random_range(0.0..1.0) < 0.5 {
            let shrink = 1.0 - spec.event_node_decrease.sample(rng);
            let ram_shrink = 1.0 - spec.event_node_decrease.sample(rng);
            push(
                EventChange::CapabilityChange {
                    node: node.id,
                    new_ram: node.ram * ram_shrink,
                    new_bw: node.bandwidth * (1.0 - spec.event_bw_decrease),
                    new_cpu: node.cpu_rate * shrink,
                },
                rng,
                &mut events,
            );
        } else {
            push(EventChange::Disconnection { node: node.id }, rng, &mut events);
        }
    }
    events
}

// ---------------------------------------------------------------------------
// Serialization: structured text with top-level keys
// meta / nodes / devices / topology / events.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TopologyFile {
    order: usize,
    edges: Vec<(u32, u32)>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    meta: ScenarioSpec,
    nodes: Vec<Node>,
    devices: Vec<IoTDevice>,
    topology: TopologyFile,
    events: Vec<UncertainEvent>,
}

/// Writes the scenario as structured text. Numbers are emitted as decimal
/// strings with full round-trip precision, so `load(save(x)) == x`.
pub fn save(scenario: &Scenario, path: &Path) -> Result<(), ScenarioError> {
    let file = ScenarioFile {
        meta: scenario.meta.clone(),
        nodes: scenario.nodes.clone(),
        devices: scenario.devices.clone(),
        topology: TopologyFile {
            order: scenario.topology.order(),
            edges: scenario.topology.edges().iter().map(|&(a, b)| (a.0, b.0)).collect(),
        },
        events: scenario.events.clone(),
    };
    let text = serde_json::to_string_pretty(&file).expect("scenario serializes");
    let mut out = std::fs::File::create(path).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })?;
    out.write_all(text.as_bytes()).map_err(|source| ScenarioError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads and validates a scenario file written by [`save`] (or by hand).
pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
    let file: ScenarioFile = serde_json::from_str(&text).map_err(|e| ScenarioError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut topology = Topology::new(file.topology.order);
    for &(a, b) in &file.topology.edges {
        if a as usize >= file.topology.order || b as usize >= file.topology.order {
            return Err(ScenarioError::Invalid {
                path: path.display().to_string(),
                message: format!("edge ({a},{b}) outside topology order {}", file.topology.order),
            });
        }
        topology.set_edge(NodeId(a), NodeId(b), true);
    }
    if file.nodes.len() != file.topology.order {
        return Err(ScenarioError::Invalid {
            path: path.display().to_string(),
            message: format!(
                "{} nodes but topology order {}",
                file.nodes.len(),
                file.topology.order
            ),
        });
    }
    let node_ids: std::collections::BTreeSet<NodeId> = file.nodes.iter().map(|n| n.id).collect();
    for device in &file.devices {
        if !node_ids.contains(&device.gateway) {
            return Err(ScenarioError::Invalid {
                path: path.display().to_string(),
                message: format!("device {} names unknown gateway {}", device.id, device.gateway),
            });
        }
    }

    Ok(Scenario {
        meta: file.meta,
        nodes: file.nodes,
        devices: file.devices,
        topology,
        events: file.events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn generate_is_deterministic_in_the_spec() {
        let spec = ScenarioSpec::desk_default().with_seed(7).with_event_probability(0.5);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_devices_means_no_devices_and_no_task_events() {
        let mut spec = ScenarioSpec::desk_default().with_event_probability(1.0);
        spec.device_count = 0;
        let s = generate(&spec).unwrap();
        assert!(s.devices.is_empty());
        assert!(s.events.iter().all(|e| matches!(
            e.change,
            EventChange::CapabilityChange { .. } | EventChange::Disconnection { .. }
        )));
    }

    #[test]
    fn generated_topology_is_valid_and_connected() {
        for seed in 0..20 {
            let s = generate(&ScenarioSpec::desk_default().with_seed(seed)).unwrap();
            assert_eq!(validate_topology(&s.topology), Ok(()));
            assert!(s.topology.is_connected(), "seed {seed} disconnected");
        }
    }

    #[test]
    fn gateways_are_nearest_fogs() {
        let s = generate(&ScenarioSpec::desk_default().with_seed(3)).unwrap();
        for d in &s.devices {
            let gw = s.nodes.iter().find(|n| n.id == d.gateway).unwrap();
            assert_eq!(gw.kind, NodeKind::Fog);
            for n in s.nodes.iter().filter(|n| n.kind == NodeKind::Fog) {
                assert!(
                    distance(d.location, gw.location) <= distance(d.location, n.location) + 1e-12
                );
            }
        }
    }

    #[test]
    fn ring_of_clusters_is_connected() {
        let mut spec = ScenarioSpec::desk_default().with_seed(11);
        spec.topology_model = TopologyModel::RingOfClusters { clusters: 3 };
        let s = generate(&spec).unwrap();
        assert!(s.topology.is_connected());
        assert_eq!(validate_topology(&s.topology), Ok(()));
    }

    #[test]
    fn save_load_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("round.scn");
        let s = generate(&ScenarioSpec::desk_default().with_seed(42).with_event_probability(0.7))
            .unwrap();
        save(&s, &path).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(s, loaded);
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.scn");
        let s = generate(&ScenarioSpec::desk_default().with_seed(1)).unwrap();
        save(&s, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        match load(&path) {
            Err(ScenarioError::Parse { line, .. }) => assert!(line > 0),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn golden_minimal_scenario_loads() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("tests/data/minimal-scenario.scn");
        let s = load(&path).unwrap();
        assert_eq!(s.nodes.len(), 3);
        assert_eq!(s.devices.len(), 1);
        assert_eq!(s.events.len(), 1);
        assert!(s.topology.has_edge(NodeId(0), NodeId(1)));
    }

    #[test]
    fn invalid_gateway_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.scn");
        let mut s = generate(&ScenarioSpec::desk_default().with_seed(1)).unwrap();
        s.devices[0].gateway = NodeId(999);
        save(&s, &path).unwrap();
        assert!(matches!(load(&path), Err(ScenarioError::Invalid { .. })));
    }

    #[test]
    fn empty_range_is_rejected() {
        let mut spec = ScenarioSpec::desk_default();
        spec.task_ram = ValueRange::new(5.0, 1.0);
        assert!(matches!(generate(&spec), Err(GenerateError::InvalidSpec(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn sampled_values_fall_in_declared_ranges(seed in 0u64..10_000) {
            let spec = ScenarioSpec::desk_default().with_seed(seed).with_event_probability(0.4);
            let s = generate(&spec).unwrap();
            for n in s.nodes.iter().filter(|n| n.kind == NodeKind::Fog) {
                prop_assert!(spec.fog_gl.contains(n.location.x));
                prop_assert!(spec.fog_gl.contains(n.location.y));
                prop_assert!(spec.fog_ram.contains(n.ram));
                prop_assert!(spec.fog_bw.contains(n.bandwidth));
                prop_assert!(spec.fog_cpu.contains(n.cpu_rate));
            }
            for d in &s.devices {
                prop_assert!(spec.device_gl.contains(d.location.x));
                let count = d.tasks.len() as f64;
                prop_assert!(spec.tasks_per_device.contains(count));
                for t in &d.tasks {
                    prop_assert!(spec.task_ram.contains(t.ram_req));
                    prop_assert!(spec.task_data.contains(t.data_size));
                    prop_assert!(spec.task_cpu.contains(t.cpu_length));
                    prop_assert!(spec.task_deadline.contains(t.deadline));
                }
            }
            for e in &s.events {
                prop_assert!(e.fire_at.seconds() > 0.0);
            }
        }
    }
}

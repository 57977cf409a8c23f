//! Domain types shared by every other module: geometry, tasks, devices,
//! nodes, and the blackboard network topology.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Identifier of a fog or cloud node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

/// Identifier of an IoT device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DeviceId(pub u32);

/// Identifier of a single task, unique across the whole scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}", self.0)
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// A point on the dimensionless 2-D grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoLocation {
    pub x: f64,
    pub y: f64,
}

impl GeoLocation {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Euclidean distance between two grid points.
pub fn distance(a: GeoLocation, b: GeoLocation) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    (dx * dx + dy * dy).sqrt()
}

/// One unit of work generated by an IoT device.
///
/// `ram_req` and `data_size` are in GB, `cpu_length` in million
/// instructions, `deadline` an absolute simulated time in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub ram_req: f64,
    pub data_size: f64,
    pub cpu_length: f64,
    pub deadline: f64,
}

/// An IoT device: its grid location, the fog node it is wired to, and the
/// batch of tasks it wants executed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoTDevice {
    pub id: DeviceId,
    pub location: GeoLocation,
    /// The directly connected fog node; BFS root when ranking nodes.
    pub gateway: NodeId,
    pub tasks: Vec<Task>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Fog,
    Cloud,
}

/// A fog or cloud compute resource.
///
/// `ram` in GB, `bandwidth` in Gb/s, `cpu_rate` in MIPS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub location: GeoLocation,
    pub ram: f64,
    pub bandwidth: f64,
    pub cpu_rate: f64,
}

/// Undirected node connectivity graph, stored as a dense boolean adjacency
/// matrix. Values are {0,1} by construction; symmetry and a zero diagonal
/// are maintained by the mutators and checked by [`validate_topology`].
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    order: usize,
    adjacency: Vec<bool>,
}

/// First violated cell of a topology invariant, as reported by
/// [`validate_topology`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TopologyViolation {
    #[error("adjacency is asymmetric at ({i},{j})")]
    Asymmetric { i: usize, j: usize },
    #[error("nonzero diagonal at ({i},{i})")]
    NonzeroDiagonal { i: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
}

impl Topology {
    /// An edgeless topology over `order` nodes.
    pub fn new(order: usize) -> Self {
        Self {
            order,
            adjacency: vec![false; order * order],
        }
    }

    /// Builds a topology from undirected edge pairs.
    pub fn from_edges(order: usize, edges: &[(NodeId, NodeId)]) -> Self {
        let mut t = Self::new(order);
        for &(a, b) in edges {
            t.set_edge(a, b, true);
        }
        t
    }

    /// Builds directly from a row-major boolean matrix, without enforcing
    /// the invariants. Intended for tests and [`validate_topology`] inputs.
    pub fn from_matrix(rows: Vec<Vec<bool>>) -> Self {
        let order = rows.len();
        let mut adjacency = Vec::with_capacity(order * order);
        for row in &rows {
            assert_eq!(row.len(), order, "adjacency matrix must be square");
            adjacency.extend_from_slice(row);
        }
        Self { order, adjacency }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.order + j
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency[self.idx(a.0 as usize, b.0 as usize)]
    }

    /// Sets or clears the undirected edge a–b. Self-loops are ignored so
    /// the diagonal stays zero.
    pub fn set_edge(&mut self, a: NodeId, b: NodeId, present: bool) {
        if a == b {
            return;
        }
        let ij = self.idx(a.0 as usize, b.0 as usize);
        let ji = self.idx(b.0 as usize, a.0 as usize);
        self.adjacency[ij] = present;
        self.adjacency[ji] = present;
    }

    /// Zeroes the target's row and column, symmetrically.
    pub fn disconnect_node(&mut self, node: NodeId) {
        let n = node.0 as usize;
        for other in 0..self.order {
            let ij = self.idx(n, other);
            let ji = self.idx(other, n);
            self.adjacency[ij] = false;
            self.adjacency[ji] = false;
        }
    }

    /// Direct neighbors of `node`, in ascending id order.
    pub fn neighbors(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let n = node.0 as usize;
        (0..self.order)
            .filter(move |&j| self.adjacency[n * self.order + j])
            .map(|j| NodeId(j as u32))
    }

    /// All undirected edges (i < j), in lexicographic order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for i in 0..self.order {
            for j in (i + 1)..self.order {
                if self.adjacency[self.idx(i, j)] {
                    out.push((NodeId(i as u32), NodeId(j as u32)));
                }
            }
        }
        out
    }

    fn contains(&self, node: NodeId) -> bool {
        (node.0 as usize) < self.order
    }

    /// True when every node can reach every other node.
    pub fn is_connected(&self) -> bool {
        if self.order <= 1 {
            return true;
        }
        let mut seen = vec![false; self.order];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for j in 0..self.order {
                if self.adjacency[self.idx(i, j)] && !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.order
    }
}

/// Checks the three topology invariants: {0,1} values (structural with the
/// boolean representation), symmetry, and a zero diagonal. Reports the
/// first violated cell in row-major scan order.
pub fn validate_topology(t: &Topology) -> Result<(), TopologyViolation> {
    for i in 0..t.order {
        for j in 0..t.order {
            if i == j {
                if t.adjacency[t.idx(i, i)] {
                    return Err(TopologyViolation::NonzeroDiagonal { i });
                }
            } else if t.adjacency[t.idx(i, j)] != t.adjacency[t.idx(j, i)] {
                return Err(TopologyViolation::Asymmetric { i, j });
            }
        }
    }
    Ok(())
}

/// Minimum number of edges on any path between two nodes via BFS.
/// Returns `Ok(None)` when no path exists, 0 when `from == to`.
pub fn shortest_hops(
    t: &Topology,
    from: NodeId,
    to: NodeId,
) -> Result<Option<u32>, TopologyError> {
    if !t.contains(from) {
        return Err(TopologyError::UnknownNode(from));
    }
    if !t.contains(to) {
        return Err(TopologyError::UnknownNode(to));
    }
    if from == to {
        return Ok(Some(0));
    }
    let mut depth = vec![u32::MAX; t.order];
    let mut queue = std::collections::VecDeque::from([from.0 as usize]);
    depth[from.0 as usize] = 0;
    while let Some(i) = queue.pop_front() {
        let d = depth[i];
        for j in 0..t.order {
            if t.adjacency[t.idx(i, j)] && depth[j] == u32::MAX {
                if j == to.0 as usize {
                    return Ok(Some(d + 1));
                }
                depth[j] = d + 1;
                queue.push_back(j);
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn loc(x: f64, y: f64) -> GeoLocation {
        GeoLocation::new(x, y)
    }

    #[test]
    fn distance_of_identical_points_is_zero() {
        assert_eq!(distance(loc(0.0, 0.0), loc(0.0, 0.0)), 0.0);
    }

    #[test]
    fn distance_of_3_4_5_triangle() {
        assert_eq!(distance(loc(0.0, 0.0), loc(3.0, 4.0)), 5.0);
    }

    #[test]
    fn distance_hand_evaluated() {
        // sqrt((4-1)^2 + (6-2)^2) = sqrt(9 + 16) = 5
        assert!((distance(loc(1.0, 2.0), loc(4.0, 6.0)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn validate_accepts_symmetric_zero_diagonal() {
        let t = Topology::from_matrix(vec![vec![false, true], vec![true, false]]);
        assert_eq!(validate_topology(&t), Ok(()));
    }

    #[test]
    fn validate_reports_asymmetry() {
        let t = Topology::from_matrix(vec![vec![false, true], vec![false, false]]);
        assert_eq!(
            validate_topology(&t),
            Err(TopologyViolation::Asymmetric { i: 0, j: 1 })
        );
    }

    #[test]
    fn validate_reports_nonzero_diagonal() {
        let t = Topology::from_matrix(vec![vec![true]]);
        assert_eq!(
            validate_topology(&t),
            Err(TopologyViolation::NonzeroDiagonal { i: 0 })
        );
    }

    #[test]
    fn hops_to_self_is_zero() {
        let t = Topology::from_edges(3, &[(NodeId(0), NodeId(1))]);
        assert_eq!(shortest_hops(&t, NodeId(2), NodeId(2)), Ok(Some(0)));
    }

    #[test]
    fn hops_on_line_graph() {
        // 0 - 1 - 2, brute-force enumeration of the 3-node line says the
        // only simple path 0..2 has two edges.
        let t = Topology::from_edges(3, &[(NodeId(0), NodeId(1)), (NodeId(1), NodeId(2))]);
        assert_eq!(shortest_hops(&t, NodeId(0), NodeId(2)), Ok(Some(2)));
    }

    #[test]
    fn hops_of_disconnected_pair_is_unreachable() {
        let t = Topology::from_edges(3, &[(NodeId(0), NodeId(1))]);
        assert_eq!(shortest_hops(&t, NodeId(0), NodeId(2)), Ok(None));
    }

    #[test]
    fn hops_rejects_unknown_id() {
        let t = Topology::new(2);
        assert_eq!(
            shortest_hops(&t, NodeId(0), NodeId(5)),
            Err(TopologyError::UnknownNode(NodeId(5)))
        );
    }

    #[test]
    fn disconnect_zeroes_row_and_column() {
        let mut t = Topology::from_edges(
            3,
            &[(NodeId(0), NodeId(1)), (NodeId(1), NodeId(2)), (NodeId(0), NodeId(2))],
        );
        t.disconnect_node(NodeId(1));
        assert!(!t.has_edge(NodeId(0), NodeId(1)));
        assert!(!t.has_edge(NodeId(1), NodeId(2)));
        assert!(!t.has_edge(NodeId(2), NodeId(1)));
        assert!(t.has_edge(NodeId(0), NodeId(2)));
        assert_eq!(validate_topology(&t), Ok(()));
    }

    fn arb_point() -> impl Strategy<Value = GeoLocation> {
        (-1000.0..1000.0f64, -1000.0..1000.0f64).prop_map(|(x, y)| GeoLocation::new(x, y))
    }

    fn arb_topology(max_order: usize) -> impl Strategy<Value = Topology> {
        (2..=max_order).prop_flat_map(|order| {
            proptest::collection::vec(proptest::bool::ANY, order * order / 2 + order)
                .prop_map(move |bits| {
                    let mut t = Topology::new(order);
                    let mut k = 0;
                    for i in 0..order {
                        for j in (i + 1)..order {
                            if bits[k % bits.len()] {
                                t.set_edge(NodeId(i as u32), NodeId(j as u32), true);
                            }
                            k += 1;
                        }
                    }
                    t
                })
        })
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_and_nonnegative(a in arb_point(), b in arb_point()) {
            let d = distance(a, b);
            prop_assert!(d >= 0.0);
            prop_assert_eq!(d, distance(b, a));
        }

        #[test]
        fn distance_triangle_inequality(a in arb_point(), b in arb_point(), c in arb_point()) {
            prop_assert!(distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9);
        }

        #[test]
        fn hops_symmetric_over_all_pairs(t in arb_topology(8)) {
            let n = t.order();
            for i in 0..n {
                for j in 0..n {
                    let ij = shortest_hops(&t, NodeId(i as u32), NodeId(j as u32)).unwrap();
                    let ji = shortest_hops(&t, NodeId(j as u32), NodeId(i as u32)).unwrap();
                    prop_assert_eq!(ij, ji);
                }
            }
        }

        #[test]
        fn removing_edge_never_shortens_paths(t in arb_topology(8)) {
            let edges = t.edges();
            prop_assume!(!edges.is_empty());
            let (a, b) = edges[0];
            let mut cut = t.clone();
            cut.set_edge(a, b, false);
            let n = t.order();
            for i in 0..n {
                for j in 0..n {
                    let before = shortest_hops(&t, NodeId(i as u32), NodeId(j as u32)).unwrap();
                    let after = shortest_hops(&cut, NodeId(i as u32), NodeId(j as u32)).unwrap();
                    match (before, after) {
                        (Some(x), Some(y)) => prop_assert!(y >= x),
                        (Some(_), None) => {}
                        (None, Some(_)) => prop_assert!(false, "edge removal created a path"),
                        (None, None) => {}
                    }
                }
            }
        }
    }
}

//! Undirected communication topology with a fixed edge orientation.
//!
//! Every undirected edge `{a, b}` is stored once, oriented so that the tail is
//! the lower-numbered agent. The edge order given at construction is kept for
//! every stacked quantity (incidence columns, error vectors, trace columns).

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, VecDeque};
use std::fmt;

/// Zero-based agent index.
pub type AgentId = usize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("edge {edge} connects agent {agent} to itself")]
    SelfLoop { edge: usize, agent: AgentId },
    #[error("edge {edge} duplicates edge {first} ({a}, {b})")]
    DuplicateEdge { edge: usize, first: usize, a: AgentId, b: AgentId },
    #[error("edge {edge} references agent {agent} but there are only {n_agents} agents")]
    UnknownAgent { edge: usize, agent: AgentId, n_agents: usize },
    #[error("edge {edge}: infeasible formation, need d_col < d_des < d_con (got {d_col} < {d_des} < {d_con})")]
    InfeasibleFormation { edge: usize, d_col: f64, d_des: f64, d_con: f64 },
    #[error("agent count must be positive")]
    NoAgents,
    #[error("expected {expected} positions, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("agent {agent}: sensing range {sensing} must exceed the largest radius sum {needed}")]
    SensingTooShort { agent: AgentId, sensing: f64, needed: f64 },
}

/// One canonically oriented edge: `tail < head`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub tail: AgentId,
    pub head: AgentId,
}

impl Edge {
    /// The other endpoint, or `None` if `agent` is not on this edge.
    pub fn other(&self, agent: AgentId) -> Option<AgentId> {
        if agent == self.tail {
            Some(self.head)
        } else if agent == self.head {
            Some(self.tail)
        } else {
            None
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Displayed with the one-based ids used in scenario files.
        write!(f, "{{{},{}}}", self.tail + 1, self.head + 1)
    }
}

/// Whether an agent sits at the tail or the head of an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeRole {
    Tail,
    Head,
}

impl EdgeRole {
    /// The incidence-matrix entry for this role.
    pub fn sign(self) -> f64 {
        match self {
            EdgeRole::Tail => 1.0,
            EdgeRole::Head => -1.0,
        }
    }
}

/// Vertices and oriented edges, without any formation targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    n_agents: usize,
    edges: Vec<Edge>,
}

impl Topology {
    /// Builds a topology from unordered pairs. Each pair is reoriented so the
    /// lower index is the tail; the returned flags say which pairs were flipped.
    pub fn new(n_agents: usize, pairs: &[(AgentId, AgentId)]) -> Result<Self, GraphError> {
        Self::with_flips(n_agents, pairs).map(|(t, _)| t)
    }

    fn with_flips(
        n_agents: usize,
        pairs: &[(AgentId, AgentId)],
    ) -> Result<(Self, Vec<bool>), GraphError> {
        if n_agents == 0 {
            return Err(GraphError::NoAgents);
        }
        let mut seen = std::collections::BTreeMap::new();
        let mut edges = Vec::with_capacity(pairs.len());
        let mut flips = Vec::with_capacity(pairs.len());
        for (k, &(a, b)) in pairs.iter().enumerate() {
            for agent in [a, b] {
                if agent >= n_agents {
                    return Err(GraphError::UnknownAgent { edge: k, agent, n_agents });
                }
            }
            if a == b {
                return Err(GraphError::SelfLoop { edge: k, agent: a });
            }
            let (tail, head) = if a < b { (a, b) } else { (b, a) };
            if let Some(&first) = seen.get(&(tail, head)) {
                return Err(GraphError::DuplicateEdge { edge: k, first, a: tail, b: head });
            }
            seen.insert((tail, head), k);
            edges.push(Edge { tail, head });
            flips.push(a > b);
        }
        Ok((Topology { n_agents, edges }, flips))
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edges incident to `agent`, with the agent's role on each, in edge order.
    pub fn incident(&self, agent: AgentId) -> impl Iterator<Item = (usize, EdgeRole)> + '_ {
        self.edges.iter().enumerate().filter_map(move |(k, e)| {
            if e.tail == agent {
                Some((k, EdgeRole::Tail))
            } else if e.head == agent {
                Some((k, EdgeRole::Head))
            } else {
                None
            }
        })
    }

    /// Neighbor set of `agent`.
    pub fn neighbors(&self, agent: AgentId) -> BTreeSet<AgentId> {
        self.incident(agent)
            .filter_map(|(k, _)| self.edges[k].other(agent))
            .collect()
    }

    /// The N×M incidence matrix: +1 at the tail row, −1 at the head row.
    pub fn incidence_matrix(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n_agents, self.edges.len());
        for (k, e) in self.edges.iter().enumerate() {
            d[(e.tail, k)] = 1.0;
            d[(e.head, k)] = -1.0;
        }
        d
    }

    /// The M×M edge Laplacian `Dᵀ D`. Positive definite exactly when the graph
    /// is a forest; in particular on every tree.
    pub fn edge_laplacian(&self) -> DMatrix<f64> {
        let d = self.incidence_matrix();
        d.transpose() * d
    }

    pub fn is_connected(&self) -> bool {
        let mut visited = vec![false; self.n_agents];
        let mut queue = VecDeque::from([0]);
        visited[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for j in self.neighbors(i) {
                if !visited[j] {
                    visited[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n_agents
    }

    /// True iff connected with exactly N − 1 edges.
    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.n_agents && self.is_connected()
    }

    /// Stacks `p_tail − p_head` for every edge, in edge order.
    pub fn edge_differences(&self, values: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        self.edges
            .iter()
            .map(|e| values[e.tail] - values[e.head])
            .collect()
    }
}

/// Desired geometry and admissible distance band of one edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeTarget {
    /// Desired inter-agent distance (m).
    pub d_des: f64,
    /// Desired value of `q_tail − q_head` (rad).
    pub q_des: [f64; 3],
    /// Collision distance (m).
    pub d_col: f64,
    /// Connectivity distance (m).
    pub d_con: f64,
}

/// An edge as written by a user: arbitrary endpoint order, `q_des` meaning
/// the desired `q_a − q_b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSpec {
    pub a: AgentId,
    pub b: AgentId,
    pub d_des: f64,
    pub q_des: [f64; 3],
    pub d_col: f64,
    pub d_con: f64,
}

/// Topology plus per-edge formation targets. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationGraph {
    topology: Topology,
    targets: Vec<EdgeTarget>,
}

impl FormationGraph {
    pub fn new(n_agents: usize, specs: &[EdgeSpec]) -> Result<Self, GraphError> {
        let pairs: Vec<_> = specs.iter().map(|s| (s.a, s.b)).collect();
        let (topology, flips) = Topology::with_flips(n_agents, &pairs)?;
        let mut targets = Vec::with_capacity(specs.len());
        for (k, (s, flipped)) in specs.iter().zip(flips).enumerate() {
            if !(s.d_col < s.d_des && s.d_des < s.d_con) {
                return Err(GraphError::InfeasibleFormation {
                    edge: k,
                    d_col: s.d_col,
                    d_des: s.d_des,
                    d_con: s.d_con,
                });
            }
            let q_des = if flipped { s.q_des.map(|x| -x) } else { s.q_des };
            targets.push(EdgeTarget { d_des: s.d_des, q_des, d_col: s.d_col, d_con: s.d_con });
        }
        Ok(FormationGraph { topology, targets })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn n_agents(&self) -> usize {
        self.topology.n_agents
    }

    pub fn n_edges(&self) -> usize {
        self.topology.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.topology.edges
    }

    pub fn targets(&self) -> &[EdgeTarget] {
        &self.targets
    }

    pub fn target(&self, k: usize) -> &EdgeTarget {
        &self.targets[k]
    }

    pub fn incidence_matrix(&self) -> DMatrix<f64> {
        self.topology.incidence_matrix()
    }

    pub fn edge_laplacian(&self) -> DMatrix<f64> {
        self.topology.edge_laplacian()
    }

    pub fn is_tree(&self) -> bool {
        self.topology.is_tree()
    }

    /// Checks that every neighbor pair starts strictly inside `(d_col, d_con)`.
    pub fn validate_initial(&self, positions: &[Vector3<f64>]) -> Result<InitialReport, GraphError> {
        if positions.len() != self.n_agents() {
            return Err(GraphError::LengthMismatch {
                expected: self.n_agents(),
                got: positions.len(),
            });
        }
        let edges = self
            .edges()
            .iter()
            .zip(&self.targets)
            .enumerate()
            .map(|(k, (&edge, t))| {
                let distance = (positions[edge.tail] - positions[edge.head]).norm();
                EdgeCheck {
                    index: k,
                    edge,
                    distance,
                    d_col: t.d_col,
                    d_con: t.d_con,
                    passed: t.d_col < distance && distance < t.d_con,
                }
            })
            .collect();
        Ok(InitialReport { edges })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCheck {
    pub index: usize,
    pub edge: Edge,
    pub distance: f64,
    pub d_col: f64,
    pub d_con: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialReport {
    pub edges: Vec<EdgeCheck>,
}

impl InitialReport {
    pub fn passed(&self) -> bool {
        self.edges.iter().all(|e| e.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &EdgeCheck> {
        self.edges.iter().filter(|e| !e.passed)
    }
}

/// Physical size and sensing capability of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentGeometry {
    /// Radius of the bounding sphere (m).
    pub radius: f64,
    /// Sensing range (m).
    pub sensing: f64,
}

impl AgentGeometry {
    /// Every sensing range must exceed the largest pairwise radius sum.
    pub fn validate_all(agents: &[AgentGeometry]) -> Result<(), GraphError> {
        let mut radii: Vec<f64> = agents.iter().map(|a| a.radius).collect();
        radii.sort_by(f64::total_cmp);
        let needed = match radii.as_slice() {
            [.., a, b] => a + b,
            _ => return Ok(()),
        };
        for (agent, g) in agents.iter().enumerate() {
            if g.sensing <= needed {
                return Err(GraphError::SensingTooShort { agent, sensing: g.sensing, needed });
            }
        }
        Ok(())
    }

    /// Collision distance of a pair: the sum of radii.
    pub fn collision_distance(a: &AgentGeometry, b: &AgentGeometry) -> f64 {
        a.radius + b.radius
    }

    /// Connectivity distance of a pair: the shorter sensing range.
    pub fn connectivity_distance(a: &AgentGeometry, b: &AgentGeometry) -> f64 {
        a.sensing.min(b.sensing)
    }
}

//! The two-stage decentralized control law.
//!
//! Stage one turns edge errors into a reference velocity for every agent:
//!
//! ```text
//! v_des,i = −J_i⁻¹ [ Σ_k 2 (ρ^p_k)⁻¹ r^p_k ε^p_k (p_i − p_j)
//!                    Σ_k ±(ρ^q_k)⁻¹ r^q_k ε^q_k ]
//! ```
//!
//! where the orientation term carries `+` when `i` is the tail of edge `k` and
//! `−` when it is the head. Stage two drives the velocity error through the
//! same barrier construction:
//!
//! ```text
//! u_i = −γ_i (ρ^v_i)⁻¹ r^v_i ε^v_i
//! ```
//!
//! Nothing here takes a plant model. A controller sees agent states, the
//! per-edge design constants and the clock.

use crate::dynamics::{euler_rate_jacobian, euler_rate_jacobian_inverse, AgentState, DynamicsError};
use crate::envelopes::{
    barrier_p, barrier_sym, normalize, DistanceEnvelope, EnvelopeError, ErrorFamily, ExpPerf,
    SymmetricEnvelope,
};
use crate::graph::{AgentId, EdgeRole, EdgeTarget, FormationGraph};
use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector3, Vector6};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("{family} error left its envelope at t = {t} ({subject} {index}, component {component}): ξ = {value} not in ({lower}, {upper})")]
    OutOfEnvelope {
        family: ErrorFamily,
        /// "edge" or "agent", matching `family`.
        subject: &'static str,
        index: usize,
        component: usize,
        t: f64,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid controller configuration: {0}")]
    Config(String),
}

impl ControlError {
    fn envelope(family: ErrorFamily, index: usize, component: usize, t: f64, err: EnvelopeError) -> Self {
        match err {
            EnvelopeError::OutOfEnvelope { value, lower, upper } => ControlError::OutOfEnvelope {
                family,
                subject: if family == ErrorFamily::Velocity { "agent" } else { "edge" },
                index,
                component,
                t,
                value,
                lower,
                upper,
            },
            other => ControlError::Config(other.to_string()),
        }
    }
}

/// Per-edge design constants handed to both endpoints ahead of time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeDesign {
    pub target: EdgeTarget,
    pub distance: DistanceEnvelope,
    pub orientation: SymmetricEnvelope,
}

/// Squared-distance and relative-orientation errors of every edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeErrors {
    /// `‖p_tail − p_head‖² − d_des²` (m²).
    pub distance: Vec<f64>,
    /// `(q_tail − q_head) − q_des` (rad).
    pub orientation: Vec<Vector3<f64>>,
}

fn edge_error(target: &EdgeTarget, tail_minus_head_p: &Vector3<f64>, tail_minus_head_q: &Vector3<f64>) -> (f64, Vector3<f64>) {
    let e_p = tail_minus_head_p.norm_squared() - target.d_des * target.d_des;
    let e_q = tail_minus_head_q - Vector3::from(target.q_des);
    (e_p, e_q)
}

pub fn edge_errors(g: &FormationGraph, states: &[AgentState]) -> EdgeErrors {
    let (distance, orientation) = g
        .edges()
        .iter()
        .zip(g.targets())
        .map(|(e, target)| {
            let (a, b) = (&states[e.tail], &states[e.head]);
            edge_error(target, &(a.p - b.p), &(a.q - b.q))
        })
        .unzip();
    EdgeErrors { distance, orientation }
}

/// The M×3M block matrix whose row `k` holds `2 (p_tail − p_head)ᵀ` in block `k`.
pub fn f_p_matrix(g: &FormationGraph, states: &[AgentState]) -> DMatrix<f64> {
    let m = g.n_edges();
    let mut f = DMatrix::zeros(m, 3 * m);
    for (k, e) in g.edges().iter().enumerate() {
        let diff = states[e.tail].p - states[e.head].p;
        for c in 0..3 {
            f[(k, 3 * k + c)] = 2.0 * diff[c];
        }
    }
    f
}

/// What agent `i` knows about one of its neighbors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborLink {
    /// Index of the shared edge.
    pub edge: usize,
    /// Role of the *observing* agent on that edge.
    pub role: EdgeRole,
    /// `p_i − p_j`.
    pub relative_position: Vector3<f64>,
    /// `q_i − q_j`.
    pub relative_orientation: Vector3<f64>,
}

/// Builds agent `i`'s neighbor links from the true states.
pub fn local_links(g: &FormationGraph, states: &[AgentState], agent: AgentId) -> Vec<NeighborLink> {
    g.topology()
        .incident(agent)
        .map(|(k, role)| {
            let j = g.edges()[k].other(agent).expect("incident edge");
            NeighborLink {
                edge: k,
                role,
                relative_position: states[agent].p - states[j].p,
                relative_orientation: states[agent].q - states[j].q,
            }
        })
        .collect()
}

/// Normalized and transformed quantities of one edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeTerms {
    pub e_p: f64,
    pub e_q: Vector3<f64>,
    pub rho_p: f64,
    pub rho_q: f64,
    pub xi_p: f64,
    pub xi_q: Vector3<f64>,
    pub eps_p: f64,
    pub eps_q: Vector3<f64>,
    pub r_p: f64,
    /// Diagonal of `r^q`.
    pub r_q: Vector3<f64>,
}

/// Evaluates one edge from its errors; fails if either error is outside its envelope.
pub fn edge_terms(edge: usize, e_p: f64, e_q: Vector3<f64>, design: &EdgeDesign, t: f64) -> Result<EdgeTerms, ControlError> {
    let rho_p = design.distance.rho.value(t);
    let rho_q = design.orientation.bound(t);
    let xi_p = normalize(e_p, rho_p);
    let xi_q = normalize(e_q, rho_q);
    let (eps_p, r_p) = barrier_p(xi_p, &design.distance)
        .map_err(|err| ControlError::envelope(ErrorFamily::Distance, edge, 0, t, err))?;
    let (eps_q, r_q) = barrier_sym(&xi_q).map_err(|err| {
        let component = xi_q.iter().position(|x| !(x.abs() < 1.0)).unwrap_or(0);
        ControlError::envelope(ErrorFamily::Orientation, edge, component, t, err)
    })?;
    Ok(EdgeTerms { e_p, e_q, rho_p, rho_q, xi_p, xi_q, eps_p, eps_q, r_p, r_q })
}

/// Stage-one reference velocity of a single agent.
///
/// Only the agent's own state, its neighbor links and the design of the
/// incident edges enter; `design` is indexed by edge.
pub fn reference_velocity(
    own: &AgentState,
    links: &[NeighborLink],
    design: &[EdgeDesign],
    t: f64,
) -> Result<Vector6<f64>, ControlError> {
    let mut translational = Vector3::zeros();
    let mut rotational = Vector3::zeros();
    for link in links {
        let d = &design[link.edge];
        let sign = link.role.sign();
        // errors are defined tail-minus-head; flip the relative pose for the head
        let (e_p, e_q) = edge_error(&d.target, &link.relative_position, &(sign * link.relative_orientation));
        let terms = edge_terms(link.edge, e_p, e_q, d, t)?;
        translational += (2.0 * terms.r_p * terms.eps_p / terms.rho_p) * link.relative_position;
        rotational += sign * terms.r_q.component_mul(&terms.eps_q) / terms.rho_q;
    }
    let jq_inv = euler_rate_jacobian_inverse(&own.q)?;
    let omega = -(jq_inv * rotational);
    Ok(Vector6::new(
        -translational[0],
        -translational[1],
        -translational[2],
        omega[0],
        omega[1],
        omega[2],
    ))
}

/// The same reference velocities assembled from stacked matrices,
/// `−J̲⁻¹ D̄ F̄_pᵀ r ρ⁻¹ ε`. Returned in per-agent order `[v_des,1; …; v_des,N]`.
///
/// This exists for cross-checking [`reference_velocity`]; the simulator never
/// calls it.
pub fn reference_velocity_stacked(
    g: &FormationGraph,
    states: &[AgentState],
    design: &[EdgeDesign],
    t: f64,
) -> Result<DVector<f64>, ControlError> {
    let (n, m) = (g.n_agents(), g.n_edges());
    let errors = edge_errors(g, states);

    // r ρ⁻¹ ε, in the stack order [ε^p_1..ε^p_M, ε^q_1..ε^q_M]
    let mut weighted = DVector::zeros(4 * m);
    for k in 0..m {
        let terms = edge_terms(k, errors.distance[k], errors.orientation[k], &design[k], t)?;
        weighted[k] = terms.r_p * terms.eps_p / terms.rho_p;
        for c in 0..3 {
            weighted[m + 3 * k + c] = terms.r_q[c] * terms.eps_q[c] / terms.rho_q;
        }
    }

    let mut f_bar = DMatrix::zeros(4 * m, 6 * m);
    f_bar.view_mut((0, 0), (m, 3 * m)).copy_from(&f_p_matrix(g, states));
    f_bar.view_mut((m, 3 * m), (3 * m, 3 * m)).fill_with_identity();

    let d_kron = g.incidence_matrix().kronecker(&DMatrix::<f64>::identity(3, 3));
    let mut d_bar = DMatrix::zeros(6 * n, 6 * m);
    d_bar.view_mut((0, 0), (3 * n, 3 * m)).copy_from(&d_kron);
    d_bar.view_mut((3 * n, 3 * m), (3 * n, 3 * m)).copy_from(&d_kron);

    let mut j_bar = DMatrix::identity(6 * n, 6 * n);
    for (i, s) in states.iter().enumerate() {
        let jq = euler_rate_jacobian(&s.q)?;
        j_bar.view_mut((3 * n + 3 * i, 3 * n + 3 * i), (3, 3)).copy_from(&jq);
    }
    let j_inv = j_bar
        .try_inverse()
        .ok_or(ControlError::Config("stacked Jacobian is singular".into()))?;

    // [ṗ_des,1..ṗ_des,N, ω_des,1..ω_des,N]
    let stacked = -(j_inv * d_bar * f_bar.transpose() * weighted);
    let mut per_agent = DVector::zeros(6 * n);
    for i in 0..n {
        for c in 0..3 {
            per_agent[6 * i + c] = stacked[3 * i + c];
            per_agent[6 * i + 3 + c] = stacked[3 * n + 3 * i + c];
        }
    }
    Ok(per_agent)
}

/// `e^v = v − v_des`.
pub fn velocity_error(state: &AgentState, v_des: &Vector6<f64>) -> Vector6<f64> {
    state.v - v_des
}

/// Positive per-agent gains `γ_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    gamma: Vec<f64>,
}

impl Gains {
    pub fn new(gamma: Vec<f64>) -> Result<Self, ControlError> {
        if let Some((i, g)) = gamma.iter().enumerate().find(|(_, g)| !(**g > 0.0 && g.is_finite())) {
            return Err(ControlError::Config(format!("gain of agent {} must be positive, got {g}", i + 1)));
        }
        Ok(Gains { gamma })
    }

    pub fn uniform(gamma: f64, n_agents: usize) -> Result<Self, ControlError> {
        Self::new(vec![gamma; n_agents])
    }

    pub fn gamma(&self, agent: AgentId) -> f64 {
        self.gamma[agent]
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }
}

/// Stage-two force/torque: `u = −γ (ρ^v)⁻¹ r^v(ξ^v) ε^v(ξ^v)`.
pub fn control_input(xi_v: &Vector6<f64>, rho_v: &Vector6<f64>, gamma: f64) -> Result<Vector6<f64>, EnvelopeError> {
    let (eps, r) = barrier_sym(xi_v)?;
    Ok(-gamma * r.component_mul(&eps).component_div(rho_v))
}

/// `P = F̄_p D̄ᵀ D̄ F̄_pᵀ`, the 4M×4M matrix governing the edge-error descent.
pub fn p_matrix(g: &FormationGraph, states: &[AgentState]) -> DMatrix<f64> {
    let m = g.n_edges();
    let f_p = f_p_matrix(g, states);
    let l_kron = g.edge_laplacian().kronecker(&DMatrix::<f64>::identity(3, 3));
    let mut p = DMatrix::zeros(4 * m, 4 * m);
    p.view_mut((0, 0), (m, m)).copy_from(&(&f_p * &l_kron * f_p.transpose()));
    p.view_mut((m, m), (3 * m, 3 * m)).copy_from(&l_kron);
    p
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(sym: &DMatrix<f64>) -> f64 {
    if sym.is_empty() {
        return f64::INFINITY;
    }
    SymmetricEigen::new(sym.clone()).eigenvalues.min()
}

/// How the six velocity envelopes of each agent are sized at `t = 0`:
/// `ρ^v_0 = scale·|e^v(0)| + offset` componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityEnvelopeRule {
    pub scale: f64,
    pub offset: f64,
    pub rho_inf: f64,
    pub l: f64,
}

impl Default for VelocityEnvelopeRule {
    fn default() -> Self {
        VelocityEnvelopeRule { scale: 2.0, offset: 0.5, rho_inf: 0.1, l: 1.0 }
    }
}

/// Stage-two view of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentTerms {
    pub v_des: Vector6<f64>,
    pub e_v: Vector6<f64>,
    pub rho_v: Vector6<f64>,
    pub xi_v: Vector6<f64>,
    pub eps_v: Vector6<f64>,
    /// Diagonal of `r^v`.
    pub r_v: Vector6<f64>,
    pub u: Vector6<f64>,
}

/// Every intermediate signal of one controller evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlFrame {
    pub t: f64,
    pub edges: Vec<EdgeTerms>,
    pub agents: Vec<AgentTerms>,
}

impl ControlFrame {
    pub fn inputs(&self) -> Vec<Vector6<f64>> {
        self.agents.iter().map(|a| a.u).collect()
    }
}

/// The full decentralized controller for a formation.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationController {
    graph: FormationGraph,
    design: Vec<EdgeDesign>,
    velocity: Vec<[ExpPerf; 6]>,
    gains: Gains,
}

impl FormationController {
    pub fn new(
        graph: FormationGraph,
        design: Vec<EdgeDesign>,
        velocity: Vec<[ExpPerf; 6]>,
        gains: Gains,
    ) -> Result<Self, ControlError> {
        if design.len() != graph.n_edges() {
            return Err(ControlError::Config(format!(
                "{} edge designs for {} edges",
                design.len(),
                graph.n_edges()
            )));
        }
        if velocity.len() != graph.n_agents() || gains.len() != graph.n_agents() {
            return Err(ControlError::Config(format!(
                "{} velocity envelopes and {} gains for {} agents",
                velocity.len(),
                gains.len(),
                graph.n_agents()
            )));
        }
        Ok(FormationController { graph, design, velocity, gains })
    }

    /// Sizes the velocity envelopes from the reference velocity at the
    /// initial state, then builds the controller.
    pub fn with_velocity_rule(
        graph: FormationGraph,
        design: Vec<EdgeDesign>,
        rule: VelocityEnvelopeRule,
        gains: Gains,
        initial: &[AgentState],
    ) -> Result<Self, ControlError> {
        let mut velocity = Vec::with_capacity(graph.n_agents());
        for (i, s) in initial.iter().enumerate() {
            let links = local_links(&graph, initial, i);
            let e_v = velocity_error(s, &reference_velocity(s, &links, &design, 0.0)?);
            let mut perf = [ExpPerf { rho_0: 1.0, rho_inf: 1.0, l: 0.0 }; 6];
            for (m, slot) in perf.iter_mut().enumerate() {
                *slot = ExpPerf::new(rule.scale * e_v[m].abs() + rule.offset, rule.rho_inf, rule.l)
                    .map_err(|e| ControlError::Config(e.to_string()))?;
            }
            velocity.push(perf);
        }
        Self::new(graph, design, velocity, gains)
    }

    pub fn graph(&self) -> &FormationGraph {
        &self.graph
    }

    pub fn design(&self) -> &[EdgeDesign] {
        &self.design
    }

    pub fn velocity_envelopes(&self) -> &[[ExpPerf; 6]] {
        &self.velocity
    }

    pub fn gains(&self) -> &Gains {
        &self.gains
    }

    fn rho_v(&self, agent: AgentId, t: f64) -> Vector6<f64> {
        Vector6::from_fn(|m, _| self.velocity[agent][m].value(t))
    }

    /// Stage-one output for every agent, each computed from local data only.
    pub fn reference_velocities(&self, states: &[AgentState], t: f64) -> Result<Vec<Vector6<f64>>, ControlError> {
        (0..self.graph.n_agents())
            .map(|i| {
                let links = local_links(&self.graph, states, i);
                reference_velocity(&states[i], &links, &self.design, t)
            })
            .collect()
    }

    /// Stage-two output for one agent from its own velocity error.
    pub fn agent_input(&self, agent: AgentId, state: &AgentState, v_des: &Vector6<f64>, t: f64) -> Result<AgentTerms, ControlError> {
        let e_v = velocity_error(state, v_des);
        let rho_v = self.rho_v(agent, t);
        let xi_v = e_v.component_div(&rho_v);
        let (eps_v, r_v) = barrier_sym(&xi_v).map_err(|err| {
            let component = xi_v.iter().position(|x| !(x.abs() < 1.0)).unwrap_or(0);
            ControlError::envelope(ErrorFamily::Velocity, agent, component, t, err)
        })?;
        let u = -self.gains.gamma(agent) * r_v.component_mul(&eps_v).component_div(&rho_v);
        Ok(AgentTerms { v_des: *v_des, e_v, rho_v, xi_v, eps_v, r_v, u })
    }

    /// `v − v_des` for every agent.
    pub fn velocity_errors(&self, states: &[AgentState], t: f64) -> Result<Vec<[f64; 6]>, ControlError> {
        let v_des = self.reference_velocities(states, t)?;
        Ok(states.iter().zip(&v_des).map(|(s, vd)| velocity_error(s, vd).into()).collect())
    }

    /// Control inputs only.
    pub fn inputs(&self, states: &[AgentState], t: f64) -> Result<Vec<Vector6<f64>>, ControlError> {
        let v_des = self.reference_velocities(states, t)?;
        states
            .iter()
            .zip(&v_des)
            .enumerate()
            .map(|(i, (s, vd))| self.agent_input(i, s, vd, t).map(|a| a.u))
            .collect()
    }

    /// Full evaluation with every intermediate signal.
    pub fn frame(&self, states: &[AgentState], t: f64) -> Result<ControlFrame, ControlError> {
        let errors = edge_errors(&self.graph, states);
        let edges = (0..self.graph.n_edges())
            .map(|k| edge_terms(k, errors.distance[k], errors.orientation[k], &self.design[k], t))
            .collect::<Result<Vec<_>, _>>()?;
        let v_des = self.reference_velocities(states, t)?;
        let agents = states
            .iter()
            .zip(&v_des)
            .enumerate()
            .map(|(i, (s, vd))| self.agent_input(i, s, vd, t))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ControlFrame { t, edges, agents })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelopes::ExpPerf;
    use crate::graph::EdgeSpec;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn design(target: EdgeTarget) -> EdgeDesign {
        EdgeDesign {
            target,
            distance: DistanceEnvelope::new(5.25, 10.75, 0.1, 1.0).unwrap(),
            orientation: SymmetricEnvelope { rho: ExpPerf::new(FRAC_PI_2, 0.1, 1.0).unwrap() },
        }
    }

    fn pair(d_des: f64, q_des: [f64; 3]) -> FormationGraph {
        FormationGraph::new(2, &[EdgeSpec { a: 0, b: 1, d_des, q_des, d_col: 1.0, d_con: 17f64.sqrt() }]).unwrap()
    }

    #[test]
    fn errors_vanish_at_target() {
        let g = pair(2.5, [0.3, 0.1, -0.2]);
        let states = [
            AgentState::at_rest(Vector3::new(2.5, 0.0, 0.0), Vector3::new(0.3, 0.1, -0.2)),
            AgentState::at_rest(Vector3::zeros(), Vector3::zeros()),
        ];
        let e = edge_errors(&g, &states);
        assert_relative_eq!(e.distance[0], 0.0, epsilon = 1e-15);
        assert_eq!(e.orientation[0], Vector3::zeros());
        let d = [design(*g.target(0))];
        for i in 0..2 {
            let v = reference_velocity(&states[i], &local_links(&g, &states, i), &d, 0.3).unwrap();
            assert_relative_eq!(v, Vector6::zeros(), epsilon = 1e-15);
        }
    }

    #[test]
    fn single_edge_f_p() {
        let g = pair(2.5, [0.0; 3]);
        let states = [
            AgentState::at_rest(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros()),
            AgentState::default(),
        ];
        assert_eq!(f_p_matrix(&g, &states), DMatrix::from_row_slice(1, 3, &[2.0, 0.0, 0.0]));
        assert_eq!(f_p_matrix(&g, &[AgentState::default(); 2]), DMatrix::zeros(1, 3));
    }

    #[test]
    fn pair_pulls_equal_and_opposite() {
        let g = pair(2.5, [0.0; 3]);
        let states = [
            AgentState::at_rest(Vector3::new(1.0, 2.0, 0.5), Vector3::zeros()),
            AgentState::at_rest(Vector3::new(-0.5, 0.3, 1.0), Vector3::zeros()),
        ];
        let d = [design(*g.target(0))];
        let v1 = reference_velocity(&states[0], &local_links(&g, &states, 0), &d, 0.0).unwrap();
        let v2 = reference_velocity(&states[1], &local_links(&g, &states, 1), &d, 0.0).unwrap();
        assert_relative_eq!(v1.fixed_rows::<3>(0).into_owned(), -v2.fixed_rows::<3>(0), epsilon = 1e-15);
        assert!(v1.norm() > 0.0);
    }

    #[test]
    fn control_input_scalar_case() {
        let mut xi = Vector6::zeros();
        xi[2] = 0.5;
        xi[4] = -0.25;
        let u = control_input(&xi, &Vector6::repeat(1.0), 5.0).unwrap();
        assert_relative_eq!(u[2], -14.648_163_848_908_129, epsilon = 1e-12);
        assert_eq!(u[0], 0.0);
        assert!(u[4] > 0.0);
        assert_eq!(control_input(&Vector6::zeros(), &Vector6::repeat(0.3), 5.0).unwrap(), Vector6::zeros());
        assert!(control_input(&Vector6::repeat(1.0), &Vector6::repeat(0.3), 5.0).is_err());
    }

    #[test]
    fn velocity_error_is_difference() {
        let s = AgentState { v: Vector6::from_fn(|i, _| i as f64), ..Default::default() };
        let vd = Vector6::repeat(0.5);
        assert_eq!(velocity_error(&s, &vd), s.v - vd);
        assert_eq!(velocity_error(&s, &s.v), Vector6::zeros());
    }

    #[test]
    fn out_of_envelope_reports_edge() {
        let g = pair(2.5, [0.0; 3]);
        // distance 10 m: e_p = 93.75 ≫ C_con
        let states = [
            AgentState::at_rest(Vector3::new(10.0, 0.0, 0.0), Vector3::zeros()),
            AgentState::default(),
        ];
        let d = [design(*g.target(0))];
        let err = reference_velocity(&states[0], &local_links(&g, &states, 0), &d, 0.0).unwrap_err();
        assert!(matches!(err, ControlError::OutOfEnvelope { family: ErrorFamily::Distance, index: 0, .. }));
    }

    #[test]
    fn single_edge_p_matrix_closed_form() {
        let g = pair(2.5, [0.0; 3]);
        let d = 3.0;
        let states = [
            AgentState::at_rest(Vector3::new(d, 0.0, 0.0), Vector3::zeros()),
            AgentState::default(),
        ];
        let p = p_matrix(&g, &states);
        // distance block: (2d)² · DᵀD = 4d² · 2
        assert_relative_eq!(p[(0, 0)], 8.0 * d * d, epsilon = 1e-12);
        for n in 1..4 {
            assert_eq!(p[(n, n)], 2.0);
        }
        assert_relative_eq!(min_eigenvalue(&p), 2.0, epsilon = 1e-12);
    }
}

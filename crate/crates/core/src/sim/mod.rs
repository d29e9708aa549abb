//! Fixed-step closed-loop integration with per-step invariant monitoring.

mod audit;
mod trace;

pub use audit::{audit, AuditError};
pub use trace::{
    column_names, read_csv, read_trace, write_csv, write_trace, AgentRecord, EdgeHeader, EdgeRecord, StepRecord, SimTrace,
    TraceError, TraceHeader, SCHEMA_VERSION,
};

use crate::controller::{p_matrix, min_eigenvalue, ControlError, ControlFrame, FormationController};
use crate::dynamics::{state_derivative, AgentState, DynamicsError, Plant, PITCH_LIMIT};
use crate::envelopes::ErrorFamily;
use nalgebra::{DVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use std::fmt;

/// One classical Runge–Kutta step of `ẏ = f(t, y)`.
pub fn rk4<E, F>(mut f: F, t: f64, y: &DVector<f64>, dt: f64) -> Result<DVector<f64>, E>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, E>,
{
    let half = 0.5 * dt;
    let k1 = f(t, y)?;
    let k2 = f(t + half, &(y + half * &k1))?;
    let k3 = f(t + half, &(y + half * &k2))?;
    let k4 = f(t + dt, &(y + dt * &k3))?;
    Ok(y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

const STATE_LEN: usize = 12;

/// Packs agent states as `[p, q, v]` blocks of 12.
pub fn pack_states(states: &[AgentState]) -> DVector<f64> {
    let mut y = DVector::zeros(STATE_LEN * states.len());
    for (i, s) in states.iter().enumerate() {
        let o = STATE_LEN * i;
        y.rows_mut(o, 3).copy_from(&s.p);
        y.rows_mut(o + 3, 3).copy_from(&s.q);
        y.rows_mut(o + 6, 6).copy_from(&s.v);
    }
    y
}

pub fn unpack_states(y: &DVector<f64>) -> Vec<AgentState> {
    (0..y.len() / STATE_LEN)
        .map(|i| {
            let o = STATE_LEN * i;
            AgentState {
                p: Vector3::from_iterator(y.rows(o, 3).iter().copied()),
                q: Vector3::from_iterator(y.rows(o + 3, 3).iter().copied()),
                v: Vector6::from_iterator(y.rows(o + 6, 6).iter().copied()),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StepError {
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// One RK4 step of the whole team. The control input is recomputed at every
/// stage unless `held` supplies a zero-order-hold input for the step.
pub fn rk4_step<P: Plant>(
    models: &[P],
    states: &[AgentState],
    t: f64,
    dt: f64,
    controller: &FormationController,
    held: Option<&[Vector6<f64>]>,
) -> Result<Vec<AgentState>, StepError> {
    let field = |t: f64, y: &DVector<f64>| -> Result<DVector<f64>, StepError> {
        let stage = unpack_states(y);
        let computed;
        let inputs = match held {
            Some(u) => u,
            None => {
                computed = controller.inputs(&stage, t)?;
                &computed[..]
            }
        };
        let mut dy = DVector::zeros(y.len());
        for (i, ((s, model), u)) in stage.iter().zip(models).zip(inputs).enumerate() {
            let d = state_derivative(model, s, u, t)?;
            dy.rows_mut(STATE_LEN * i, 6).copy_from(&d.x_dot);
            dy.rows_mut(STATE_LEN * i + 6, 6).copy_from(&d.v_dot);
        }
        Ok(dy)
    };
    rk4(field, t, &pack_states(states), dt).map(|y| unpack_states(&y))
}

/// What to do when a step leaves the admissible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BreachPolicy {
    /// Halt at the first breach.
    Fault,
    /// Redo the step with twice as many substeps, up to `max_retries` times.
    #[default]
    SubstepRetry,
}

impl std::str::FromStr for BreachPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fault" => Ok(BreachPolicy::Fault),
            "substep-retry" => Ok(BreachPolicy::SubstepRetry),
            other => Err(format!("unknown breach policy {other:?} (expected fault or substep-retry)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Simulated horizon (s).
    pub duration: f64,
    /// Interval between accepted, recorded steps (s).
    pub dt: f64,
    /// RK4 steps per accepted step.
    #[serde(default = "default_substeps")]
    pub substeps: u32,
    #[serde(default)]
    pub breach_policy: BreachPolicy,
    /// Substep doublings tried before a breach becomes a fault.
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Hold the control input constant across the RK4 stages of a substep.
    #[serde(default)]
    pub zero_order_hold: bool,
    #[serde(default)]
    pub seed: u64,
    /// Any |u| component at or above this counts as unbounded.
    #[serde(default = "default_input_ceiling")]
    pub input_ceiling: f64,
    /// Record the smallest P-matrix eigenvalue every this many accepted steps (0 = never).
    #[serde(default)]
    pub p_matrix_every: u32,
}

fn default_substeps() -> u32 {
    20
}

fn default_max_retries() -> u32 {
    6
}

fn default_input_ceiling() -> f64 {
    1e6
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            duration: 10.0,
            dt: 1e-3,
            substeps: default_substeps(),
            breach_policy: BreachPolicy::default(),
            max_retries: default_max_retries(),
            zero_order_hold: false,
            seed: 0,
            input_ceiling: default_input_ceiling(),
            p_matrix_every: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SimError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(SimError::Config(format!("duration must be nonnegative, got {}", self.duration)));
        }
        if self.substeps == 0 {
            return Err(SimError::Config("substeps must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of accepted steps covering `[0, duration]`.
    pub fn n_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    DistanceEnvelope,
    OrientationEnvelope,
    VelocityEnvelope,
    Collision,
    Connectivity,
    PitchSingularity,
    UnboundedInput,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::DistanceEnvelope => "distance-envelope",
            ViolationKind::OrientationEnvelope => "orientation-envelope",
            ViolationKind::VelocityEnvelope => "velocity-envelope",
            ViolationKind::Collision => "collision",
            ViolationKind::Connectivity => "connectivity",
            ViolationKind::PitchSingularity => "pitch-singularity",
            ViolationKind::UnboundedInput => "unbounded-input",
        })
    }
}

impl From<ErrorFamily> for ViolationKind {
    fn from(f: ErrorFamily) -> Self {
        match f {
            ErrorFamily::Distance => ViolationKind::DistanceEnvelope,
            ErrorFamily::Orientation => ViolationKind::OrientationEnvelope,
            ErrorFamily::Velocity => ViolationKind::VelocityEnvelope,
        }
    }
}

/// A broken invariant. `index` is zero-based: an edge for distance-type
/// kinds, an agent otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub kind: ViolationKind,
    pub index: usize,
    pub component: usize,
    pub t: f64,
    pub value: f64,
    pub bound: f64,
}

impl ViolationReport {
    fn is_edge_kind(&self) -> bool {
        matches!(
            self.kind,
            ViolationKind::DistanceEnvelope
                | ViolationKind::OrientationEnvelope
                | ViolationKind::Collision
                | ViolationKind::Connectivity
        )
    }
}

impl fmt::Display for ViolationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let subject = if self.is_edge_kind() { "edge" } else { "agent" };
        write!(
            f,
            "{} violation at t = {:.6} s, {} {} component {}: value {} vs bound {}",
            self.kind,
            self.t,
            subject,
            self.index + 1,
            self.component + 1,
            self.value,
            self.bound
        )
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("initial configuration infeasible: {0}")]
    Infeasible(String),
    #[error("run halted: {report}")]
    Fault { report: ViolationReport, trace: Box<SimTrace> },
}

/// Everything a run needs besides its config.
#[derive(Debug, Clone)]
pub struct Setup<P> {
    pub controller: FormationController,
    pub models: Vec<P>,
    pub initial: Vec<AgentState>,
}

/// Per-edge `(d_col, d_con)` implied by each edge's `C` constants.
pub fn distance_limits(controller: &FormationController) -> Vec<(f64, f64)> {
    controller
        .design()
        .iter()
        .map(|d| {
            (
                d.distance.collision_distance(d.target.d_des),
                d.distance.connectivity_distance(d.target.d_des),
            )
        })
        .collect()
}

/// Checks a state against every runtime invariant and returns the control
/// frame there.
fn monitor(
    controller: &FormationController,
    limits: &[(f64, f64)],
    states: &[AgentState],
    t: f64,
    ceiling: f64,
) -> Result<ControlFrame, ViolationReport> {
    for (i, s) in states.iter().enumerate() {
        if !(s.q[1].abs() < PITCH_LIMIT) {
            return Err(ViolationReport {
                kind: ViolationKind::PitchSingularity,
                index: i,
                component: 1,
                t,
                value: s.q[1],
                bound: PITCH_LIMIT,
            });
        }
    }
    for (k, (e, &(d_col, d_con))) in controller.graph().edges().iter().zip(limits).enumerate() {
        let dist = (states[e.tail].p - states[e.head].p).norm();
        if !(dist > d_col) {
            return Err(ViolationReport { kind: ViolationKind::Collision, index: k, component: 0, t, value: dist, bound: d_col });
        }
        if !(dist < d_con) {
            return Err(ViolationReport { kind: ViolationKind::Connectivity, index: k, component: 0, t, value: dist, bound: d_con });
        }
    }
    let frame = controller.frame(states, t).map_err(|err| control_violation(controller, err, t))?;
    for (i, a) in frame.agents.iter().enumerate() {
        if let Some(m) = a.u.iter().position(|x| !(x.abs() < ceiling)) {
            return Err(ViolationReport {
                kind: ViolationKind::UnboundedInput,
                index: i,
                component: m,
                t,
                value: a.u[m],
                bound: ceiling,
            });
        }
    }
    Ok(frame)
}

/// Envelope errors arrive normalized. Reports carry raw error units.
fn control_violation(controller: &FormationController, err: ControlError, t: f64) -> ViolationReport {
    match err {
        ControlError::OutOfEnvelope { family, index, component, value, lower, upper, .. } => {
            let rho = match family {
                ErrorFamily::Distance => controller.design()[index].distance.rho.value(t),
                ErrorFamily::Orientation => controller.design()[index].orientation.rho.value(t),
                ErrorFamily::Velocity => controller.velocity_envelopes()[index][component].value(t),
            };
            ViolationReport {
                kind: family.into(),
                index,
                component,
                t,
                value: value * rho,
                bound: rho * if value >= upper { upper } else { lower },
            }
        }
        ControlError::Dynamics(DynamicsError::PitchSingularity { theta, limit }) => ViolationReport {
            kind: ViolationKind::PitchSingularity,
            index: 0,
            component: 1,
            t,
            value: theta,
            bound: limit,
        },
        other => panic!("controller misconfigured mid-run: {other}"),
    }
}

fn step_violation(controller: &FormationController, err: StepError, t: f64) -> ViolationReport {
    match err {
        StepError::Control(c) => control_violation(controller, c, t),
        StepError::Dynamics(DynamicsError::PitchSingularity { theta, limit }) => ViolationReport {
            kind: ViolationKind::PitchSingularity,
            index: 0,
            component: 1,
            t,
            value: theta,
            bound: limit,
        },
        StepError::Dynamics(DynamicsError::SingularInertia) => panic!("plant inertia lost positive definiteness"),
    }
}

struct Integrator<'a, P> {
    config: &'a SimConfig,
    setup: &'a Setup<P>,
    limits: Vec<(f64, f64)>,
}

impl<P: Plant> Integrator<'_, P> {
    /// Advances from `t0` to `t1` in `substeps` RK4 steps, monitoring after each.
    fn advance(
        &self,
        states: &[AgentState],
        frame: &ControlFrame,
        t0: f64,
        t1: f64,
        substeps: u32,
    ) -> Result<(Vec<AgentState>, ControlFrame), ViolationReport> {
        let controller = &self.setup.controller;
        let h = (t1 - t0) / f64::from(substeps);
        let mut current = states.to_vec();
        let mut current_frame = frame.clone();
        for s in 0..substeps {
            let t = t0 + f64::from(s) * h;
            let t_next = if s + 1 == substeps { t1 } else { t0 + f64::from(s + 1) * h };
            let held = self.config.zero_order_hold.then(|| current_frame.inputs());
            current = rk4_step(&self.setup.models, &current, t, t_next - t, controller, held.as_deref())
                .map_err(|e| step_violation(controller, e, t))?;
            current_frame = monitor(controller, &self.limits, &current, t_next, self.config.input_ceiling)?;
        }
        Ok((current, current_frame))
    }
}

/// Runs the closed loop over `[0, duration]`.
pub fn run<P: Plant + Serialize>(config: &SimConfig, setup: &Setup<P>) -> Result<SimTrace, SimError> {
    config.validate()?;
    let controller = &setup.controller;
    let graph = controller.graph();
    if setup.initial.len() != graph.n_agents() || setup.models.len() != graph.n_agents() {
        return Err(SimError::Config(format!(
            "{} initial states and {} models for {} agents",
            setup.initial.len(),
            setup.models.len(),
            graph.n_agents()
        )));
    }
    let positions: Vec<_> = setup.initial.iter().map(|s| s.p).collect();
    let initial_report = graph
        .validate_initial(&positions)
        .map_err(|e| SimError::Config(e.to_string()))?;
    if let Some(bad) = initial_report.failures().next() {
        return Err(SimError::Infeasible(format!(
            "edge {} starts at distance {} outside ({}, {})",
            bad.edge, bad.distance, bad.d_col, bad.d_con
        )));
    }
    let integrator = Integrator { config, setup, limits: distance_limits(controller) };
    let mut frame = monitor(controller, &integrator.limits, &setup.initial, 0.0, config.input_ceiling)
        .map_err(|r| SimError::Infeasible(r.to_string()))?;

    let mut trace = SimTrace::new(TraceHeader::new(config, setup));
    let mut states = setup.initial.clone();
    trace.push(StepRecord::from_frame(controller, &states, &frame));
    record_p_matrix(&mut trace, config, controller, &states, 0);

    let n = config.n_steps();
    let mut t = 0.0;
    for step in 1..=n {
        let t_next = step as f64 * config.dt;
        let mut substeps = config.substeps;
        let mut retries = 0;
        let (next, next_frame) = loop {
            match integrator.advance(&states, &frame, t, t_next, substeps) {
                Ok(done) => break done,
                Err(_) if config.breach_policy == BreachPolicy::SubstepRetry && retries < config.max_retries => {
                    retries += 1;
                    substeps *= 2;
                    trace.retries += 1;
                }
                Err(report) => {
                    trace.fault = Some(report.clone());
                    return Err(SimError::Fault { report, trace: Box::new(trace) });
                }
            }
        };
        states = next;
        frame = next_frame;
        t = t_next;
        trace.push(StepRecord::from_frame(controller, &states, &frame));
        record_p_matrix(&mut trace, config, controller, &states, step);
    }
    Ok(trace)
}

fn record_p_matrix(
    trace: &mut SimTrace,
    config: &SimConfig,
    controller: &FormationController,
    states: &[AgentState],
    step: usize,
) {
    if config.p_matrix_every > 0 && step % config.p_matrix_every as usize == 0 {
        let lambda = min_eigenvalue(&p_matrix(controller.graph(), states));
        trace.p_matrix_min_eigenvalues.push((step, lambda));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rk4_on_exponential_decay() {
        let y0 = DVector::from_element(1, 1.0);
        let y1 = rk4(|_, y: &DVector<f64>| Ok::<_, ()>(-y), 0.0, &y0, 0.1).unwrap();
        // 1 − h + h²/2 − h³/6 + h⁴/24 at h = 0.1
        assert_relative_eq!(y1[0], 0.904_837_5, epsilon = 1e-15);
        assert_relative_eq!(y1[0], (-0.1f64).exp(), epsilon = 1e-7);
    }

    #[test]
    fn pack_round_trip() {
        let states = vec![
            AgentState {
                p: Vector3::new(1.0, 2.0, 3.0),
                q: Vector3::new(0.1, 0.2, 0.3),
                v: Vector6::from_fn(|i, _| i as f64),
            },
            AgentState::default(),
        ];
        assert_eq!(unpack_states(&pack_states(&states)), states);
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig { dt: 0.0, ..Default::default() }.validate().is_err());
        assert!(SimConfig { duration: -1.0, ..Default::default() }.validate().is_err());
        assert!(SimConfig { substeps: 0, ..Default::default() }.validate().is_err());
        assert_eq!(SimConfig { duration: 10.0, dt: 1e-3, ..Default::default() }.n_steps(), 10_000);
        assert_eq!("fault".parse::<BreachPolicy>(), Ok(BreachPolicy::Fault));
        assert!("clamp".parse::<BreachPolicy>().is_err());
    }
}

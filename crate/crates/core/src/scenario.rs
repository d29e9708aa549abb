//! Scenario files: a TOML description of the team, the formation and the run.
//!
//! Agent ids are 1-based in files. Everything downstream is zero-based.

use crate::controller::{ControlError, EdgeDesign, FormationController, Gains, VelocityEnvelopeRule};
use crate::dynamics::{AgentState, RigidBodyModel};
use crate::envelopes::{
    derive_constraint_constants, feasibility_check, DistanceEnvelope, EnvelopeError, ExpPerf, FeasibilityReport,
    InitialErrors, SymmetricEnvelope,
};
use crate::graph::{AgentGeometry, EdgeSpec, FormationGraph, GraphError, InitialReport};
use crate::sim::{Setup, SimConfig};
use nalgebra::{Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4};
use std::path::Path;

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Schema(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Envelope(#[from] EnvelopeError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

impl ScenarioError {
    /// True for errors in reading or parsing the file, as opposed to its content.
    pub fn is_parse_error(&self) -> bool {
        matches!(self, ScenarioError::Io { .. } | ScenarioError::Parse(_))
    }
}

/// How the squared-distance constraint constants are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Constraints {
    /// From `d_col = r_i + r_j` and `d_con = min(s_i, s_j)`.
    Derive,
    /// Given directly. Edges may override either constant.
    ExplicitC { c_col: f64, c_con: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintMode {
    Derive,
    ExplicitC,
}

impl std::str::FromStr for ConstraintMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "derive" => Ok(ConstraintMode::Derive),
            "explicit-c" => Ok(ConstraintMode::ExplicitC),
            other => Err(format!("unknown constraint mode {other:?} (expected derive or explicit-c)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    /// Steady-state width of the distance envelope (m²).
    pub rho_p_inf: f64,
    pub l_p: f64,
    pub rho_q0: f64,
    pub rho_q_inf: f64,
    pub l_q: f64,
    #[serde(default)]
    pub velocity: VelocityEnvelopeRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub radius: f64,
    pub sensing: f64,
    pub p: [f64; 3],
    #[serde(default)]
    pub q: [f64; 3],
    #[serde(default)]
    pub v: [f64; 6],
    pub gamma: f64,
    /// Plant parameters. Drawn from the run seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<RigidBodyModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeConfig {
    /// 1-based agent ids.
    pub agents: [usize; 2],
    pub d_des: f64,
    /// Desired `q_a − q_b` for `agents = [a, b]`.
    #[serde(default)]
    pub q_des: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_col: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_con: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_col: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_con: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub sim: SimConfig,
    pub constraints: Constraints,
    pub envelopes: EnvelopeConfig,
    pub agents: Vec<AgentConfig>,
    pub edges: Vec<EdgeConfig>,
}

/// Per-edge constants after the constraint mode has been applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedEdge {
    pub spec: EdgeSpec,
    pub c_col: f64,
    pub c_con: f64,
}

/// Outcome of the pre-run checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub is_tree: bool,
    pub sensing: Result<(), GraphError>,
    pub initial: InitialReport,
    /// Velocity checks are included only when the edge checks pass.
    pub feasibility: FeasibilityReport,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.is_tree && self.sensing.is_ok() && self.initial.passed() && self.feasibility.passed()
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.check()?;
        Ok(s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn constraint_mode(&self) -> ConstraintMode {
        match self.constraints {
            Constraints::Derive => ConstraintMode::Derive,
            Constraints::ExplicitC { .. } => ConstraintMode::ExplicitC,
        }
    }

    /// Switches constraint mode. Going to explicit mode freezes the constants
    /// the derive mode would produce for the first edge.
    pub fn set_constraint_mode(&mut self, mode: ConstraintMode) -> Result<(), ScenarioError> {
        self.constraints = match (mode, self.constraints) {
            (ConstraintMode::Derive, _) => Constraints::Derive,
            (ConstraintMode::ExplicitC, c @ Constraints::ExplicitC { .. }) => c,
            (ConstraintMode::ExplicitC, Constraints::Derive) => {
                let first = self
                    .resolve_edges()?
                    .first()
                    .copied()
                    .ok_or_else(|| ScenarioError::Schema("no edges".into()))?;
                Constraints::ExplicitC { c_col: first.c_col, c_con: first.c_con }
            }
        };
        for e in &mut self.edges {
            match mode {
                ConstraintMode::Derive => (e.c_col, e.c_con) = (None, None),
                ConstraintMode::ExplicitC => (e.d_col, e.d_con) = (None, None),
            }
        }
        Ok(())
    }

    /// Structural checks that need no numerics.
    fn check(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCENARIO_VERSION {
            return Err(ScenarioError::Schema(format!(
                "schema_version {} is not supported (expected {SCENARIO_VERSION})",
                self.schema_version
            )));
        }
        let n = self.agents.len();
        if n == 0 {
            return Err(ScenarioError::Graph(GraphError::NoAgents));
        }
        for (k, e) in self.edges.iter().enumerate() {
            for &id in &e.agents {
                if id == 0 || id > n {
                    return Err(ScenarioError::Schema(format!(
                        "edge {} names agent {id}, but agents are numbered 1 to {n}",
                        k + 1
                    )));
                }
            }
            let explicit = matches!(self.constraints, Constraints::ExplicitC { .. });
            if explicit && (e.d_col.is_some() || e.d_con.is_some()) {
                return Err(ScenarioError::Schema(format!(
                    "edge {} sets d_col/d_con, which only apply in derive mode",
                    k + 1
                )));
            }
            if !explicit && (e.c_col.is_some() || e.c_con.is_some()) {
                return Err(ScenarioError::Schema(format!(
                    "edge {} sets c_col/c_con, which only apply in explicit-c mode",
                    k + 1
                )));
            }
        }
        self.sim.validate().map_err(|e| ScenarioError::Schema(e.to_string()))?;
        Ok(())
    }

    /// Applies the constraint mode to every edge.
    pub fn resolve_edges(&self) -> Result<Vec<ResolvedEdge>, ScenarioError> {
        self.edges
            .iter()
            .map(|e| {
                let (a, b) = (e.agents[0] - 1, e.agents[1] - 1);
                let (ga, gb) = (self.geometry(a), self.geometry(b));
                let (d_col, d_con, c_col, c_con) = match self.constraints {
                    Constraints::Derive => {
                        let d_col = e.d_col.unwrap_or_else(|| AgentGeometry::collision_distance(&ga, &gb));
                        let d_con = e.d_con.unwrap_or_else(|| AgentGeometry::connectivity_distance(&ga, &gb));
                        let (c_col, c_con) = derive_constraint_constants(e.d_des, d_col, d_con)?;
                        (d_col, d_con, c_col, c_con)
                    }
                    Constraints::ExplicitC { c_col, c_con } => {
                        let c_col = e.c_col.unwrap_or(c_col);
                        let c_con = e.c_con.unwrap_or(c_con);
                        if !(c_col > 0.0 && c_con > 0.0) {
                            return Err(ScenarioError::Schema(format!(
                                "constraint constants must be positive, got C_col = {c_col}, C_con = {c_con}"
                            )));
                        }
                        let d2 = e.d_des * e.d_des;
                        ((d2 - c_col).max(0.0).sqrt(), (d2 + c_con).sqrt(), c_col, c_con)
                    }
                };
                Ok(ResolvedEdge {
                    spec: EdgeSpec { a, b, d_des: e.d_des, q_des: e.q_des, d_col, d_con },
                    c_col,
                    c_con,
                })
            })
            .collect()
    }

    fn geometry(&self, agent: usize) -> AgentGeometry {
        AgentGeometry { radius: self.agents[agent].radius, sensing: self.agents[agent].sensing }
    }

    pub fn geometries(&self) -> Vec<AgentGeometry> {
        (0..self.n_agents()).map(|i| self.geometry(i)).collect()
    }

    pub fn graph(&self) -> Result<(FormationGraph, Vec<ResolvedEdge>), ScenarioError> {
        let resolved = self.resolve_edges()?;
        let specs: Vec<EdgeSpec> = resolved.iter().map(|r| r.spec).collect();
        Ok((FormationGraph::new(self.n_agents(), &specs)?, resolved))
    }

    /// Per-edge design in canonical edge order.
    pub fn design(&self, graph: &FormationGraph, resolved: &[ResolvedEdge]) -> Result<Vec<EdgeDesign>, ScenarioError> {
        let env = &self.envelopes;
        graph
            .targets()
            .iter()
            .zip(resolved)
            .map(|(target, r)| {
                Ok(EdgeDesign {
                    target: *target,
                    distance: DistanceEnvelope::new(r.c_col, r.c_con, env.rho_p_inf, env.l_p)?,
                    orientation: SymmetricEnvelope { rho: ExpPerf::new(env.rho_q0, env.rho_q_inf, env.l_q)? },
                })
            })
            .collect()
    }

    pub fn initial_states(&self) -> Vec<AgentState> {
        self.agents
            .iter()
            .map(|a| AgentState { p: Vector3::from(a.p), q: Vector3::from(a.q), v: Vector6::from(a.v) })
            .collect()
    }

    /// Explicit models where given, the rest drawn in agent order from the run seed.
    pub fn models(&self) -> Vec<RigidBodyModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.sim.seed);
        self.agents
            .iter()
            .map(|a| a.model.unwrap_or_else(|| RigidBodyModel::sample(&mut rng)))
            .collect()
    }

    pub fn gains(&self) -> Result<Gains, ScenarioError> {
        Ok(Gains::new(self.agents.iter().map(|a| a.gamma).collect())?)
    }

    /// Tree, sensing, initial distance and initial envelope checks.
    pub fn validate(&self) -> Result<ValidationReport, ScenarioError> {
        let (graph, resolved) = self.graph()?;
        let design = self.design(&graph, &resolved)?;
        let states = self.initial_states();
        let positions: Vec<_> = states.iter().map(|s| s.p).collect();
        let initial = graph.validate_initial(&positions)?;

        let errors = crate::controller::edge_errors(&graph, &states);
        let orientation: Vec<[f64; 3]> = errors.orientation.iter().map(|e| (*e).into()).collect();
        let distance_envelopes: Vec<_> = design.iter().map(|d| d.distance).collect();
        let orientation_envelopes: Vec<_> = design.iter().map(|d| d.orientation).collect();
        let mut feasibility = feasibility_check(&InitialErrors {
            distance: &errors.distance,
            orientation: &orientation,
            distance_envelopes: &distance_envelopes,
            orientation_envelopes: &orientation_envelopes,
            velocity: &[],
            velocity_envelopes: &[],
        });
        if feasibility.passed() {
            let controller = self.controller_for(graph.clone(), design)?;
            let velocity = controller.velocity_errors(&states, 0.0)?;
            let velocity_report = feasibility_check(&InitialErrors {
                distance: &[],
                orientation: &[],
                distance_envelopes: &[],
                orientation_envelopes: &[],
                velocity: &velocity,
                velocity_envelopes: controller.velocity_envelopes(),
            });
            feasibility.checks.extend(velocity_report.checks);
        }
        Ok(ValidationReport {
            is_tree: graph.is_tree(),
            sensing: AgentGeometry::validate_all(&self.geometries()),
            initial,
            feasibility,
        })
    }

    fn controller_for(&self, graph: FormationGraph, design: Vec<EdgeDesign>) -> Result<FormationController, ScenarioError> {
        Ok(FormationController::with_velocity_rule(
            graph,
            design,
            self.envelopes.velocity,
            self.gains()?,
            &self.initial_states(),
        )?)
    }

    /// Controller, plant models and initial states for a run.
    pub fn build(&self) -> Result<Setup<RigidBodyModel>, ScenarioError> {
        let (graph, resolved) = self.graph()?;
        let design = self.design(&graph, &resolved)?;
        Ok(Setup {
            controller: self.controller_for(graph, design)?,
            models: self.models(),
            initial: self.initial_states(),
        })
    }

    /// The four-agent benchmark: a star around agent 2, all bodies at rest
    /// and level, explicit constraint constants.
    pub fn benchmark() -> Self {
        let agent = |p: [f64; 3]| AgentConfig {
            radius: 1.0,
            sensing: 4.0,
            p,
            q: [0.0; 3],
            v: [0.0; 6],
            gamma: 5.0,
            model: None,
        };
        let edge = |a, b| EdgeConfig {
            agents: [a, b],
            d_des: 2.5,
            q_des: [-FRAC_PI_4, 0.0, -FRAC_PI_3],
            c_col: None,
            c_con: None,
            d_col: None,
            d_con: None,
        };
        Scenario {
            schema_version: SCENARIO_VERSION,
            name: "benchmark".into(),
            sim: SimConfig { duration: 10.0, dt: 1e-3, ..SimConfig::default() },
            constraints: Constraints::ExplicitC { c_col: 5.25, c_con: 10.75 },
            envelopes: EnvelopeConfig {
                rho_p_inf: 0.1,
                l_p: 1.0,
                rho_q0: FRAC_PI_2,
                rho_q_inf: 0.1,
                l_q: 1.0,
                velocity: VelocityEnvelopeRule::default(),
            },
            agents: vec![
                agent([0.0, 0.0, 0.0]),
                agent([2.0, 2.0, 2.0]),
                agent([2.0, 4.0, 4.0]),
                agent([2.0, 3.0, 2.5]),
            ],
            edges: vec![edge(1, 2), edge(2, 3), edge(2, 4)],
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    Scenario::from_toml_str(&text)
}

//! Run records and their on-disk form: a CSV time series plus a JSON sidecar.

use super::{distance_limits, Setup, SimConfig, ViolationReport};
use crate::controller::{ControlFrame, FormationController};
use crate::dynamics::AgentState;
use crate::envelopes::ExpPerf;
use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed trace: {0}")]
    Malformed(String),
}

/// Per-edge constants needed to re-check a trace offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeHeader {
    /// Zero-based endpoints, tail first.
    pub tail: usize,
    pub head: usize,
    pub d_des: f64,
    pub q_des: [f64; 3],
    pub c_col: f64,
    pub c_con: f64,
    pub d_col: f64,
    pub d_con: f64,
    pub rho_p: ExpPerf,
    pub rho_q: ExpPerf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema_version: u32,
    pub config: SimConfig,
    pub n_agents: usize,
    pub edges: Vec<EdgeHeader>,
    pub velocity_envelopes: Vec<[ExpPerf; 6]>,
    pub gains: Vec<f64>,
    /// Plant parameters actually used, one per agent.
    pub models: serde_json::Value,
    /// Source scenario text, if the run came from a file.
    #[serde(default)]
    pub scenario: Option<String>,
}

impl TraceHeader {
    pub fn new<P: Serialize>(config: &SimConfig, setup: &Setup<P>) -> Self {
        let c = &setup.controller;
        TraceHeader {
            schema_version: SCHEMA_VERSION,
            config: config.clone(),
            n_agents: c.graph().n_agents(),
            edges: edge_headers(c),
            velocity_envelopes: c.velocity_envelopes().to_vec(),
            gains: (0..c.graph().n_agents()).map(|i| c.gains().gamma(i)).collect(),
            models: serde_json::to_value(&setup.models).unwrap_or(serde_json::Value::Null),
            scenario: None,
        }
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
}

fn edge_headers(c: &FormationController) -> Vec<EdgeHeader> {
    c.graph()
        .edges()
        .iter()
        .zip(c.design())
        .zip(distance_limits(c))
        .map(|((e, d), (d_col, d_con))| EdgeHeader {
            tail: e.tail,
            head: e.head,
            d_des: d.target.d_des,
            q_des: d.target.q_des,
            c_col: d.distance.c_col,
            c_con: d.distance.c_con,
            d_col,
            d_con,
            rho_p: d.distance.rho,
            rho_q: d.orientation.rho,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub e_p: f64,
    pub e_q: [f64; 3],
    pub p_lower: f64,
    pub p_upper: f64,
    pub q_bound: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub u: [f64; 6],
    pub e_v: [f64; 6],
    pub rho_v: [f64; 6],
}

/// One accepted step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub states: Vec<AgentState>,
    pub edges: Vec<EdgeRecord>,
    pub agents: Vec<AgentRecord>,
}

impl StepRecord {
    pub(super) fn from_frame(controller: &FormationController, states: &[AgentState], frame: &ControlFrame) -> Self {
        let edges = controller
            .graph()
            .edges()
            .iter()
            .zip(controller.design())
            .zip(&frame.edges)
            .map(|((e, design), terms)| {
                let (p_lower, p_upper) = design.distance.bounds(frame.t);
                EdgeRecord {
                    e_p: terms.e_p,
                    e_q: terms.e_q.into(),
                    p_lower,
                    p_upper,
                    q_bound: terms.rho_q,
                    distance: (states[e.tail].p - states[e.head].p).norm(),
                }
            })
            .collect();
        let agents = frame
            .agents
            .iter()
            .map(|a| AgentRecord { u: a.u.into(), e_v: a.e_v.into(), rho_v: a.rho_v.into() })
            .collect();
        StepRecord { t: frame.t, states: states.to_vec(), edges, agents }
    }
}

/// A finished or halted run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub header: TraceHeader,
    #[serde(skip)]
    pub records: Vec<StepRecord>,
    /// Steps that needed more substeps than configured.
    pub retries: u64,
    pub fault: Option<ViolationReport>,
    /// `(step, λ_min(P))` samples.
    pub p_matrix_min_eigenvalues: Vec<(usize, f64)>,
}

impl SimTrace {
    pub fn new(header: TraceHeader) -> Self {
        SimTrace { header, records: Vec::new(), retries: 0, fault: None, p_matrix_min_eigenvalues: Vec::new() }
    }

    pub(super) fn push(&mut self, record: StepRecord) {
        self.records.push(record);
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }
}

/// CSV header row for `n` agents and `m` edges. Agents and edges are 1-based.
pub fn column_names(n: usize, m: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for i in 1..=n {
        for c in ["x", "y", "z"] {
            cols.push(format!("p{i}_{c}"));
        }
        for c in ["phi", "theta", "psi"] {
            cols.push(format!("q{i}_{c}"));
        }
        for c in ["vx", "vy", "vz", "wx", "wy", "wz"] {
            cols.push(format!("v{i}_{c}"));
        }
    }
    for k in 1..=m {
        cols.push(format!("e_p{k}"));
        for c in 1..=3 {
            cols.push(format!("e_q{k}_{c}"));
        }
        cols.push(format!("e_p{k}_lower"));
        cols.push(format!("e_p{k}_upper"));
        cols.push(format!("rho_q{k}"));
        cols.push(format!("dist{k}"));
    }
    for (prefix, _) in [("u", 0), ("e_v", 1), ("rho_v", 2)] {
        for i in 1..=n {
            for c in 1..=6 {
                cols.push(format!("{prefix}{i}_{c}"));
            }
        }
    }
    cols
}

fn num(x: f64) -> String {
    format!("{x}")
}

/// Writes `trace.csv` and `trace.json` into `dir`.
pub fn write_trace(trace: &SimTrace, dir: &Path) -> Result<(), TraceError> {
    std::fs::create_dir_all(dir)?;
    let csv_file = std::fs::File::create(dir.join("trace.csv"))?;
    write_csv(trace, csv_file)?;
    let mut json = std::fs::File::create(dir.join("trace.json"))?;
    serde_json::to_writer_pretty(&mut json, trace)?;
    json.write_all(b"\n")?;
    Ok(())
}

pub fn write_csv<W: Write>(trace: &SimTrace, out: W) -> Result<(), TraceError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(column_names(trace.header.n_agents, trace.header.n_edges()))?;
    let mut row = Vec::new();
    for r in &trace.records {
        row.clear();
        row.push(num(r.t));
        for s in &r.states {
            row.extend(s.p.iter().chain(s.q.iter()).chain(s.v.iter()).map(|&x| num(x)));
        }
        for e in &r.edges {
            row.push(num(e.e_p));
            row.extend(e.e_q.iter().map(|&x| num(x)));
            row.extend([e.p_lower, e.p_upper, e.q_bound, e.distance].map(num));
        }
        for a in &r.agents {
            row.extend(a.u.iter().map(|&x| num(x)));
        }
        for a in &r.agents {
            row.extend(a.e_v.iter().map(|&x| num(x)));
        }
        for a in &r.agents {
            row.extend(a.rho_v.iter().map(|&x| num(x)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads back a trace written by [`write_trace`].
pub fn read_trace(dir: &Path) -> Result<SimTrace, TraceError> {
    let json = std::fs::read_to_string(dir.join("trace.json"))?;
    let mut trace: SimTrace = serde_json::from_str(&json)?;
    if trace.header.schema_version != SCHEMA_VERSION {
        return Err(TraceError::Malformed(format!(
            "schema version {} (expected {SCHEMA_VERSION})",
            trace.header.schema_version
        )));
    }
    let file = std::fs::File::open(dir.join("trace.csv"))?;
    trace.records = read_csv(&trace.header, file)?;
    Ok(trace)
}

pub fn read_csv<R: Read>(header: &TraceHeader, input: R) -> Result<Vec<StepRecord>, TraceError> {
    let (n, m) = (header.n_agents, header.n_edges());
    let expected = column_names(n, m);
    let mut rd = csv::Reader::from_reader(input);
    let found: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if found != expected {
        return Err(TraceError::Malformed(format!(
            "csv has {} columns, expected {} for {n} agents and {m} edges",
            found.len(),
            expected.len()
        )));
    }
    let mut records = Vec::new();
    for (line, row) in rd.records().enumerate() {
        let row = row?;
        let vals = row
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| TraceError::Malformed(format!("row {}: {e}", line + 1)))?;
        let mut it = vals.into_iter();
        let mut take = |k: usize| -> Vec<f64> { it.by_ref().take(k).collect() };
        let t = take(1)[0];
        let states = (0..n)
            .map(|_| {
                let x = take(12);
                AgentState {
                    p: Vector3::from_column_slice(&x[0..3]),
                    q: Vector3::from_column_slice(&x[3..6]),
                    v: Vector6::from_column_slice(&x[6..12]),
                }
            })
            .collect();
        let edges = (0..m)
            .map(|_| {
                let x = take(8);
                EdgeRecord {
                    e_p: x[0],
                    e_q: [x[1], x[2], x[3]],
                    p_lower: x[4],
                    p_upper: x[5],
                    q_bound: x[6],
                    distance: x[7],
                }
            })
            .collect();
        let six = |x: Vec<f64>| -> [f64; 6] { x.try_into().expect("six entries") };
        let us: Vec<_> = (0..n).map(|_| six(take(6))).collect();
        let evs: Vec<_> = (0..n).map(|_| six(take(6))).collect();
        let rhos: Vec<_> = (0..n).map(|_| six(take(6))).collect();
        let agents = us
            .into_iter()
            .zip(evs)
            .zip(rhos)
            .map(|((u, e_v), rho_v)| AgentRecord { u, e_v, rho_v })
            .collect();
        records.push(StepRecord { t, states, edges, agents });
    }
    Ok(records)
}

//! Offline re-check of a stored trace against the invariants in its header.

use super::{SimTrace, ViolationKind, ViolationReport};
use crate::dynamics::PITCH_LIMIT;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AuditError {
    #[error("malformed trace: {0}")]
    Malformed(String),
}

/// Every invariant breach in the trace, in time order. Bounds are rebuilt
/// from the header, and distances from the stored positions.
pub fn audit(trace: &SimTrace) -> Result<Vec<ViolationReport>, AuditError> {
    let h = &trace.header;
    if h.velocity_envelopes.len() != h.n_agents {
        return Err(AuditError::Malformed(format!(
            "{} velocity envelopes for {} agents",
            h.velocity_envelopes.len(),
            h.n_agents
        )));
    }
    for e in &h.edges {
        if e.tail >= h.n_agents || e.head >= h.n_agents {
            return Err(AuditError::Malformed(format!("edge ({}, {}) names a missing agent", e.tail, e.head)));
        }
    }
    let ceiling = h.config.input_ceiling;
    let mut found = Vec::new();
    let mut prev_t = f64::NEG_INFINITY;
    for (step, r) in trace.records.iter().enumerate() {
        if r.states.len() != h.n_agents || r.agents.len() != h.n_agents || r.edges.len() != h.n_edges() {
            return Err(AuditError::Malformed(format!("step {step} has the wrong number of agents or edges")));
        }
        if !(r.t > prev_t) {
            return Err(AuditError::Malformed(format!("time does not increase at step {step}")));
        }
        prev_t = r.t;
        let t = r.t;
        let mut flag = |kind, index, component, value, bound| {
            found.push(ViolationReport { kind, index, component, t, value, bound });
        };

        for (k, (e, rec)) in h.edges.iter().zip(&r.edges).enumerate() {
            let rho_p = e.rho_p.value(t);
            let (lo, hi) = (-e.c_col * rho_p, e.c_con * rho_p);
            if !(rec.e_p > lo) {
                flag(ViolationKind::DistanceEnvelope, k, 0, rec.e_p, lo);
            } else if !(rec.e_p < hi) {
                flag(ViolationKind::DistanceEnvelope, k, 0, rec.e_p, hi);
            }
            let rho_q = e.rho_q.value(t);
            for (c, &x) in rec.e_q.iter().enumerate() {
                if !(x.abs() < rho_q) {
                    flag(ViolationKind::OrientationEnvelope, k, c, x, rho_q.copysign(x));
                }
            }
            let dist = (r.states[e.tail].p - r.states[e.head].p).norm();
            if !(dist > e.d_col) {
                flag(ViolationKind::Collision, k, 0, dist, e.d_col);
            } else if !(dist < e.d_con) {
                flag(ViolationKind::Connectivity, k, 0, dist, e.d_con);
            }
        }

        for (i, ((s, a), env)) in r.states.iter().zip(&r.agents).zip(&h.velocity_envelopes).enumerate() {
            if !(s.q[1].abs() < PITCH_LIMIT) {
                flag(ViolationKind::PitchSingularity, i, 1, s.q[1], PITCH_LIMIT);
            }
            for (m, perf) in env.iter().enumerate() {
                let rho = perf.value(t);
                if !(a.e_v[m].abs() < rho) {
                    flag(ViolationKind::VelocityEnvelope, i, m, a.e_v[m], rho.copysign(a.e_v[m]));
                }
            }
            for (m, &u) in a.u.iter().enumerate() {
                if !(u.abs() < ceiling) {
                    flag(ViolationKind::UnboundedInput, i, m, u, ceiling);
                }
            }
        }
    }
    Ok(found)
}

//! Performance functions and the log-barrier error transforms built on them.
//!
//! Every controlled error `e(t)` is divided by a decaying performance function
//! `ρ(t)` and the normalized error `ξ = e/ρ` is mapped through a logarithmic
//! barrier that diverges on the boundary of its admissible set. The derivative
//! of the barrier (the `r` signal) is returned alongside the transform, since
//! the control law multiplies by it.
//!
//! Distance errors are squared-distance errors in m², so the `C` constants and
//! the distance bounds `−C_col·ρ`, `C_con·ρ` carry m² as well.

use nalgebra::SVector;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::ops::Div;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvelopeError {
    #[error("invalid performance function: {0}")]
    InvalidPerformance(String),
    #[error("infeasible formation: need d_col < d_des < d_con, got {d_col} < {d_des} < {d_con}")]
    InfeasibleFormation { d_col: f64, d_des: f64, d_con: f64 },
    #[error("normalized error {value} outside the open interval ({lower}, {upper})")]
    OutOfEnvelope { value: f64, lower: f64, upper: f64 },
}

/// `ρ(t) = (ρ₀ − ρ∞) e^{−l t} + ρ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpPerf {
    pub rho_0: f64,
    pub rho_inf: f64,
    pub l: f64,
}

impl ExpPerf {
    pub fn new(rho_0: f64, rho_inf: f64, l: f64) -> Result<Self, EnvelopeError> {
        if !(rho_inf > 0.0 && rho_inf.is_finite()) {
            return Err(EnvelopeError::InvalidPerformance(format!("rho_inf = {rho_inf} must be positive")));
        }
        if !(rho_0 >= rho_inf && rho_0.is_finite()) {
            return Err(EnvelopeError::InvalidPerformance(format!(
                "rho_0 = {rho_0} must not be below rho_inf = {rho_inf}"
            )));
        }
        if !(l >= 0.0 && l.is_finite()) {
            return Err(EnvelopeError::InvalidPerformance(format!("decay rate l = {l} must be nonnegative")));
        }
        Ok(ExpPerf { rho_0, rho_inf, l })
    }

    pub fn value(&self, t: f64) -> f64 {
        (self.rho_0 - self.rho_inf) * (-self.l * t).exp() + self.rho_inf
    }

    pub fn rate(&self, t: f64) -> f64 {
        -self.l * (self.rho_0 - self.rho_inf) * (-self.l * t).exp()
    }

    /// `(ρ(t), ρ̇(t))`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        (self.value(t), self.rate(t))
    }
}

/// Asymmetric envelope `(−C_col ρ(t), C_con ρ(t))` of a squared-distance error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceEnvelope {
    pub c_col: f64,
    pub c_con: f64,
    pub rho: ExpPerf,
}

impl DistanceEnvelope {
    /// The performance function starts at exactly 1 and settles at
    /// `rho_inf / max(C_col, C_con)`, so the steady-state band is at most
    /// `rho_inf` wide on the larger side.
    pub fn new(c_col: f64, c_con: f64, rho_inf: f64, l: f64) -> Result<Self, EnvelopeError> {
        if !(c_col > 0.0 && c_con > 0.0) {
            return Err(EnvelopeError::InvalidPerformance(format!(
                "constraint constants must be positive, got C_col = {c_col}, C_con = {c_con}"
            )));
        }
        let floor = rho_inf / c_col.max(c_con);
        if floor > 1.0 {
            return Err(EnvelopeError::InvalidPerformance(format!(
                "rho_inf = {rho_inf} exceeds max(C_col, C_con)"
            )));
        }
        Ok(DistanceEnvelope { c_col, c_con, rho: ExpPerf::new(1.0, floor, l)? })
    }

    /// `(lower, upper)` bounds on `e^p` at time `t`.
    pub fn bounds(&self, t: f64) -> (f64, f64) {
        let rho = self.rho.value(t);
        (-self.c_col * rho, self.c_con * rho)
    }

    /// Collision distance implied by `C_col` for a desired distance.
    pub fn collision_distance(&self, d_des: f64) -> f64 {
        (d_des * d_des - self.c_col).max(0.0).sqrt()
    }

    /// Connectivity distance implied by `C_con` for a desired distance.
    pub fn connectivity_distance(&self, d_des: f64) -> f64 {
        (d_des * d_des + self.c_con).sqrt()
    }
}

/// Symmetric envelope `(−ρ(t), ρ(t))`, applied componentwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetricEnvelope {
    pub rho: ExpPerf,
}

impl SymmetricEnvelope {
    pub fn bound(&self, t: f64) -> f64 {
        self.rho.value(t)
    }
}

/// `C_col = d_des² − d_col²`, `C_con = d_con² − d_des²`.
pub fn derive_constraint_constants(d_des: f64, d_col: f64, d_con: f64) -> Result<(f64, f64), EnvelopeError> {
    if !(d_col < d_des && d_des < d_con) {
        return Err(EnvelopeError::InfeasibleFormation { d_col, d_des, d_con });
    }
    Ok((d_des * d_des - d_col * d_col, d_con * d_con - d_des * d_des))
}

/// `ξ = e / ρ`, for scalars and vectors alike.
pub fn normalize<T: Div<f64, Output = T>>(e: T, rho_value: f64) -> T {
    e / rho_value
}

/// Barrier of a normalized squared-distance error.
///
/// Returns `(ε, r)` with `ε = ln((1 + ξ/C_col) / (1 − ξ/C_con))` and
/// `r = dε/dξ`. Fails unless `−C_col < ξ < C_con`.
pub fn barrier_p(xi: f64, env: &DistanceEnvelope) -> Result<(f64, f64), EnvelopeError> {
    let (c_col, c_con) = (env.c_col, env.c_con);
    if !(-c_col < xi && xi < c_con) {
        return Err(EnvelopeError::OutOfEnvelope { value: xi, lower: -c_col, upper: c_con });
    }
    let epsilon = (xi / c_col).ln_1p() - (-xi / c_con).ln_1p();
    let r = (c_col + c_con) / ((c_col + xi) * (c_con - xi));
    Ok((epsilon, r))
}

/// Componentwise barrier `ε = ln((1 + ξ)/(1 − ξ))` on `(−1, 1)^D`.
///
/// The `r` signal is diagonal; its diagonal `2 / (1 − ξ²)` is returned as a
/// vector.
pub fn barrier_sym<const D: usize>(
    xi: &SVector<f64, D>,
) -> Result<(SVector<f64, D>, SVector<f64, D>), EnvelopeError> {
    if let Some(&bad) = xi.iter().find(|x| !(x.abs() < 1.0)) {
        return Err(EnvelopeError::OutOfEnvelope { value: bad, lower: -1.0, upper: 1.0 });
    }
    let epsilon = xi.map(|x| x.ln_1p() - (-x).ln_1p());
    let r = xi.map(|x| 2.0 / (1.0 - x * x));
    Ok((epsilon, r))
}

/// Which error family a check or violation concerns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorFamily {
    Distance,
    Orientation,
    Velocity,
}

impl fmt::Display for ErrorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorFamily::Distance => "distance",
            ErrorFamily::Orientation => "orientation",
            ErrorFamily::Velocity => "velocity",
        })
    }
}

/// One bound comparison at `t = 0`. `index` is an edge for distance and
/// orientation errors and an agent for velocity errors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityCheck {
    pub family: ErrorFamily,
    pub index: usize,
    pub component: usize,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeasibilityReport {
    pub checks: Vec<FeasibilityCheck>,
}

impl FeasibilityReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &FeasibilityCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, family: ErrorFamily, index: usize, component: usize, value: f64, lower: f64, upper: f64) {
        self.checks.push(FeasibilityCheck {
            family,
            index,
            component,
            value,
            lower,
            upper,
            passed: lower < value && value < upper,
        });
    }
}

/// Initial errors and the envelopes they must start inside.
pub struct InitialErrors<'a> {
    pub distance: &'a [f64],
    pub orientation: &'a [[f64; 3]],
    pub distance_envelopes: &'a [DistanceEnvelope],
    pub orientation_envelopes: &'a [SymmetricEnvelope],
    /// Per-agent velocity errors and their six per-component envelopes;
    /// empty when the velocity envelopes are not yet resolved.
    pub velocity: &'a [[f64; 6]],
    pub velocity_envelopes: &'a [[ExpPerf; 6]],
}

/// Checks every initial error strictly against its `t = 0` band.
pub fn feasibility_check(init: &InitialErrors<'_>) -> FeasibilityReport {
    let mut report = FeasibilityReport::default();
    for (k, (&e, env)) in init.distance.iter().zip(init.distance_envelopes).enumerate() {
        let (lo, hi) = env.bounds(0.0);
        report.push(ErrorFamily::Distance, k, 0, e, lo, hi);
    }
    for (k, (e, env)) in init.orientation.iter().zip(init.orientation_envelopes).enumerate() {
        let b = env.bound(0.0);
        for (n, &c) in e.iter().enumerate() {
            report.push(ErrorFamily::Orientation, k, n, c, -b, b);
        }
    }
    for (i, (e, envs)) in init.velocity.iter().zip(init.velocity_envelopes).enumerate() {
        for (m, (&c, env)) in e.iter().zip(envs).enumerate() {
            let b = env.value(0.0);
            report.push(ErrorFamily::Velocity, i, m, c, -b, b);
        }
    }
    report
}

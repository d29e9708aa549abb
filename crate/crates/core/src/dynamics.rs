//! Second-order rigid-body plant with Euler-angle kinematics.
//!
//! Each agent evolves as
//!
//! ```text
//! ẋ = J(x) v
//! M(x) v̇ + C(x, ẋ) v + g(x) + w(x, ẋ, t) = u
//! ```
//!
//! with `x = (p, q)` and `v = (ṗ, ω)`. Nothing in this module is visible to the
//! controller; the controller only ever sees [`AgentState`].

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

/// Distance from ±π/2 pitch at which the Euler-rate Jacobian is rejected.
pub const PITCH_MARGIN: f64 = 0.02;

/// Largest admissible |θ|.
pub const PITCH_LIMIT: f64 = FRAC_PI_2 - PITCH_MARGIN;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error("pitch {theta} rad reaches the Euler-angle singularity (|θ| must stay below {limit})")]
    PitchSingularity { theta: f64, limit: f64 },
    #[error("inertia matrix is not positive definite")]
    SingularInertia,
}

/// Pose and generalized velocity of one rigid body.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState {
    /// Position (m).
    pub p: Vector3<f64>,
    /// Euler angles (φ, θ, ψ) in rad.
    pub q: Vector3<f64>,
    /// Linear velocity (m/s) followed by body angular velocity (rad/s).
    pub v: Vector6<f64>,
}

impl AgentState {
    pub fn at_rest(p: Vector3<f64>, q: Vector3<f64>) -> Self {
        AgentState { p, q, v: Vector6::zeros() }
    }

    /// The pose `x = (p, q)` as one 6-vector.
    pub fn pose(&self) -> Vector6<f64> {
        let mut x = Vector6::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.p);
        x.fixed_rows_mut::<3>(3).copy_from(&self.q);
        x
    }

    pub fn linear_velocity(&self) -> Vector3<f64> {
        self.v.fixed_rows::<3>(0).into_owned()
    }

    pub fn angular_velocity(&self) -> Vector3<f64> {
        self.v.fixed_rows::<3>(3).into_owned()
    }

    pub fn check_pitch(&self) -> Result<(), DynamicsError> {
        check_pitch(self.q[1])
    }
}

fn check_pitch(theta: f64) -> Result<(), DynamicsError> {
    if theta.abs() < PITCH_LIMIT {
        Ok(())
    } else {
        Err(DynamicsError::PitchSingularity { theta, limit: PITCH_LIMIT })
    }
}

/// Map from body angular velocity to Euler-angle rates, `q̇ = J_q(q) ω`.
pub fn euler_rate_jacobian(q: &Vector3<f64>) -> Result<Matrix3<f64>, DynamicsError> {
    let (phi, theta) = (q[0], q[1]);
    check_pitch(theta)?;
    let (sp, cp) = phi.sin_cos();
    let (tt, ct) = (theta.tan(), theta.cos());
    Ok(Matrix3::new(
        1.0, sp * tt, cp * tt,
        0.0, cp, -sp,
        0.0, sp / ct, cp / ct,
    ))
}

/// Closed-form inverse of [`euler_rate_jacobian`].
pub fn euler_rate_jacobian_inverse(q: &Vector3<f64>) -> Result<Matrix3<f64>, DynamicsError> {
    let (phi, theta) = (q[0], q[1]);
    check_pitch(theta)?;
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    Ok(Matrix3::new(
        1.0, 0.0, -st,
        0.0, cp, sp * ct,
        0.0, -sp, cp * ct,
    ))
}

/// Block-diagonal `diag(I₃, J_q)`.
pub fn full_jacobian(state: &AgentState) -> Result<Matrix6<f64>, DynamicsError> {
    let jq = euler_rate_jacobian(&state.q)?;
    let mut j = Matrix6::identity();
    j.fixed_view_mut::<3, 3>(3, 3).copy_from(&jq);
    Ok(j)
}

/// `S(a)` with `S(a) b = a × b`.
pub fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(
        0.0, -a[2], a[1],
        a[2], 0.0, -a[0],
        -a[1], a[0], 0.0,
    )
}

/// Everything the dynamics need that the controller must never see.
pub trait Plant {
    fn inertia_matrix(&self, state: &AgentState) -> Matrix6<f64>;
    fn coriolis_matrix(&self, state: &AgentState, x_dot: &Vector6<f64>) -> Matrix6<f64>;
    fn gravity_vector(&self, state: &AgentState) -> Vector6<f64>;
    fn disturbance(&self, state: &AgentState, x_dot: &Vector6<f64>, t: f64) -> Vector6<f64>;
}

/// Parameters of `w = A sin(ω_c t) (a₁ x − a₂ ẋ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub amplitude: f64,
    pub frequency: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Disturbance {
    pub fn eval(&self, x: &Vector6<f64>, x_dot: &Vector6<f64>, t: f64) -> Vector6<f64> {
        (self.amplitude * (self.frequency * t).sin()) * (self.a1 * x - self.a2 * x_dot)
    }
}

/// A rigid body with diagonal inertia, gyroscopic Coriolis term, uniform
/// gravity along +z in the force balance, and a sinusoidal disturbance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidBodyModel {
    /// Mass (kg).
    pub mass: f64,
    /// Diagonal body inertia (kg·m²).
    pub inertia: [f64; 3],
    /// Gravitational acceleration (m/s²).
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    #[serde(default)]
    pub disturbance: Disturbance,
}

fn default_gravity() -> f64 {
    9.81
}

impl RigidBodyModel {
    /// Unit point mass: no rotational coupling, no gravity, no disturbance.
    pub fn unit() -> Self {
        RigidBodyModel {
            mass: 1.0,
            inertia: [1.0; 3],
            gravity: 0.0,
            disturbance: Disturbance::default(),
        }
    }

    /// Draws mass and inertia from [0.5, 1.5] and the disturbance
    /// parameters from [0, 1].
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut unit_range = || rng.gen_range(0.5..1.5);
        let mass = unit_range();
        let inertia = [unit_range(), unit_range(), unit_range()];
        let disturbance = Disturbance {
            amplitude: rng.gen_range(0.0..1.0),
            frequency: rng.gen_range(0.0..1.0),
            a1: rng.gen_range(0.0..1.0),
            a2: rng.gen_range(0.0..1.0),
        };
        RigidBodyModel { mass, inertia, gravity: default_gravity(), disturbance }
    }

    fn body_inertia(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::from(self.inertia))
    }
}

impl Plant for RigidBodyModel {
    fn inertia_matrix(&self, _state: &AgentState) -> Matrix6<f64> {
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * self.mass));
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.body_inertia());
        m
    }

    fn coriolis_matrix(&self, state: &AgentState, _x_dot: &Vector6<f64>) -> Matrix6<f64> {
        let mut c = Matrix6::zeros();
        let gyro = skew(&state.angular_velocity()) * self.body_inertia();
        c.fixed_view_mut::<3, 3>(3, 3).copy_from(&gyro);
        c
    }

    fn gravity_vector(&self, _state: &AgentState) -> Vector6<f64> {
        Vector6::new(0.0, 0.0, self.mass * self.gravity, 0.0, 0.0, 0.0)
    }

    fn disturbance(&self, state: &AgentState, x_dot: &Vector6<f64>, t: f64) -> Vector6<f64> {
        self.disturbance.eval(&state.pose(), x_dot, t)
    }
}

/// Time derivative of one agent's `(x, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub x_dot: Vector6<f64>,
    pub v_dot: Vector6<f64>,
}

pub fn state_derivative<P: Plant + ?Sized>(
    model: &P,
    state: &AgentState,
    u: &Vector6<f64>,
    t: f64,
) -> Result<StateDerivative, DynamicsError> {
    let x_dot = full_jacobian(state)? * state.v;
    let rhs = u
        - model.coriolis_matrix(state, &x_dot) * state.v
        - model.gravity_vector(state)
        - model.disturbance(state, &x_dot, t);
    let chol = model
        .inertia_matrix(state)
        .cholesky()
        .ok_or(DynamicsError::SingularInertia)?;
    Ok(StateDerivative { x_dot, v_dot: chol.solve(&rhs) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

    #[test]
    fn jacobian_at_zero_is_identity() {
        assert_eq!(euler_rate_jacobian(&Vector3::zeros()).unwrap(), Matrix3::identity());
        let s = AgentState::default();
        assert_eq!(full_jacobian(&s).unwrap(), Matrix6::identity());
    }

    #[test]
    fn jacobian_at_quarter_roll() {
        let j = euler_rate_jacobian(&Vector3::new(FRAC_PI_2, 0.0, 0.0)).unwrap();
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert_relative_eq!(j, expected, epsilon = 1e-15);
    }

    #[test]
    fn determinant_at_sixty_degrees_pitch() {
        let s = AgentState::at_rest(Vector3::zeros(), Vector3::new(0.0, FRAC_PI_3, 0.0));
        assert_relative_eq!(full_jacobian(&s).unwrap().determinant(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn inverse_contract() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let q = Vector3::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-3.0..3.0),
            );
            let j = euler_rate_jacobian(&q).unwrap();
            let ji = euler_rate_jacobian_inverse(&q).unwrap();
            assert_relative_eq!(j * ji, Matrix3::identity(), epsilon = 1e-12);
        }
    }

    #[test]
    fn singularity_is_rejected() {
        let q = Vector3::new(0.0, FRAC_PI_2 - 0.001, 0.0);
        assert!(matches!(euler_rate_jacobian(&q), Err(DynamicsError::PitchSingularity { .. })));
        let s = AgentState::at_rest(Vector3::zeros(), -q);
        assert!(full_jacobian(&s).is_err());
    }

    #[test]
    fn disturbance_cases() {
        let state = AgentState {
            p: Vector3::new(1.0, -2.0, 0.5),
            q: Vector3::new(0.1, 0.2, -0.3),
            v: Vector6::new(0.3, 0.1, -0.2, 0.05, 0.0, 0.4),
        };
        let x_dot = full_jacobian(&state).unwrap() * state.v;
        let silent = Disturbance { amplitude: 0.0, frequency: 1.0, a1: 1.0, a2: 1.0 };
        assert_eq!(silent.eval(&state.pose(), &x_dot, 1.3), Vector6::zeros());
        let d = Disturbance { amplitude: 1.0, frequency: 1.0, a1: 1.0, a2: 0.0 };
        assert_relative_eq!(d.eval(&state.pose(), &x_dot, FRAC_PI_2), state.pose(), epsilon = 1e-15);
        let any = Disturbance { amplitude: 0.7, frequency: 0.3, a1: 0.2, a2: 0.9 };
        assert_eq!(any.eval(&state.pose(), &x_dot, 0.0), Vector6::zeros());
    }

    #[test]
    fn gravity_balance_at_rest() {
        let model = RigidBodyModel {
            disturbance: Disturbance::default(),
            ..RigidBodyModel::sample(&mut rand_chacha::ChaCha8Rng::seed_from_u64(1))
        };
        let s = AgentState::at_rest(Vector3::new(1.0, 2.0, 3.0), Vector3::zeros());
        let u = model.gravity_vector(&s);
        let d = state_derivative(&model, &s, &u, 0.7).unwrap();
        assert_eq!(d.x_dot, Vector6::zeros());
        assert_relative_eq!(d.v_dot, Vector6::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn unit_mass_obeys_newton() {
        let s = AgentState::default();
        let u = Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let d = state_derivative(&RigidBodyModel::unit(), &s, &u, 0.0).unwrap();
        assert_eq!(d.v_dot, u);
    }

    #[test]
    fn derivative_is_linear_in_input() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let model = RigidBodyModel::sample(&mut rng);
        let state = AgentState {
            p: Vector3::new(0.3, -1.0, 2.0),
            q: Vector3::new(0.2, -0.4, 1.0),
            v: Vector6::new(0.1, 0.2, 0.3, -0.5, 0.4, 0.1),
        };
        let u1 = Vector6::from_fn(|i, _| i as f64 - 2.5);
        let u2 = Vector6::from_fn(|i, _| (i as f64).sin());
        let t = 0.9;
        let f = |u: &Vector6<f64>| state_derivative(&model, &state, u, t).unwrap().v_dot;
        let zero = f(&Vector6::zeros());
        let lhs = f(&(2.0 * u1 + u2)) - zero;
        let rhs = 2.0 * (f(&u1) - zero) + (f(&u2) - zero);
        assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
    }

    #[test]
    fn sampled_inertia_is_positive_definite() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let m = RigidBodyModel::sample(&mut rng);
            assert!(m.inertia_matrix(&AgentState::default()).cholesky().is_some());
        }
    }
}

//! Vehicle kinematics shared by the estimator, the controller, and the
//! simulator.
//!
//! Everything is built on the planar kinematic single-track model with
//! heading rate `v·tan(δ)/L`. The estimator works in a 3-state pose at the
//! GNSS mount point; the controller works in a 6-state vector that carries
//! the front-axle position, speed, the heading embedded as (cos ψ, sin ψ),
//! and the steering angle.

use nalgebra::{Matrix2x3, Matrix3, SMatrix, SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Geometric and physical constants of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Wheel axle distance, m.
    pub wheelbase: f64,
    /// Distance from the rear axle to the GNSS sensor mount point, m.
    pub sensor_offset: f64,
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 0.9,
            // The mount point is configuration, not a published constant;
            // mid-deck is the default.
            sensor_offset: 0.45,
            gravity: 9.81,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), VehicleError> {
        if !(self.wheelbase > 0.0) {
            return Err(VehicleError::InvalidParam("wheelbase must be positive"));
        }
        if !(0.0..=self.wheelbase).contains(&self.sensor_offset) {
            return Err(VehicleError::InvalidParam(
                "sensor_offset must lie in [0, wheelbase]",
            ));
        }
        if !(self.gravity > 0.0) {
            return Err(VehicleError::InvalidParam("gravity must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum VehicleError {
    #[error("invalid vehicle parameter: {0}")]
    InvalidParam(&'static str),
    #[error("integration produced a non-finite state")]
    NonFiniteState,
}

/// Pose of the GNSS mount point: position plus unwrapped heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfState {
    pub pos: Vector2<f64>,
    pub heading: f64,
}

impl EkfState {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            pos: Vector2::new(x, y),
            heading,
        }
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.pos.x, self.pos.y, self.heading)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}

/// Controller state: front-axle position, speed, heading embedding, steer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcState {
    pub pos: Vector2<f64>,
    pub speed: f64,
    pub heading_cos: f64,
    pub heading_sin: f64,
    pub steer: f64,
}

impl MpcState {
    pub fn from_pose(pos: Vector2<f64>, heading: f64, speed: f64, steer: f64) -> Self {
        Self {
            pos,
            speed,
            heading_cos: heading.cos(),
            heading_sin: heading.sin(),
            steer,
        }
    }

    pub fn heading(&self) -> f64 {
        self.heading_sin.atan2(self.heading_cos)
    }

    /// Rear-axle position implied by the front-axle state.
    pub fn rear_position(&self, params: &VehicleParams) -> Vector2<f64> {
        self.pos - Vector2::new(self.heading_cos, self.heading_sin) * params.wheelbase
    }

    pub fn as_vector(&self) -> SVector<f64, 6> {
        SVector::<f64, 6>::new(
            self.pos.x,
            self.pos.y,
            self.speed,
            self.heading_cos,
            self.heading_sin,
            self.steer,
        )
    }

    pub fn from_vector(v: &SVector<f64, 6>) -> Self {
        Self {
            pos: Vector2::new(v[0], v[1]),
            speed: v[2],
            heading_cos: v[3],
            heading_sin: v[4],
            steer: v[5],
        }
    }

    /// Scale the heading embedding back onto the unit circle.
    pub fn renormalized(mut self) -> Self {
        let r = (self.heading_cos * self.heading_cos + self.heading_sin * self.heading_sin).sqrt();
        if r > 0.0 && r.is_finite() {
            self.heading_cos /= r;
            self.heading_sin /= r;
        }
        self
    }

    pub fn is_finite(&self) -> bool {
        self.as_vector().iter().all(|v| v.is_finite())
    }
}

/// Controller input: rear-axle acceleration and steering rate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MpcInput {
    pub accel: f64,
    pub steer_rate: f64,
}

impl MpcInput {
    pub fn new(accel: f64, steer_rate: f64) -> Self {
        Self { accel, steer_rate }
    }

    pub fn as_vector(&self) -> SVector<f64, 2> {
        SVector::<f64, 2>::new(self.accel, self.steer_rate)
    }

    pub fn from_vector(v: &SVector<f64, 2>) -> Self {
        Self {
            accel: v[0],
            steer_rate: v[1],
        }
    }
}

/// Side-slip angle at the sensor mount point: `arctan(l_r·tan(δ)/L)`.
pub fn sideslip(steer: f64, params: &VehicleParams) -> f64 {
    (params.sensor_offset * steer.tan() / params.wheelbase).atan()
}

/// Speed of the sensor mount point: `v·√(1 + tan²(β))`.
pub fn sensor_speed(speed: f64, slip: f64) -> f64 {
    let t = slip.tan();
    speed * (1.0 + t * t).sqrt()
}

/// Continuous-time pose dynamics at the sensor point given encoder readings.
pub fn ekf_dynamics(state: &EkfState, speed: f64, steer: f64, params: &VehicleParams) -> Vector3<f64> {
    let slip = sideslip(steer, params);
    let vs = sensor_speed(speed, slip);
    let a = state.heading + slip;
    Vector3::new(
        vs * a.cos(),
        vs * a.sin(),
        speed * steer.tan() / params.wheelbase,
    )
}

/// Jacobian of [`ekf_dynamics`] with respect to the state.
///
/// Only the heading column is non-zero; the position does not feed back into
/// the dynamics.
pub fn ekf_dynamics_jacobian(
    state: &EkfState,
    speed: f64,
    steer: f64,
    params: &VehicleParams,
) -> Matrix3<f64> {
    let slip = sideslip(steer, params);
    let vs = sensor_speed(speed, slip);
    let a = state.heading + slip;
    let mut jac = Matrix3::zeros();
    jac[(0, 2)] = -vs * a.sin();
    jac[(1, 2)] = vs * a.cos();
    jac
}

/// Continuous-time dynamics of the 6-state controller model.
pub fn mpc_dynamics(x: &MpcState, u: &MpcInput, params: &VehicleParams) -> SVector<f64, 6> {
    let l = params.wheelbase;
    let yaw_rate = x.speed * x.steer.tan() / l;
    SVector::<f64, 6>::new(
        x.speed * x.heading_cos - l * x.heading_sin * yaw_rate,
        x.speed * x.heading_sin + l * x.heading_cos * yaw_rate,
        u.accel,
        -x.heading_sin * yaw_rate,
        x.heading_cos * yaw_rate,
        u.steer_rate,
    )
}

/// Analytic Jacobians of [`mpc_dynamics`]: (∂ẋ/∂x, ∂ẋ/∂u).
pub fn mpc_dynamics_jacobians(
    x: &MpcState,
    _u: &MpcInput,
    params: &VehicleParams,
) -> (SMatrix<f64, 6, 6>, SMatrix<f64, 6, 2>) {
    let l = params.wheelbase;
    let tan_steer = x.steer.tan();
    let sec2 = 1.0 / (x.steer.cos() * x.steer.cos());
    let yaw_rate = x.speed * tan_steer / l;
    let dyaw_dv = tan_steer / l;
    let dyaw_dsteer = x.speed * sec2 / l;
    let (c, s, v) = (x.heading_cos, x.heading_sin, x.speed);

    let mut a = SMatrix::<f64, 6, 6>::zeros();
    // d(v·c − L·s·ω)
    a[(0, 2)] = c - l * s * dyaw_dv;
    a[(0, 3)] = v;
    a[(0, 4)] = -l * yaw_rate;
    a[(0, 5)] = -l * s * dyaw_dsteer;
    // d(v·s + L·c·ω)
    a[(1, 2)] = s + l * c * dyaw_dv;
    a[(1, 3)] = l * yaw_rate;
    a[(1, 4)] = v;
    a[(1, 5)] = l * c * dyaw_dsteer;
    // d(−s·ω)
    a[(3, 2)] = -s * dyaw_dv;
    a[(3, 4)] = -yaw_rate;
    a[(3, 5)] = -s * dyaw_dsteer;
    // d(c·ω)
    a[(4, 2)] = c * dyaw_dv;
    a[(4, 3)] = yaw_rate;
    a[(4, 5)] = c * dyaw_dsteer;

    let mut b = SMatrix::<f64, 6, 2>::zeros();
    b[(2, 0)] = 1.0;
    b[(5, 1)] = 1.0;
    (a, b)
}

/// Integration method for the controller model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Euler,
    Rk4,
}

/// One integration step of the controller model with heading renormalization.
pub fn integrate_mpc(
    x: &MpcState,
    u: &MpcInput,
    dt: f64,
    method: Integrator,
    params: &VehicleParams,
) -> Result<MpcState, VehicleError> {
    let next = match method {
        Integrator::Euler => {
            let xv = x.as_vector() + mpc_dynamics(x, u, params) * dt;
            MpcState::from_vector(&xv)
        }
        Integrator::Rk4 => {
            let xv = x.as_vector();
            let k1 = mpc_dynamics(x, u, params);
            let k2 = mpc_dynamics(&MpcState::from_vector(&(xv + k1 * (dt / 2.0))), u, params);
            let k3 = mpc_dynamics(&MpcState::from_vector(&(xv + k2 * (dt / 2.0))), u, params);
            let k4 = mpc_dynamics(&MpcState::from_vector(&(xv + k3 * dt)), u, params);
            MpcState::from_vector(&(xv + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)))
        }
    }
    .renormalized();
    if !next.is_finite() {
        return Err(VehicleError::NonFiniteState);
    }
    Ok(next)
}

/// RK4 step of the controller model together with the exact Jacobians of the
/// discrete map (including the heading renormalization).
pub fn rk4_step_with_jacobians(
    x: &MpcState,
    u: &MpcInput,
    dt: f64,
    params: &VehicleParams,
) -> (MpcState, SMatrix<f64, 6, 6>, SMatrix<f64, 6, 2>) {
    let xv = x.as_vector();
    let eye = SMatrix::<f64, 6, 6>::identity();

    let x1 = *x;
    let k1 = mpc_dynamics(&x1, u, params);
    let (j1x, j1u) = mpc_dynamics_jacobians(&x1, u, params);

    let x2 = MpcState::from_vector(&(xv + k1 * (dt / 2.0)));
    let k2 = mpc_dynamics(&x2, u, params);
    let (j2x, j2u) = mpc_dynamics_jacobians(&x2, u, params);
    let dk2x = j2x * (eye + j1x * (dt / 2.0));
    let dk2u = j2x * j1u * (dt / 2.0) + j2u;

    let x3 = MpcState::from_vector(&(xv + k2 * (dt / 2.0)));
    let k3 = mpc_dynamics(&x3, u, params);
    let (j3x, j3u) = mpc_dynamics_jacobians(&x3, u, params);
    let dk3x = j3x * (eye + dk2x * (dt / 2.0));
    let dk3u = j3x * dk2u * (dt / 2.0) + j3u;

    let x4 = MpcState::from_vector(&(xv + k3 * dt));
    let k4 = mpc_dynamics(&x4, u, params);
    let (j4x, j4u) = mpc_dynamics_jacobians(&x4, u, params);
    let dk4x = j4x * (eye + dk3x * dt);
    let dk4u = j4x * dk3u * dt + j4u;

    let raw = xv + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    let a_raw = eye + (j1x + dk2x * 2.0 + dk3x * 2.0 + dk4x) * (dt / 6.0);
    let b_raw = (j1u + dk2u * 2.0 + dk3u * 2.0 + dk4u) * (dt / 6.0);

    // Chain the renormalization of the heading embedding.
    let (c, s) = (raw[3], raw[4]);
    let r2 = c * c + s * s;
    let r = r2.sqrt();
    let r3 = r2 * r;
    let mut n = eye;
    n[(3, 3)] = s * s / r3;
    n[(3, 4)] = -c * s / r3;
    n[(4, 3)] = -c * s / r3;
    n[(4, 4)] = c * c / r3;

    let mut out = raw;
    out[3] = c / r;
    out[4] = s / r;
    (MpcState::from_vector(&out), n * a_raw, n * b_raw)
}

/// Pose of the front axle given a sensor-point pose.
pub fn sensor_to_front(state: &EkfState, params: &VehicleParams) -> EkfState {
    let offset = params.wheelbase - params.sensor_offset;
    EkfState {
        pos: state.pos + Vector2::new(state.heading.cos(), state.heading.sin()) * offset,
        heading: state.heading,
    }
}

/// Pose of the rear axle given a sensor-point pose.
pub fn sensor_to_rear(state: &EkfState, params: &VehicleParams) -> EkfState {
    EkfState {
        pos: state.pos
            - Vector2::new(state.heading.cos(), state.heading.sin()) * params.sensor_offset,
        heading: state.heading,
    }
}

/// Steady-state lean angle the balancing layer must hold while cornering:
/// `arctan(v²·tan(δ) / (L·g))`.
pub fn roll_setpoint(speed: f64, steer: f64, params: &VehicleParams) -> f64 {
    (speed * speed * steer.tan() / (params.wheelbase * params.gravity)).atan()
}

/// Time derivative of [`roll_setpoint`] along a trajectory with acceleration
/// `accel` and steering rate `steer_rate`.
pub fn roll_setpoint_rate(
    speed: f64,
    steer: f64,
    accel: f64,
    steer_rate: f64,
    params: &VehicleParams,
) -> f64 {
    let lg = params.wheelbase * params.gravity;
    let tan_steer = steer.tan();
    let cos_steer = steer.cos();
    let numer = lg * (2.0 * speed * tan_steer * accel + speed * speed / (cos_steer * cos_steer) * steer_rate);
    let denom = lg * lg + speed.powi(4) * tan_steer * tan_steer;
    numer / denom
}

/// Gradient of [`roll_setpoint_rate`] with respect to (v, δ, a, δ̇).
pub fn roll_setpoint_rate_gradient(
    speed: f64,
    steer: f64,
    accel: f64,
    steer_rate: f64,
    params: &VehicleParams,
) -> SVector<f64, 4> {
    let lg = params.wheelbase * params.gravity;
    let t = steer.tan();
    let c = steer.cos();
    let sec2 = 1.0 / (c * c);
    let v = speed;

    let numer = lg * (2.0 * v * t * accel + v * v * sec2 * steer_rate);
    let denom = lg * lg + v.powi(4) * t * t;

    let dn_dv = lg * (2.0 * t * accel + 2.0 * v * sec2 * steer_rate);
    let dn_dsteer = lg * (2.0 * v * accel * sec2 + 2.0 * v * v * sec2 * t * steer_rate);
    let dn_da = lg * 2.0 * v * t;
    let dn_drate = lg * v * v * sec2;

    let dd_dv = 4.0 * v.powi(3) * t * t;
    let dd_dsteer = 2.0 * v.powi(4) * t * sec2;

    SVector::<f64, 4>::new(
        (dn_dv * denom - numer * dd_dv) / (denom * denom),
        (dn_dsteer * denom - numer * dd_dsteer) / (denom * denom),
        dn_da / denom,
        dn_drate / denom,
    )
}

/// Jacobian of the GNSS measurement model: the sensor point position is
/// observed directly.
pub fn measurement_matrix() -> Matrix2x3<f64> {
    Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)
}

//! EKF-based localization fusing GNSS position fixes with encoder odometry.
//!
//! The process model is the Euler-discretized single-track pose model from
//! [`crate::vehicle`], driven by encoder speed and steering angle; GNSS fixes
//! enter through a linear position measurement. Heading is never measured
//! directly and becomes observable through motion.

use nalgebra::{Matrix2, Matrix3, Vector2};
use thiserror::Error;

use crate::vehicle::{ekf_dynamics, ekf_dynamics_jacobian, measurement_matrix, EkfState, VehicleParams};

/// Initial heading standard deviation used by [`initialize`], rad.
pub const INITIAL_HEADING_SIGMA: f64 = 0.5;
/// Minimum displacement between fixes for heading bootstrapping, m.
pub const MIN_INIT_BASELINE: f64 = 0.2;

#[derive(Debug, Error, PartialEq)]
pub enum EkfError {
    #[error("prediction step dt = {0} outside (0, 0.5] s")]
    InvalidDt(f64),
    #[error("innovation covariance is numerically singular (cond > 1e12)")]
    SingularInnovation,
    #[error("need at least two fixes separated by {MIN_INIT_BASELINE} m to initialize")]
    InsufficientBaseline,
}

/// Gaussian belief over the sensor-point pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfBelief {
    pub mean: EkfState,
    pub cov: Matrix3<f64>,
}

impl EkfBelief {
    pub fn new(mean: EkfState, cov: Matrix3<f64>) -> Self {
        Self { mean, cov }
    }

    /// Smallest eigenvalue of the (symmetrized) covariance.
    pub fn min_cov_eigenvalue(&self) -> f64 {
        let sym = (self.cov + self.cov.transpose()) * 0.5;
        sym.symmetric_eigenvalues().min()
    }
}

/// A processed GNSS position fix in the local ENU frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnssFix {
    pub position: Vector2<f64>,
    /// Measurement covariance reported with the fix, m².
    pub covariance: Matrix2<f64>,
    pub timestamp: f64,
}

/// Speed and steering angle from the drive/steer encoders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderSample {
    pub speed: f64,
    pub steer: f64,
    pub timestamp: f64,
}

/// Process noise intensity per unit time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessNoise {
    pub per_second: Matrix3<f64>,
}

impl Default for ProcessNoise {
    fn default() -> Self {
        Self {
            per_second: Matrix3::from_diagonal(&nalgebra::Vector3::new(0.01, 0.01, 0.02)),
        }
    }
}

impl ProcessNoise {
    pub fn from_diagonal(x: f64, y: f64, heading: f64) -> Self {
        Self {
            per_second: Matrix3::from_diagonal(&nalgebra::Vector3::new(x, y, heading)),
        }
    }
}

fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

/// EKF prediction: one Euler step of the process model plus covariance
/// propagation `F·P·Fᵀ + dt·Q`.
pub fn predict(
    belief: &EkfBelief,
    enc: &EncoderSample,
    dt: f64,
    params: &VehicleParams,
    noise: &ProcessNoise,
) -> Result<EkfBelief, EkfError> {
    if !(dt > 0.0 && dt <= 0.5) {
        return Err(EkfError::InvalidDt(dt));
    }
    let mean_vec =
        belief.mean.as_vector() + ekf_dynamics(&belief.mean, enc.speed, enc.steer, params) * dt;
    let f = Matrix3::identity() + ekf_dynamics_jacobian(&belief.mean, enc.speed, enc.steer, params) * dt;
    let cov = symmetrize(&(f * belief.cov * f.transpose() + noise.per_second * dt));
    Ok(EkfBelief {
        mean: EkfState::from_vector(&mean_vec),
        cov,
    })
}

/// Linear Kalman update with a GNSS fix, in Joseph form.
pub fn update(belief: &EkfBelief, fix: &GnssFix) -> Result<EkfBelief, EkfError> {
    let h = measurement_matrix();
    let innovation_cov = h * belief.cov * h.transpose() + fix.covariance;
    let eigs = innovation_cov.symmetric_eigenvalues();
    let (lo, hi) = (eigs.min(), eigs.max());
    if !(lo > 0.0) || hi / lo > 1e12 {
        return Err(EkfError::SingularInnovation);
    }
    let s_inv = innovation_cov
        .try_inverse()
        .ok_or(EkfError::SingularInnovation)?;
    let gain = belief.cov * h.transpose() * s_inv;
    let innovation = fix.position - h * belief.mean.as_vector();
    let mean_vec = belief.mean.as_vector() + gain * innovation;
    let ikh = Matrix3::identity() - gain * h;
    let cov = symmetrize(
        &(ikh * belief.cov * ikh.transpose() + gain * fix.covariance * gain.transpose()),
    );
    Ok(EkfBelief {
        mean: EkfState::from_vector(&mean_vec),
        cov,
    })
}

/// Bootstrap a belief from the first fixes: position from the last fix,
/// heading from the displacement between the first and last fix.
pub fn initialize(fixes: &[GnssFix]) -> Result<EkfBelief, EkfError> {
    let (first, last) = match (fixes.first(), fixes.last()) {
        (Some(f), Some(l)) if fixes.len() >= 2 => (f, l),
        _ => return Err(EkfError::InsufficientBaseline),
    };
    let displacement = last.position - first.position;
    if displacement.norm() < MIN_INIT_BASELINE {
        return Err(EkfError::InsufficientBaseline);
    }
    let heading = displacement.y.atan2(displacement.x);
    let mut cov = Matrix3::zeros();
    cov.view_mut((0, 0), (2, 2)).copy_from(&last.covariance);
    cov[(2, 2)] = INITIAL_HEADING_SIGMA * INITIAL_HEADING_SIGMA;
    Ok(EkfBelief {
        mean: EkfState::new(last.position.x, last.position.y, heading),
        cov,
    })
}

/// Sequential filter driver used by log replay: buffers fixes until a heading
/// baseline exists, zero-order-holds encoder samples, and drops out-of-order
/// rows with a warning count.
#[derive(Debug, Clone)]
pub struct EkfFilter {
    params: VehicleParams,
    noise: ProcessNoise,
    state: FilterStage,
    held_encoder: EncoderSample,
    pub dropped_rows: u32,
}

#[derive(Debug, Clone)]
enum FilterStage {
    Bootstrapping { fixes: Vec<GnssFix> },
    Running { belief: EkfBelief, time: f64 },
}

impl EkfFilter {
    pub fn new(params: VehicleParams, noise: ProcessNoise) -> Self {
        Self {
            params,
            noise,
            state: FilterStage::Bootstrapping { fixes: Vec::new() },
            held_encoder: EncoderSample {
                speed: 0.0,
                steer: 0.0,
                timestamp: 0.0,
            },
            dropped_rows: 0,
        }
    }

    /// Start directly from a known belief (used by the simulator, where the
    /// start pose is configured rather than discovered).
    pub fn with_belief(params: VehicleParams, noise: ProcessNoise, belief: EkfBelief, time: f64) -> Self {
        Self {
            params,
            noise,
            state: FilterStage::Running { belief, time },
            held_encoder: EncoderSample {
                speed: 0.0,
                steer: 0.0,
                timestamp: time,
            },
            dropped_rows: 0,
        }
    }

    pub fn belief(&self) -> Option<&EkfBelief> {
        match &self.state {
            FilterStage::Running { belief, .. } => Some(belief),
            FilterStage::Bootstrapping { .. } => None,
        }
    }

    pub fn time(&self) -> Option<f64> {
        match &self.state {
            FilterStage::Running { time, .. } => Some(*time),
            FilterStage::Bootstrapping { .. } => None,
        }
    }

    pub fn handle_encoder(&mut self, sample: EncoderSample) {
        if sample.timestamp < self.held_encoder.timestamp {
            self.dropped_rows += 1;
            return;
        }
        self.held_encoder = sample;
    }

    /// Process a fix: predict with the held encoder sample up to the fix
    /// time, then correct. Fixes older than the belief are dropped.
    pub fn handle_fix(&mut self, fix: GnssFix) -> Result<(), EkfError> {
        match &mut self.state {
            FilterStage::Bootstrapping { fixes } => {
                fixes.push(fix);
                if let Ok(belief) = initialize(fixes) {
                    self.state = FilterStage::Running {
                        belief,
                        time: fix.timestamp,
                    };
                }
                Ok(())
            }
            FilterStage::Running { belief, time } => {
                if fix.timestamp < *time {
                    self.dropped_rows += 1;
                    return Ok(());
                }
                let dt = fix.timestamp - *time;
                let predicted = if dt > 0.0 {
                    predict(belief, &self.held_encoder, dt.min(0.5), &self.params, &self.noise)?
                } else {
                    *belief
                };
                *belief = update(&predicted, &fix)?;
                *time = fix.timestamp;
                Ok(())
            }
        }
    }
}

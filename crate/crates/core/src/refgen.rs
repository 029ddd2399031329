//! Per-control-step discretization of the path into a local reference
//! trajectory.
//!
//! Each step projects the estimated front-axle position onto the path and
//! resamples the next look-ahead window into N+1 equally spaced reference
//! states. The reference speed is 90% of the speed limit; past the end of the
//! path the position clamps to the final waypoint and the reference speed
//! drops to zero, which turns the tail of the horizon into a stop request.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::localization::EkfBelief;
use crate::pathmodel::Path;
use crate::vehicle::{sensor_to_front, MpcInput, MpcState, VehicleParams};

#[derive(Debug, Error, PartialEq)]
pub enum RefGenError {
    #[error("invalid horizon parameter: {0}")]
    InvalidParam(&'static str),
}

/// Horizon sizing: the prediction horizon covers a fixed path length at the
/// speed limit, discretized at the controller rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonParams {
    /// Speed limit used to size the horizon, m/s.
    pub v_max: f64,
    /// Controller rate, Hz.
    pub f_mpc: f64,
    /// Path length the horizon must cover, m.
    pub horizon_length_m: f64,
    /// Fraction of full speed assumed for the look-ahead distance.
    pub lookahead_factor: f64,
}

impl HorizonParams {
    pub fn new(v_max: f64, f_mpc: f64) -> Self {
        Self {
            v_max,
            f_mpc,
            horizon_length_m: 6.0,
            lookahead_factor: 0.9,
        }
    }

    pub fn validate(&self) -> Result<(), RefGenError> {
        let all = [self.v_max, self.f_mpc, self.horizon_length_m, self.lookahead_factor];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(RefGenError::InvalidParam(
                "all horizon parameters must be positive and finite",
            ));
        }
        if self.horizon().steps < 1 {
            return Err(RefGenError::InvalidParam("horizon discretizes to zero steps"));
        }
        Ok(())
    }

    /// Derived horizon: duration `T`, step count `N`, look-ahead distance `d`.
    pub fn horizon(&self) -> Horizon {
        let duration = self.horizon_length_m / self.v_max;
        // Flooring keeps the realized horizon from exceeding T; the nudge
        // only absorbs floating-point noise when T·f is integral.
        let steps = (duration * self.f_mpc + 1e-9).floor() as usize;
        Horizon {
            duration,
            steps,
            lookahead: self.lookahead_factor * self.v_max * duration,
            dt: 1.0 / self.f_mpc,
            ref_speed: self.lookahead_factor * self.v_max,
        }
    }
}

/// Derived horizon quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizon {
    /// Horizon duration T, s.
    pub duration: f64,
    /// Number of discretization steps N.
    pub steps: usize,
    /// Look-ahead distance d, m.
    pub lookahead: f64,
    /// Stage duration 1/f_mpc, s.
    pub dt: f64,
    /// Reference speed, m/s.
    pub ref_speed: f64,
}

/// Time-discretized local reference: N+1 states and N (zero) inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct RefTrajectory {
    pub states: Vec<MpcState>,
    pub inputs: Vec<MpcInput>,
    /// Stage duration, s.
    pub dt: f64,
    /// Control-step timestamp this reference was generated at, s.
    pub t: f64,
}

impl RefTrajectory {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }
}

/// Build the local reference for one control step from the current belief.
pub fn build_reference(
    path: &Path,
    estimate: &EkfBelief,
    horizon_params: &HorizonParams,
    vehicle_params: &VehicleParams,
    t: f64,
) -> RefTrajectory {
    let horizon = horizon_params.horizon();
    let front = sensor_to_front(&estimate.mean, vehicle_params);
    let s0 = path.project(&front.pos).arc_length;
    let total = path.total_length();
    let spacing = horizon.lookahead / horizon.steps as f64;

    let mut states = Vec::with_capacity(horizon.steps + 1);
    for k in 0..=horizon.steps {
        let s_nominal = s0 + k as f64 * spacing;
        let (pos, heading) = path.sample(s_nominal);
        let speed = if s_nominal > total { 0.0 } else { horizon.ref_speed };
        states.push(MpcState::from_pose(pos, heading, speed, 0.0));
    }
    RefTrajectory {
        states,
        inputs: vec![MpcInput::default(); horizon.steps],
        dt: horizon.dt,
        t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathmodel::{build_path, PlanarPoint};
    use approx::assert_abs_diff_eq;
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::vehicle::EkfState;

    fn belief_at(x: f64, y: f64, heading: f64) -> EkfBelief {
        EkfBelief::new(EkfState::new(x, y, heading), Matrix3::identity() * 1e-4)
    }

    #[test]
    fn horizon_paper_constants() {
        let h = HorizonParams::new(0.7, 8.0).horizon();
        assert_abs_diff_eq!(h.duration, 6.0 / 0.7, epsilon = 1e-12);
        assert_eq!(h.steps, 68);
        assert_abs_diff_eq!(h.lookahead, 5.4, epsilon = 1e-9);
        assert_abs_diff_eq!(h.ref_speed, 0.63, epsilon = 1e-12);
    }

    #[test]
    fn horizon_integral_step_count() {
        let h = HorizonParams::new(0.75, 8.0).horizon();
        assert_abs_diff_eq!(h.duration, 8.0, epsilon = 1e-12);
        assert_eq!(h.steps, 64);
        assert_abs_diff_eq!(h.lookahead, 5.4, epsilon = 1e-9);
    }

    #[test]
    fn horizon_degenerate_small() {
        let h = HorizonParams::new(6.0, 1.0).horizon();
        assert_abs_diff_eq!(h.duration, 1.0);
        assert_eq!(h.steps, 1);
        assert_abs_diff_eq!(h.lookahead, 5.4, epsilon = 1e-9);
    }

    #[test]
    fn validate_rejects_zero_steps() {
        let mut p = HorizonParams::new(0.7, 8.0);
        p.f_mpc = 0.1;
        assert!(p.validate().is_err());
        assert!(HorizonParams::new(0.7, 8.0).validate().is_ok());
    }

    fn straight_path(len: f64) -> Path {
        build_path(
            &[PlanarPoint::new(0.0, 0.0), PlanarPoint::new(len, 0.0)],
            &[0.75],
        )
        .unwrap()
    }

    #[test]
    fn straight_reference_spacing_and_speed() {
        let path = straight_path(100.0);
        let hp = HorizonParams::new(0.7, 8.0);
        let vp = VehicleParams::default();
        // Sensor placed so the front axle is exactly at the path start.
        let belief = belief_at(-(vp.wheelbase - vp.sensor_offset), 0.0, 0.0);
        let r = build_reference(&path, &belief, &hp, &vp, 0.0);
        assert_eq!(r.states.len(), 69);
        assert_eq!(r.inputs.len(), 68);
        let spacing = 5.4 / 68.0;
        for (k, s) in r.states.iter().enumerate() {
            assert_abs_diff_eq!(s.pos.x, k as f64 * spacing, epsilon = 1e-9);
            assert_abs_diff_eq!(s.pos.y, 0.0);
            assert_abs_diff_eq!(s.heading_cos, 1.0);
            assert_abs_diff_eq!(s.heading_sin, 0.0);
            assert_abs_diff_eq!(s.speed, 0.63, epsilon = 1e-12);
            assert_abs_diff_eq!(s.steer, 0.0);
        }
        assert!(r.inputs.iter().all(|u| u.accel == 0.0 && u.steer_rate == 0.0));
    }

    #[test]
    fn reference_at_path_end_is_a_stop_request() {
        let path = straight_path(10.0);
        let hp = HorizonParams::new(0.7, 8.0);
        let vp = VehicleParams::default();
        let belief = belief_at(10.0 - (vp.wheelbase - vp.sensor_offset), 0.0, 0.0);
        let r = build_reference(&path, &belief, &hp, &vp, 0.0);
        for s in &r.states[1..] {
            assert_abs_diff_eq!(s.pos.x, 10.0);
            assert_abs_diff_eq!(s.speed, 0.0);
        }
        // s == total exactly at k = 0 keeps the nominal reference speed.
        assert_abs_diff_eq!(r.states[0].speed, 0.63, epsilon = 1e-12);
    }

    #[test]
    fn lateral_offset_does_not_change_the_reference() {
        let path = straight_path(100.0);
        let hp = HorizonParams::new(0.7, 8.0);
        let vp = VehicleParams::default();
        let on = build_reference(&path, &belief_at(2.0, 0.0, 0.0), &hp, &vp, 0.0);
        let off = build_reference(&path, &belief_at(2.0, 1.0, 0.0), &hp, &vp, 0.0);
        for (a, b) in on.states.iter().zip(off.states.iter()) {
            assert_abs_diff_eq!((a.pos - b.pos).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn reference_lies_on_the_centerline_with_unit_heading() {
        let path = build_path(
            &[
                PlanarPoint::new(0.0, 0.0),
                PlanarPoint::new(8.0, 0.0),
                PlanarPoint::new(8.0, 6.0),
                PlanarPoint::new(2.0, 6.0),
            ],
            &[0.75, 0.6, 0.9],
        )
        .unwrap();
        let hp = HorizonParams::new(0.7, 8.0);
        let vp = VehicleParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..50 {
            let belief = belief_at(
                rng.random_range(-1.0..9.0),
                rng.random_range(-1.0..7.0),
                rng.random_range(-3.0..3.0),
            );
            let r = build_reference(&path, &belief, &hp, &vp, 0.0);
            let mut last_s = 0.0;
            for (k, s) in r.states.iter().enumerate() {
                assert!(path.sdf(&s.pos) >= 1.0 - 1e-9, "reference off centerline");
                let embed = s.heading_cos * s.heading_cos + s.heading_sin * s.heading_sin;
                assert_abs_diff_eq!(embed, 1.0, epsilon = 1e-12);
                assert!(s.speed == 0.0 || (s.speed - 0.63).abs() < 1e-12);
                let proj = path.project(&s.pos).arc_length;
                if k > 0 {
                    assert!(proj >= last_s - 1e-9, "arc length moved backward");
                }
                last_s = proj;
            }
        }
    }

    #[test]
    fn spacing_shrinks_only_across_corners() {
        let path = build_path(
            &[
                PlanarPoint::new(0.0, 0.0),
                PlanarPoint::new(6.0, 0.0),
                PlanarPoint::new(6.0, 6.0),
            ],
            &[0.75, 0.75],
        )
        .unwrap();
        let hp = HorizonParams::new(0.7, 8.0);
        let vp = VehicleParams::default();
        let belief = belief_at(3.0 - (vp.wheelbase - vp.sensor_offset), 0.0, 0.0);
        let r = build_reference(&path, &belief, &hp, &vp, 0.0);
        let spacing = 5.4 / 68.0;
        for pair in r.states.windows(2) {
            let gap = (pair[1].pos - pair[0].pos).norm();
            assert!(gap <= spacing + 1e-12);
        }
        // On-segment spacing is exact.
        let gap0 = (r.states[1].pos - r.states[0].pos).norm();
        assert_abs_diff_eq!(gap0, spacing, epsilon = 1e-12);
    }

    /// Progress monotonicity across consecutive control steps while driving
    /// forward, including across the corner.
    #[test]
    fn reference_start_monotone_across_steps() {
        let path = build_path(
            &[
                PlanarPoint::new(0.0, 0.0),
                PlanarPoint::new(5.0, 0.0),
                PlanarPoint::new(5.0, 5.0),
            ],
            &[0.75, 0.75],
        )
        .unwrap();
        let hp = HorizonParams::new(0.7, 8.0);
        let vp = VehicleParams::default();
        // Continuous forward motion slightly outside the corner: straight,
        // a quarter arc around the corner point, straight again.
        let mut poses: Vec<PlanarPoint> = Vec::new();
        for i in 0..100 {
            poses.push(PlanarPoint::new(3.0 + i as f64 * 0.02, -0.1));
        }
        for i in 0..=50 {
            let theta = i as f64 / 50.0 * std::f64::consts::FRAC_PI_2;
            poses.push(PlanarPoint::new(5.0 + 0.1 * theta.sin(), -0.1 * theta.cos()));
        }
        for i in 1..100 {
            poses.push(PlanarPoint::new(5.1, i as f64 * 0.02));
        }
        let mut prev_s0 = -1.0;
        for p in poses {
            let belief = belief_at(p.x, p.y, 0.0);
            let r = build_reference(&path, &belief, &hp, &vp, 0.0);
            let s0 = path.project(&r.states[0].pos).arc_length;
            assert!(s0 >= prev_s0 - 1e-9, "reference start moved backward at {p:?}");
            prev_s0 = s0;
        }
    }
}

//! Cloud-side controllers.
//!
//! Longitudinal CACC computes an acceleration from the gap to the
//! predecessor and the speeds of predecessor and head vehicle; that
//! acceleration becomes a velocity command by one explicit Euler step from
//! the last received speed. Lateral control is pure pursuit on the track
//! centerline. The head vehicle follows a constant speed with a sinusoidal
//! perturbation armed at landmark E.

use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::dynamics::{VehicleParams, VehicleState};
use crate::geometry::{wrap_angle, Track};
use crate::MINIATURE_SCALE;

/// Minimum pure-pursuit lookahead, full-scale meters.
pub const LOOKAHEAD_MIN: f64 = 1.5;
/// Lookahead growth with speed, seconds.
pub const LOOKAHEAD_GAIN: f64 = 0.8;
/// Largest lateral offset at which the lateral controller still engages.
pub const MAX_LATERAL_OFFSET: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ControlError {
    #[error("vehicle is {0:.2} m off the centerline")]
    OffTrack(f64),
    #[error("invalid controller parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaccGains {
    pub k_p: f64,
    pub k_v1: f64,
    pub k_v2: f64,
    /// Desired gap, full-scale meters.
    pub d_des: f64,
}

impl CaccGains {
    /// Gains used for the miniature vehicles (0.6 m on the table).
    pub fn miniature() -> Self {
        Self {
            k_p: 0.25,
            k_v1: 0.60,
            k_v2: 0.60,
            d_des: 0.60 * MINIATURE_SCALE,
        }
    }

    /// Gains used for the virtual vehicles.
    pub fn virtual_vehicle() -> Self {
        Self {
            k_p: 0.10,
            k_v1: 0.50,
            k_v2: 0.50,
            d_des: 0.60 * MINIATURE_SCALE,
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if [self.k_p, self.k_v1, self.k_v2, self.d_des]
            .iter()
            .all(|g| g.is_finite() && *g > 0.0)
        {
            Ok(())
        } else {
            Err(ControlError::InvalidParams("CACC gains and d_des must be positive"))
        }
    }
}

/// The platoon law. `p_i` and `p_prev` are unwrapped arc-lengths
/// with the follower behind (`p_i < p_prev`), so `p_prev - p_i` is the gap.
pub fn cacc_accel(g: &CaccGains, p_i: f64, p_prev: f64, v_i: f64, v_prev: f64, v_head: f64) -> f64 {
    g.k_p * ((p_prev - p_i) - g.d_des) + g.k_v1 * (v_head - v_i) + g.k_v2 * (v_prev - v_i)
}

/// Same law against a stopped virtual leader `gap` meters ahead.
pub fn cacc_accel_stopped_leader(g: &CaccGains, gap: f64, v_i: f64) -> f64 {
    cacc_accel(g, 0.0, gap, v_i, 0.0, 0.0)
}

/// One Euler step from the last received speed, floored at zero.
pub fn accel_to_vcmd(v_prev_received: f64, a: f64, dt: f64) -> f64 {
    (v_prev_received + a * dt).max(0.0)
}

pub fn lookahead(v: f64) -> f64 {
    LOOKAHEAD_MIN.max(LOOKAHEAD_GAIN * v)
}

/// Pure-pursuit steering toward the centerline point whose straight-line
/// distance from the rear axle equals the lookahead.
pub fn lateral_preview(state: &VehicleState, track: &Track, params: &VehicleParams) -> Result<f64, ControlError> {
    let proj = track.project(state.pose);
    if proj.lateral_error.abs() > MAX_LATERAL_OFFSET {
        return Err(ControlError::OffTrack(proj.lateral_error));
    }
    let ld = lookahead(state.v);
    let dist = |s: f64| {
        let p = track.point_at(s);
        ((p.x - state.pose.x).powi(2) + (p.y - state.pose.y).powi(2)).sqrt()
    };
    // march forward to bracket the lookahead circle, then bisect
    let step = 0.25;
    let (mut lo, mut hi) = (proj.s, proj.s);
    let limit = proj.s + ld + MAX_LATERAL_OFFSET + 2.0 * step;
    while dist(hi) < ld && hi < limit {
        lo = hi;
        hi += step;
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if dist(mid) < ld {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let target = track.point_at(hi);
    let bearing = (target.y - state.pose.y).atan2(target.x - state.pose.x);
    let alpha = wrap_angle(bearing - state.pose.theta);
    let phi = (2.0 * params.wheelbase * alpha.sin() / ld).atan();
    Ok(phi.clamp(-params.steer_max, params.steer_max))
}

/// Speed profile of the head vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadProfile {
    pub base_speed: f64,
    pub perturb_amplitude: f64,
    pub perturb_period: f64,
    pub trigger_arclength: f64,
    pub perturb_cycles: u32,
}

impl HeadProfile {
    /// 0.3 m/s cruise with a 0.1 m/s, 3.5 s sinusoid on the table, at full scale.
    pub fn experiment() -> Self {
        Self {
            base_speed: 0.3 * MINIATURE_SCALE,
            perturb_amplitude: 0.1 * MINIATURE_SCALE,
            perturb_period: 3.5,
            trigger_arclength: 0.0,
            perturb_cycles: 2,
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if !(self.base_speed > self.perturb_amplitude && self.perturb_amplitude >= 0.0) {
            return Err(ControlError::InvalidParams("need base_speed > perturb_amplitude >= 0"));
        }
        if !(self.perturb_period > 0.0 && self.perturb_period.is_finite()) {
            return Err(ControlError::InvalidParams("perturb_period must be positive"));
        }
        Ok(())
    }

    pub fn perturb_duration(&self) -> f64 {
        self.perturb_period * self.perturb_cycles as f64
    }
}

/// Head speed reference. `t_since_trigger` is `None` until the head first
/// reaches the trigger arc-length.
pub fn head_reference(profile: &HeadProfile, t_since_trigger: Option<f64>) -> f64 {
    match t_since_trigger {
        Some(t) if t >= 0.0 && t < profile.perturb_duration() => {
            profile.base_speed + profile.perturb_amplitude * (2.0 * PI * t / profile.perturb_period).sin()
        }
        _ => profile.base_speed,
    }
}

/// True when moving forward from `s_prev` to `s_now` (both wrapped into
/// `[0, lap)`) passes `target`. Motion is taken as the shorter way round, so
/// small backward jitter in a noisy position never reads as a full lap.
pub fn crossed(lap: f64, s_prev: f64, s_now: f64, target: f64) -> bool {
    let travelled = crate::geometry::modulo(s_now - s_prev + 0.5 * lap, lap) - 0.5 * lap;
    let to_target = crate::geometry::modulo(target - s_prev, lap);
    travelled > 0.0 && to_target > 0.0 && to_target <= travelled
}

/// How the cloud drives a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Controller {
    Cacc(CaccGains),
    HeadProfile(HeadProfile),
    Human,
    None,
}

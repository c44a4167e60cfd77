//! Vehicle motion.
//!
//! Virtual vehicles integrate the kinematic bicycle model directly with an
//! acceleration and a front-wheel angle. Emulated miniature vehicles take a
//! velocity / steering command and reach it through first-order actuator
//! lags with Gaussian velocity disturbance, then integrate the same model.
//! All quantities are full scale.

use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Pose2D};
use crate::rng::{gaussian, Stream};
use crate::MINIATURE_SCALE;

/// Wheelbase of the miniature vehicle, meters on the sand table.
pub const MINIATURE_WHEELBASE: f64 = 0.140;
/// Highest stable speed of the miniature vehicle, m/s on the sand table.
pub const MINIATURE_V_MAX: f64 = 1.0;
/// Largest front-wheel angle, degrees.
pub const STEER_MAX_DEG: f64 = 40.0;
/// Default acceleration saturation, full-scale m/s².
pub const DEFAULT_ACCEL_MAX: f64 = 2.5;
/// Longest admissible integration step, seconds.
pub const MAX_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VehicleKind {
    Virtual,
    EmulatedPhysical,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    #[error("timestep {0} s outside (0, 0.1]")]
    InvalidTimestep(f64),
    #[error("invalid vehicle parameters: {0}")]
    InvalidParams(&'static str),
}

/// Physical description of one vehicle, full scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub v_max: f64,
    pub steer_max: f64,
    /// Longitudinal acceleration saturation, m/s².
    pub accel_max: f64,
    /// Velocity-tracking time constant (emulated physical only).
    pub actuator_tau_v: f64,
    /// Steering time constant (emulated physical only).
    pub actuator_tau_phi: f64,
    /// Velocity disturbance intensity, m/s per √s.
    pub process_noise_sigma_v: f64,
    pub kind: VehicleKind,
}

impl VehicleParams {
    /// The emulated miniature vehicle, expressed at full scale.
    pub fn emulated_physical() -> Self {
        Self {
            wheelbase: MINIATURE_WHEELBASE * MINIATURE_SCALE,
            v_max: MINIATURE_V_MAX * MINIATURE_SCALE,
            steer_max: STEER_MAX_DEG * PI / 180.0,
            accel_max: DEFAULT_ACCEL_MAX,
            actuator_tau_v: 0.02,
            actuator_tau_phi: 0.10,
            process_noise_sigma_v: 0.02 * MINIATURE_SCALE,
            kind: VehicleKind::EmulatedPhysical,
        }
    }

    /// A virtual vehicle with the 14:1 replica's geometry and ideal actuation.
    pub fn virtual_replica() -> Self {
        Self {
            actuator_tau_v: 0.0,
            actuator_tau_phi: 0.0,
            process_noise_sigma_v: 0.0,
            kind: VehicleKind::Virtual,
            ..Self::emulated_physical()
        }
    }

    pub fn for_kind(kind: VehicleKind) -> Self {
        match kind {
            VehicleKind::Virtual => Self::virtual_replica(),
            VehicleKind::EmulatedPhysical => Self::emulated_physical(),
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let all = [
            self.wheelbase,
            self.v_max,
            self.steer_max,
            self.accel_max,
            self.actuator_tau_v,
            self.actuator_tau_phi,
            self.process_noise_sigma_v,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(DynamicsError::InvalidParams("non-finite parameter"));
        }
        if self.wheelbase <= 0.0 || self.v_max <= 0.0 || self.accel_max <= 0.0 {
            return Err(DynamicsError::InvalidParams("wheelbase, v_max and accel_max must be positive"));
        }
        if !(self.steer_max > 0.0 && self.steer_max <= PI / 2.0) {
            return Err(DynamicsError::InvalidParams("steer_max must lie in (0, π/2]"));
        }
        if self.actuator_tau_v < 0.0 || self.actuator_tau_phi < 0.0 || self.process_noise_sigma_v < 0.0 {
            return Err(DynamicsError::InvalidParams("lags and noise must be non-negative"));
        }
        if self.kind == VehicleKind::Virtual
            && (self.actuator_tau_v != 0.0 || self.actuator_tau_phi != 0.0 || self.process_noise_sigma_v != 0.0)
        {
            return Err(DynamicsError::InvalidParams("virtual vehicles have no actuator lag or noise"));
        }
        Ok(())
    }
}

/// Kinematic state plus the command currently being tracked.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: Pose2D,
    pub v: f64,
    pub phi: f64,
    pub v_cmd: f64,
    pub phi_cmd: f64,
    pub timestamp: f64,
}

impl VehicleState {
    pub fn at_rest(pose: Pose2D, timestamp: f64) -> Self {
        Self {
            pose,
            timestamp,
            ..Self::default()
        }
    }
}

fn check_dt(dt: f64) -> Result<(), DynamicsError> {
    if dt > 0.0 && dt <= MAX_DT {
        Ok(())
    } else {
        Err(DynamicsError::InvalidTimestep(dt))
    }
}

/// (x, y, θ, v)
type Kin = [f64; 4];

fn rk4(k: Kin, a: f64, curvature_gain: f64, h: f64) -> Kin {
    let f = |s: Kin| -> Kin { [s[3] * s[2].cos(), s[3] * s[2].sin(), s[3] * curvature_gain, a] };
    let add = |s: Kin, d: Kin, w: f64| -> Kin { [s[0] + w * d[0], s[1] + w * d[1], s[2] + w * d[2], s[3] + w * d[3]] };
    let k1 = f(k);
    let k2 = f(add(k, k1, h / 2.0));
    let k3 = f(add(k, k2, h / 2.0));
    let k4 = f(add(k, k3, h));
    [
        k[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        k[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        k[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        k[3] + h / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
    ]
}

/// One RK4 step of the bicycle model under constant acceleration `a` and
/// front-wheel angle `phi`. Speed saturates at 0 and `v_max`; when it would
/// cross either bound inside the step, the step is split at the crossing.
pub fn step_bicycle(
    s: &VehicleState,
    p: &VehicleParams,
    a: f64,
    phi: f64,
    dt: f64,
) -> Result<VehicleState, DynamicsError> {
    check_dt(dt)?;
    let phi = phi.clamp(-p.steer_max, p.steer_max);
    let gain = phi.tan() / p.wheelbase;
    let v0 = s.v.clamp(0.0, p.v_max);
    let mut k: Kin = [s.pose.x, s.pose.y, s.pose.theta, v0];

    let v_end = v0 + a * dt;
    let split = if v_end < 0.0 && a < 0.0 {
        Some((-v0 / a, 0.0))
    } else if v_end > p.v_max && a > 0.0 {
        Some(((p.v_max - v0) / a, p.v_max))
    } else {
        None
    };
    match split {
        Some((t_hit, v_bound)) => {
            if t_hit > 0.0 {
                k = rk4(k, a, gain, t_hit);
            }
            k[3] = v_bound;
            let rest = dt - t_hit.max(0.0);
            if rest > 0.0 && v_bound > 0.0 {
                k = rk4(k, 0.0, gain, rest);
            }
        }
        None => k = rk4(k, a, gain, dt),
    }

    Ok(VehicleState {
        pose: Pose2D::new(k[0], k[1], k[2]),
        v: k[3].clamp(0.0, p.v_max),
        phi,
        timestamp: s.timestamp + dt,
        ..*s
    })
}

fn lag_toward(current: f64, target: f64, tau: f64, dt: f64) -> f64 {
    if tau <= 0.0 {
        target
    } else {
        target + (current - target) * (-dt / tau).exp()
    }
}

/// One step of the emulated miniature vehicle: the velocity disturbance is
/// applied, speed and wheel angle relax toward `v_cmd` / `phi_cmd` through
/// first-order lags (speed changes saturated at `accel_max`), and the pose
/// is integrated with the lagged values.
pub fn step_emulated_physical(
    s: &VehicleState,
    p: &VehicleParams,
    dt: f64,
    rng: &mut Stream,
) -> Result<VehicleState, DynamicsError> {
    check_dt(dt)?;
    let mut start = *s;
    if p.process_noise_sigma_v > 0.0 {
        start.v = (start.v + gaussian(rng, 0.0, p.process_noise_sigma_v * dt.sqrt())).clamp(0.0, p.v_max);
    }
    let v_target = lag_toward(start.v, s.v_cmd, p.actuator_tau_v, dt);
    let a = ((v_target - start.v) / dt).clamp(-p.accel_max, p.accel_max);
    let phi = lag_toward(s.phi, s.phi_cmd, p.actuator_tau_phi, dt);
    step_bicycle(&start, p, a, phi, dt)
}

/// Acceleration that reaches the commanded speed in `dt`, saturated at `accel_max`.
pub fn command_to_accel(s: &VehicleState, dt: f64, accel_max: f64) -> f64 {
    ((s.v_cmd - s.v) / dt).clamp(-accel_max, accel_max)
}

/// Heading change helper used by tests and calibration: unwraps `to - from`.
pub fn heading_delta(from: f64, to: f64) -> f64 {
    wrap_angle(to - from)
}

#[cfg(test)]
mod tests {
    extern crate std;
    use super::*;
    use crate::rng::{stream, Purpose};
    use std::vec::Vec;

    fn cruising(v: f64) -> VehicleState {
        VehicleState {
            v,
            v_cmd: v,
            ..VehicleState::default()
        }
    }

    #[test]
    fn straight_line_advances_exactly() {
        let p = VehicleParams::virtual_replica();
        let s = step_bicycle(&cruising(1.0), &p, 0.0, 0.0, 0.1).unwrap();
        assert!((s.pose.x - 0.1).abs() < 1e-15);
        assert_eq!(s.pose.y, 0.0);
        assert_eq!(s.pose.theta, 0.0);
        assert_eq!(s.v, 1.0);
    }

    #[test]
    fn constant_acceleration_matches_kinematics() {
        let p = VehicleParams::virtual_replica();
        let s = step_bicycle(&VehicleState::default(), &p, 0.5, 0.0, 0.1).unwrap();
        // v t + a t² / 2
        assert!((s.v - 0.05).abs() < 1e-15);
        assert!((s.pose.x - 0.0025).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_timesteps() {
        let p = VehicleParams::virtual_replica();
        for dt in [0.0, -0.01, 0.2, f64::NAN] {
            assert!(matches!(
                step_bicycle(&cruising(1.0), &p, 0.0, 0.0, dt),
                Err(DynamicsError::InvalidTimestep(_))
            ));
        }
        let mut rng = stream(0, Purpose::ProcessNoise, 0);
        assert!(step_emulated_physical(&cruising(1.0), &VehicleParams::emulated_physical(), 0.5, &mut rng).is_err());
    }

    #[test]
    fn constant_steer_traces_circle_of_radius_l_over_tan_phi() {
        let p = VehicleParams::virtual_replica();
        let phi = 0.2;
        let radius = p.wheelbase / phi.tan();
        let (cx, cy) = (0.0, radius);
        let dt = 0.01;
        let mut s = cruising(1.0);
        let steps = (2.0 * PI * radius / dt).ceil() as usize;
        let mut worst = 0.0f64;
        for _ in 0..steps {
            s = step_bicycle(&s, &p, 0.0, phi, dt).unwrap();
            let r = ((s.pose.x - cx).powi(2) + (s.pose.y - cy).powi(2)).sqrt();
            worst = worst.max((r - radius).abs() / radius);
        }
        assert!(worst < 1e-3, "relative radius error {worst}");
        assert_eq!(s.v, 1.0);
    }

    #[test]
    fn heading_rate_is_v_over_l_tan_phi() {
        let p = VehicleParams::virtual_replica();
        let (v, phi) = (4.2, 0.1);
        let expected = v / p.wheelbase * phi.tan();
        let one = step_bicycle(&cruising(v), &p, 0.0, phi, 0.01).unwrap();
        let mut half = step_bicycle(&cruising(v), &p, 0.0, phi, 0.005).unwrap();
        half = step_bicycle(&half, &p, 0.0, phi, 0.005).unwrap();
        let r1 = one.pose.theta / 0.01;
        let r2 = half.pose.theta / 0.01;
        assert!((r1 - expected).abs() / expected < 1e-4);
        assert!((r2 - expected).abs() / expected < 1e-4);
    }

    #[test]
    fn speed_saturates_without_overshoot() {
        let p = VehicleParams::virtual_replica();
        let s = step_bicycle(&cruising(0.1), &p, -2.0, 0.0, 0.1).unwrap();
        assert_eq!(s.v, 0.0);
        // travels only until it stops: v²/2a
        assert!((s.pose.x - 0.0025).abs() < 1e-12);
        let near_max = cruising(p.v_max - 0.05);
        let s = step_bicycle(&near_max, &p, 2.5, 0.0, 0.1).unwrap();
        assert_eq!(s.v, p.v_max);
    }

    #[test]
    fn converged_actuator_matches_ideal_step() {
        let p = VehicleParams {
            process_noise_sigma_v: 0.0,
            ..VehicleParams::emulated_physical()
        };
        let s = VehicleState {
            v: 3.0,
            v_cmd: 3.0,
            phi: 0.1,
            phi_cmd: 0.1,
            ..VehicleState::default()
        };
        let mut rng = stream(0, Purpose::ProcessNoise, 0);
        let a = step_emulated_physical(&s, &p, 0.01, &mut rng).unwrap();
        let b = step_bicycle(&s, &p, 0.0, 0.1, 0.01).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn first_order_lag_hits_one_time_constant() {
        let p = VehicleParams {
            actuator_tau_v: 0.25,
            process_noise_sigma_v: 0.0,
            ..VehicleParams::emulated_physical()
        };
        let mut s = VehicleState {
            v_cmd: 0.5,
            ..VehicleState::default()
        };
        let mut rng = stream(0, Purpose::ProcessNoise, 0);
        for _ in 0..25 {
            s = step_emulated_physical(&s, &p, 0.01, &mut rng).unwrap();
        }
        let expected = 0.5 * (1.0 - (-1.0f64).exp());
        assert!((s.v - expected).abs() / expected < 0.01, "{} vs {}", s.v, expected);
    }

    #[test]
    fn velocity_noise_is_zero_mean() {
        let p = VehicleParams::emulated_physical();
        let v_cmd = 4.2;
        let mut s = cruising(v_cmd);
        let mut rng = stream(11, Purpose::ProcessNoise, 3);
        let mut vs = Vec::with_capacity(10_000);
        for _ in 0..10_000 {
            s = step_emulated_physical(&s, &p, 0.01, &mut rng).unwrap();
            vs.push(s.v);
        }
        // batch means handle the autocorrelation of the lagged process
        let batches: Vec<f64> = vs.chunks(100).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        let m = batches.iter().sum::<f64>() / batches.len() as f64;
        let var = batches.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (batches.len() - 1) as f64;
        let se = (var / batches.len() as f64).sqrt();
        assert!((m - v_cmd).abs() < 3.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn vanishing_lag_converges_to_ideal_bicycle() {
        let phys = VehicleParams {
            actuator_tau_v: 1e-9,
            actuator_tau_phi: 1e-9,
            process_noise_sigma_v: 0.0,
            ..VehicleParams::emulated_physical()
        };
        let virt = VehicleParams::virtual_replica();
        let mut a = cruising(4.2);
        let mut b = a;
        let mut rng = stream(0, Purpose::ProcessNoise, 0);
        let mut worst = 0.0f64;
        for k in 0..6000 {
            let phi_cmd = if (k / 500) % 2 == 0 { 0.08 } else { -0.05 };
            a.phi_cmd = phi_cmd;
            a = step_emulated_physical(&a, &phys, 0.01, &mut rng).unwrap();
            b = step_bicycle(&b, &virt, 0.0, phi_cmd, 0.01).unwrap();
            worst = worst.max(((a.pose.x - b.pose.x).powi(2) + (a.pose.y - b.pose.y).powi(2)).sqrt());
        }
        assert!(worst < 1e-3, "max deviation {worst}");
    }

    #[test]
    fn command_to_accel_examples() {
        let s = VehicleState {
            v: 0.3,
            v_cmd: 0.305,
            ..VehicleState::default()
        };
        assert!((command_to_accel(&s, 0.05, 2.5) - 0.1).abs() < 1e-12);
        let s = VehicleState {
            v: 0.0,
            v_cmd: 10.0,
            ..VehicleState::default()
        };
        assert_eq!(command_to_accel(&s, 0.05, 2.0), 2.0);
        assert_eq!(command_to_accel(&cruising(3.0), 0.05, 2.0), 0.0);
    }

    #[test]
    fn params_invariants() {
        assert!(VehicleParams::emulated_physical().validate().is_ok());
        assert!(VehicleParams::virtual_replica().validate().is_ok());
        let bad = VehicleParams {
            actuator_tau_v: 0.1,
            ..VehicleParams::virtual_replica()
        };
        assert!(bad.validate().is_err());
        let bad = VehicleParams {
            steer_max: 2.0,
            ..VehicleParams::virtual_replica()
        };
        assert!(bad.validate().is_err());
    }
}

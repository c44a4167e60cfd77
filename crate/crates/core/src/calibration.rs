//! Step-response comparison between the emulated miniature vehicle and its
//! virtual replica.
//!
//! Both vehicles receive the same command step and are integrated side by
//! side; the result is the sampled pair of response profiles plus their mean
//! absolute deviation.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::dynamics::{command_to_accel, step_bicycle, step_emulated_physical, DynamicsError, VehicleParams, VehicleState};
use crate::geometry::Pose2D;
use crate::rng::{stream, Purpose};

/// m/s to km/h.
pub const KMH_PER_MS: f64 = 3.6;

/// Which input is stepped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepInput {
    /// Speed command from rest to `target` m/s, wheels straight.
    Longitudinal { target: f64 },
    /// Steering command from 0 to `target` rad at a constant cruise speed.
    Lateral { cruise: f64, target: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepProtocol {
    pub input: StepInput,
    pub duration: f64,
    pub physics_dt: f64,
    pub seed: u64,
}

impl StepProtocol {
    /// Speed step 0 → 7 m/s full scale, observed for 10 s.
    pub fn longitudinal() -> Self {
        Self {
            input: StepInput::Longitudinal { target: 7.0 },
            duration: 10.0,
            physics_dt: 0.01,
            seed: 1,
        }
    }

    /// Steering step 0 → 0.1 rad while cruising at 4.2 m/s, observed for 10 s.
    pub fn lateral() -> Self {
        Self {
            input: StepInput::Lateral { cruise: 4.2, target: 0.1 },
            duration: 10.0,
            physics_dt: 0.01,
            seed: 1,
        }
    }
}

/// Sampled response profiles. For a longitudinal step the samples are speeds
/// in km/h, for a lateral step unwrapped headings in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct StepComparison {
    pub t: Vec<f64>,
    pub virtual_response: Vec<f64>,
    pub emulated_response: Vec<f64>,
}

impl StepComparison {
    pub fn mean_abs_deviation(&self) -> f64 {
        if self.t.is_empty() {
            return 0.0;
        }
        let sum: f64 = self
            .virtual_response
            .iter()
            .zip(&self.emulated_response)
            .map(|(a, b)| (a - b).abs())
            .sum();
        sum / self.t.len() as f64
    }
}

/// Runs both vehicles through the protocol.
pub fn step_response(
    protocol: &StepProtocol,
    emulated: &VehicleParams,
    replica: &VehicleParams,
) -> Result<StepComparison, DynamicsError> {
    let dt = protocol.physics_dt;
    let steps = (protocol.duration / dt).round() as u64;
    let mut start = VehicleState::at_rest(Pose2D::new(0.0, 0.0, 0.0), 0.0);
    match protocol.input {
        StepInput::Longitudinal { target } => start.v_cmd = target,
        StepInput::Lateral { cruise, target } => {
            start.v = cruise;
            start.v_cmd = cruise;
            start.phi_cmd = target;
        }
    }
    let mut ideal = start;
    let mut lagged = start;
    let mut rng = stream(protocol.seed, Purpose::ProcessNoise, 0);

    let lateral = matches!(protocol.input, StepInput::Lateral { .. });
    let mut heading = [0.0f64; 2];
    let mut out = StepComparison {
        t: Vec::with_capacity(steps as usize + 1),
        virtual_response: Vec::with_capacity(steps as usize + 1),
        emulated_response: Vec::with_capacity(steps as usize + 1),
    };
    let mut record = |n: u64, a: &VehicleState, b: &VehicleState, heading: &[f64; 2]| {
        out.t.push(n as f64 * dt);
        if lateral {
            out.virtual_response.push(heading[0]);
            out.emulated_response.push(heading[1]);
        } else {
            out.virtual_response.push(a.v * KMH_PER_MS);
            out.emulated_response.push(b.v * KMH_PER_MS);
        }
    };
    record(0, &ideal, &lagged, &heading);
    for n in 1..=steps {
        let a = command_to_accel(&ideal, dt, replica.accel_max);
        let next_ideal = step_bicycle(&ideal, replica, a, ideal.phi_cmd, dt)?;
        let next_lagged = step_emulated_physical(&lagged, emulated, dt, &mut rng)?;
        heading[0] += crate::dynamics::heading_delta(ideal.pose.theta, next_ideal.pose.theta);
        heading[1] += crate::dynamics::heading_delta(lagged.pose.theta, next_lagged.pose.theta);
        ideal = next_ideal;
        lagged = next_lagged;
        record(n, &ideal, &lagged, &heading);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    extern crate std;
    use super::*;

    fn defaults(protocol: StepProtocol) -> StepComparison {
        step_response(&protocol, &VehicleParams::emulated_physical(), &VehicleParams::virtual_replica()).unwrap()
    }

    #[test]
    fn identical_vehicles_do_not_deviate() {
        let mut p = VehicleParams::emulated_physical();
        p.actuator_tau_v = 0.0;
        p.actuator_tau_phi = 0.0;
        p.process_noise_sigma_v = 0.0;
        for protocol in [StepProtocol::longitudinal(), StepProtocol::lateral()] {
            let c = step_response(&protocol, &p, &VehicleParams::virtual_replica()).unwrap();
            assert!(c.mean_abs_deviation() < 1e-9, "{}", c.mean_abs_deviation());
        }
    }

    #[test]
    fn longitudinal_step_within_reported_deviation() {
        let c = defaults(StepProtocol::longitudinal());
        assert_eq!(c.t.len(), 1001);
        // accel-limited ramp: 7 m/s at 2.5 m/s² takes 2.8 s
        let at = |t: f64| c.virtual_response[(t / 0.01).round() as usize];
        assert!((at(1.0) - 2.5 * KMH_PER_MS).abs() < 1e-9);
        assert!((at(5.0) - 7.0 * KMH_PER_MS).abs() < 1e-9);
        assert!(c.mean_abs_deviation() <= 0.34, "{}", c.mean_abs_deviation());
    }

    #[test]
    fn lateral_step_within_reported_deviation() {
        let c = defaults(StepProtocol::lateral());
        // ideal yaw rate v·tan(φ)/L
        let rate = 4.2 * 0.1f64.tan() / VehicleParams::virtual_replica().wheelbase;
        let last = *c.virtual_response.last().unwrap();
        assert!((last - 10.0 * rate).abs() < 1e-6 * last.abs(), "{last}");
        let mad = c.mean_abs_deviation();
        assert!(mad > 0.0 && mad <= 0.055, "{mad}");
    }

    #[test]
    fn slower_actuator_widens_the_gap() {
        let mut slow = VehicleParams::emulated_physical();
        slow.actuator_tau_v = 0.5;
        let p = StepProtocol::longitudinal();
        let fast = defaults(p).mean_abs_deviation();
        let wide = step_response(&p, &slow, &VehicleParams::virtual_replica()).unwrap().mean_abs_deviation();
        assert!(wide > fast);
    }
}

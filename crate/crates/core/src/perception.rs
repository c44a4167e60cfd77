//! Roadside localization emulator.
//!
//! Replaces the overhead cameras and color-block detection with their
//! measured error statistics: biased Gaussian position noise per axis,
//! heading noise, a fixed frame rate and a Gaussian processing delay.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleState;
use crate::geometry::{convert_pose, Frame, Pose2D};
use crate::message::{EntityId, Message, ObsReport};
use crate::rng::{gaussian, Stream};

/// Noise statistics of the roadside camera pipeline. Position figures are
/// millimeters on the sand table; delays are milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationModel {
    pub noise_mean_x: f64,
    pub noise_std_x: f64,
    pub noise_mean_y: f64,
    pub noise_std_y: f64,
    /// Radians.
    pub heading_noise_std: f64,
    /// Hz.
    pub frame_rate: f64,
    pub processing_delay_mean: f64,
    pub processing_delay_std: f64,
}

impl Default for LocalizationModel {
    fn default() -> Self {
        Self {
            noise_mean_x: 15.18,
            noise_std_x: 19.65,
            noise_mean_y: 6.68,
            noise_std_y: 16.73,
            heading_noise_std: 0.02,
            frame_rate: 20.0,
            processing_delay_mean: 49.55,
            processing_delay_std: 1.39,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("localization model has a negative or non-finite standard deviation")]
    BadStd,
    #[error("frame rate must be positive")]
    BadFrameRate,
}

impl LocalizationModel {
    /// A perfect camera: no noise, no bias, no processing delay.
    pub fn noiseless() -> Self {
        Self {
            noise_mean_x: 0.0,
            noise_std_x: 0.0,
            noise_mean_y: 0.0,
            noise_std_y: 0.0,
            heading_noise_std: 0.0,
            processing_delay_mean: 0.0,
            processing_delay_std: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let stds = [self.noise_std_x, self.noise_std_y, self.heading_noise_std, self.processing_delay_std];
        if stds.iter().any(|s| !(s.is_finite() && *s >= 0.0))
            || ![self.noise_mean_x, self.noise_mean_y, self.processing_delay_mean]
                .iter()
                .all(|m| m.is_finite())
        {
            return Err(ModelError::BadStd);
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(ModelError::BadFrameRate);
        }
        Ok(())
    }

    pub fn frame_period(&self) -> f64 {
        1.0 / self.frame_rate
    }

    /// One processing delay in seconds, truncated at zero.
    pub fn sample_delay(&self, rng: &mut Stream) -> f64 {
        gaussian(rng, self.processing_delay_mean, self.processing_delay_std).max(0.0) / 1000.0
    }
}

/// A localization fix in the miniature frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub vehicle_id: EntityId,
    pub pose: Pose2D,
    pub capture_time: f64,
    pub available_time: f64,
}

impl Observation {
    /// Wire form, converted to full-scale meters.
    pub fn to_message(&self) -> Message {
        let p = convert_pose(self.pose, Frame::MINIATURE, Frame::FULL);
        Message::Obs(ObsReport {
            id: self.vehicle_id.clone(),
            t_cap: self.capture_time,
            x: p.x,
            y: p.y,
            theta: p.theta,
        })
    }
}

/// Samples one camera fix of `truth` (full-scale state) captured at `t`.
pub fn observe(
    id: &EntityId,
    truth: &VehicleState,
    model: &LocalizationModel,
    t: f64,
    rng: &mut Stream,
) -> Observation {
    let mini = convert_pose(truth.pose, Frame::FULL, Frame::MINIATURE);
    let dx = gaussian(rng, model.noise_mean_x, model.noise_std_x) / 1000.0;
    let dy = gaussian(rng, model.noise_mean_y, model.noise_std_y) / 1000.0;
    let dtheta = gaussian(rng, 0.0, model.heading_noise_std);
    let delay = model.sample_delay(rng);
    Observation {
        vehicle_id: id.clone(),
        pose: Pose2D::new(mini.x + dx, mini.y + dy, mini.theta + dtheta),
        capture_time: t,
        available_time: t + delay,
    }
}

/// Capture instants `k / frame_rate` lying in `[t_start, t_end)`.
pub fn frame_schedule(model: &LocalizationModel, t_start: f64, t_end: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if !(t_start < t_end) {
        return out;
    }
    let fr = model.frame_rate;
    let mut k = (t_start * fr - 1e-9).ceil() as i64;
    loop {
        let t = k as f64 / fr;
        if t >= t_end {
            break;
        }
        if t >= t_start - 1e-12 {
            out.push(t);
        }
        k += 1;
    }
    out
}

/// True when `t` falls on a capture instant (within 1 µs).
pub fn is_frame_time(model: &LocalizationModel, t: f64) -> bool {
    let k = (t * model.frame_rate).round();
    (k / model.frame_rate - t).abs() < 1e-6
}

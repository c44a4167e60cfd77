#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Fixed-step simulation cadence. Time is always derived from an integer
/// step index so that long runs never accumulate rounding drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cadence {
    /// Physics tick, seconds.
    pub physics_dt: f64,
    /// Physics ticks per control (and camera) period.
    pub ticks_per_control: u32,
}

impl Default for Cadence {
    /// 100 Hz physics beneath a 20 Hz control loop.
    fn default() -> Self {
        Self {
            physics_dt: 0.01,
            ticks_per_control: 5,
        }
    }
}

impl Cadence {
    pub fn control_dt(&self) -> f64 {
        self.physics_dt * self.ticks_per_control as f64
    }

    pub fn time_of(&self, step: u64) -> f64 {
        step as f64 * self.physics_dt
    }

    pub fn is_control_step(&self, step: u64) -> bool {
        step.is_multiple_of(self.ticks_per_control as u64)
    }

    /// Number of physics steps covering `duration` seconds.
    pub fn steps_for(&self, duration: f64) -> u64 {
        // round, then guard against 119.99999 style durations
        let n = duration / self.physics_dt;
        let r = (n + 0.5) as u64;
        if (r as f64 - n).abs() < 1e-6 {
            r
        } else {
            n as u64 + 1
        }
    }
}

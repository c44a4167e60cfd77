//! Vehicle-side processes.
//!
//! A [`VehicleAgent`] owns one vehicle's true state. It integrates its own
//! dynamics, reports state upstream every physics tick, executes the
//! commands it receives, and (for emulated miniature vehicles) produces
//! roadside camera fixes. A scripted driver can stand in for a human at the
//! driving console. The same type runs inside the lockstep engine and inside
//! a standalone agent process.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::dynamics::{command_to_accel, step_bicycle, step_emulated_physical, DynamicsError, VehicleKind, VehicleParams, VehicleState};
use crate::geometry::FrameId;
use crate::message::{ControlCommand, EntityId, Message, StateReport, WireKind};
use crate::netsim::LinkId;
use crate::perception::{is_frame_time, observe, LocalizationModel, Observation};
use crate::rng::{gaussian, stream, Purpose, Stream};

/// Where a vehicle comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Virtual,
    Physical,
    Hdv,
}

impl SourceKind {
    pub fn wire(self) -> WireKind {
        match self {
            SourceKind::Virtual => WireKind::Virtual,
            SourceKind::Physical => WireKind::Physical,
            SourceKind::Hdv => WireKind::Hdv,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Virtual => "virtual",
            SourceKind::Physical => "physical",
            SourceKind::Hdv => "hdv",
        }
    }

    /// Default dynamics for this source.
    pub fn default_params(self) -> VehicleParams {
        match self {
            SourceKind::Physical => VehicleParams::emulated_physical(),
            SourceKind::Virtual | SourceKind::Hdv => VehicleParams::virtual_replica(),
        }
    }
}

/// Headless stand-in for a human at the driving console: a sinusoid around a
/// cruise speed with Gaussian jitter, starting at `start_time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriverScript {
    pub base_speed: f64,
    pub amplitude: f64,
    pub period: f64,
    pub jitter_std: f64,
    pub start_time: f64,
}

impl DriverScript {
    pub fn v_cmd(&self, t: f64, rng: &mut Stream) -> f64 {
        if t < self.start_time {
            return self.base_speed;
        }
        let wave = self.amplitude * (2.0 * PI * (t - self.start_time) / self.period).sin();
        (self.base_speed + wave + gaussian(rng, 0.0, self.jitter_std)).max(0.0)
    }
}

/// Link carrying state reports from a sender registered as `kind` in `frame`.
/// Miniature-frame senders are the emulated vehicles on the sand table.
pub fn state_uplink(kind: WireKind, frame: FrameId) -> LinkId {
    match (kind, frame) {
        (_, FrameId::PhysicalMiniature) => LinkId::VehicleUp,
        (WireKind::Hdv | WireKind::Console, _) => LinkId::HmiUp,
        _ => LinkId::UnityUp,
    }
}

/// Uplink any message from that sender travels on. Camera fixes come from
/// the roadside units; driver and console input use the HMI link.
pub fn uplink(kind: WireKind, frame: FrameId, msg: &Message) -> LinkId {
    match msg {
        Message::Obs(_) => LinkId::CameraUp,
        Message::State(_) => state_uplink(kind, frame),
        _ => LinkId::HmiUp,
    }
}

/// Everything needed to start one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub id: EntityId,
    pub source: SourceKind,
    pub params: VehicleParams,
    pub initial: VehicleState,
    pub localization: LocalizationModel,
    pub script: Option<DriverScript>,
    pub seed: u64,
    /// Stream index, distinct per vehicle in a scenario.
    pub index: u64,
}

pub struct VehicleAgent {
    id: EntityId,
    source: SourceKind,
    params: VehicleParams,
    state: VehicleState,
    noise: Stream,
    camera: Option<(LocalizationModel, Stream)>,
    pending_obs: VecDeque<Observation>,
    driver: Option<(DriverScript, Stream)>,
}

impl VehicleAgent {
    pub fn new(cfg: AgentConfig) -> Self {
        let camera = (cfg.params.kind == VehicleKind::EmulatedPhysical)
            .then(|| (cfg.localization, stream(cfg.seed, Purpose::Camera, cfg.index)));
        let driver = cfg.script.map(|s| (s, stream(cfg.seed, Purpose::Driver, cfg.index)));
        Self {
            id: cfg.id,
            source: cfg.source,
            params: cfg.params,
            state: cfg.initial,
            noise: stream(cfg.seed, Purpose::ProcessNoise, cfg.index),
            camera,
            pending_obs: VecDeque::new(),
            driver,
        }
    }

    pub fn id(&self) -> &EntityId {
        &self.id
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn params(&self) -> &VehicleParams {
        &self.params
    }

    pub fn native_frame(&self) -> FrameId {
        match self.params.kind {
            VehicleKind::EmulatedPhysical => FrameId::PhysicalMiniature,
            VehicleKind::Virtual => FrameId::FullScale,
        }
    }

    pub fn register_message(&self) -> Message {
        Message::Register {
            id: self.id.clone(),
            kind: self.source.wire(),
            frame: self.native_frame(),
        }
    }

    /// Link carrying this vehicle's state reports.
    pub fn state_link(&self) -> LinkId {
        state_uplink(self.source.wire(), self.native_frame())
    }

    /// Applies a downlink message. Commands for other vehicles and
    /// snapshots are ignored.
    pub fn handle(&mut self, msg: &Message) {
        if let Message::Cmd(c) = msg {
            if c.id == self.id && c.v_cmd.is_finite() && c.phi_cmd.is_finite() {
                self.state.v_cmd = c.v_cmd.clamp(0.0, self.params.v_max);
                self.state.phi_cmd = c.phi_cmd.clamp(-self.params.steer_max, self.params.steer_max);
            }
        }
    }

    /// Advances to `t` (integrating one `dt` unless this is step 0) and
    /// returns the uplink traffic produced at `t`.
    pub fn tick(&mut self, step: u64, t: f64, dt: f64, control_tick: bool) -> Result<Vec<(LinkId, Message)>, DynamicsError> {
        if step > 0 {
            self.state = match self.params.kind {
                VehicleKind::EmulatedPhysical => step_emulated_physical(&self.state, &self.params, dt, &mut self.noise)?,
                VehicleKind::Virtual => {
                    let a = command_to_accel(&self.state, dt, self.params.accel_max);
                    step_bicycle(&self.state, &self.params, a, self.state.phi_cmd, dt)?
                }
            };
        }
        self.state.timestamp = t;

        let mut out = Vec::with_capacity(3);
        out.push((
            self.state_link(),
            Message::State(StateReport {
                id: self.id.clone(),
                t,
                x: self.state.pose.x,
                y: self.state.pose.y,
                theta: self.state.pose.theta,
                v: self.state.v,
            }),
        ));

        if let Some((model, rng)) = self.camera.as_mut() {
            if is_frame_time(model, t) {
                let obs = observe(&self.id, &self.state, model, t, rng);
                self.pending_obs.push_back(obs);
            }
            while self.pending_obs.front().is_some_and(|o| o.available_time <= t + 1e-9) {
                if let Some(o) = self.pending_obs.pop_front() {
                    out.push((LinkId::CameraUp, o.to_message()));
                }
            }
        }

        if control_tick {
            if let Some((script, rng)) = self.driver.as_mut() {
                let v_cmd = script.v_cmd(t, rng);
                out.push((
                    LinkId::HmiUp,
                    Message::Cmd(ControlCommand {
                        id: self.id.clone(),
                        t,
                        v_cmd,
                        phi_cmd: 0.0,
                    }),
                ));
            }
        }
        Ok(out)
    }
}

//! Declarative experiment descriptions and the two platooning presets.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, DriverScript, SourceKind};
use crate::clock::Cadence;
use crate::control::{CaccGains, Controller, HeadProfile};
use crate::dynamics::{VehicleParams, VehicleState, MAX_DT};
use crate::geometry::Track;
use crate::mixedspace::PlatoonSlot;
use crate::netsim::{measured_links, zero_links, LinkId, LinkModel};
use crate::perception::LocalizationModel;
use crate::message::EntityId;

/// Either a named built-in track or an explicit closed waypoint loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrackSpec {
    Builtin(String),
    Waypoints { waypoints: Vec<[f64; 2]>, landmark_e: f64 },
}

impl TrackSpec {
    pub fn build(&self) -> Result<Track, ValidationError> {
        match self {
            TrackSpec::Builtin(name) if name == "mcct-loop" => Ok(Track::mcct_loop()),
            TrackSpec::Builtin(name) => Err(ValidationError::new("track", format!("unknown built-in track {name:?}"))),
            TrackSpec::Waypoints { waypoints, landmark_e } => Track::from_waypoints(waypoints.clone(), *landmark_e)
                .map_err(|e| ValidationError::new("track", e.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Lockstep,
    Realtime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub id: EntityId,
    pub kind: SourceKind,
    /// Initial arc-length, full-scale meters.
    pub initial_s: f64,
    /// Defaults follow the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<VehicleParams>,
    pub controller: Controller,
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub human_steering: bool,
    /// Headless driver input for a human-driven vehicle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<DriverScript>,
}

impl VehicleSpec {
    pub fn params(&self) -> VehicleParams {
        self.params.unwrap_or_else(|| self.kind.default_params())
    }
}

fn default_warmup() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub track: TrackSpec,
    /// Formation order, head first.
    pub vehicles: Vec<VehicleSpec>,
    #[serde(default = "measured_links")]
    pub links: Vec<LinkModel>,
    #[serde(default)]
    pub localization: LocalizationModel,
    #[serde(default)]
    pub mode: Mode,
    pub seed: u64,
    /// Simulated seconds.
    pub duration: f64,
    /// The head trigger is armed only after this many seconds.
    #[serde(default = "default_warmup")]
    pub warmup: f64,
    #[serde(default)]
    pub cadence: Cadence,
}

/// A rejected scenario, with the path of the offending field.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ValidationError {
    pub path: String,
    pub message: String,
}

impl ValidationError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<Track, ValidationError> {
        if self.name.trim().is_empty() {
            return Err(ValidationError::new("name", "must not be empty"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(ValidationError::new("duration", "must be a positive number of seconds"));
        }
        if !(self.warmup.is_finite() && self.warmup >= 0.0) {
            return Err(ValidationError::new("warmup", "must be non-negative"));
        }
        let c = &self.cadence;
        if !(c.physics_dt > 0.0 && c.physics_dt <= MAX_DT) {
            return Err(ValidationError::new("cadence.physics_dt", "must lie in (0, 0.1]"));
        }
        if c.ticks_per_control == 0 {
            return Err(ValidationError::new("cadence.ticks_per_control", "must be at least 1"));
        }
        let track = self.track.build()?;

        self.localization
            .validate()
            .map_err(|e| ValidationError::new("localization", e.to_string()))?;
        let frame_ticks = self.localization.frame_period() / c.physics_dt;
        if (frame_ticks - frame_ticks.round()).abs() > 1e-6 {
            return Err(ValidationError::new(
                "localization.frame_rate",
                "camera period must be a whole number of physics ticks",
            ));
        }

        for link in LinkId::ALL {
            let Some((i, m)) = self.links.iter().enumerate().find(|(_, m)| m.link_id == link) else {
                return Err(ValidationError::new("links", format!("missing link {link:?}")));
            };
            m.validate()
                .map_err(|e| ValidationError::new(format!("links[{i}]"), e.to_string()))?;
        }

        if self.vehicles.is_empty() {
            return Err(ValidationError::new("vehicles", "at least one vehicle is required"));
        }
        let heads = self
            .vehicles
            .iter()
            .filter(|v| matches!(v.controller, Controller::HeadProfile(_)))
            .count();
        if heads != 1 {
            return Err(ValidationError::new(
                "vehicles",
                format!("exactly one head_profile controller required, found {heads}"),
            ));
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            let path = |f: &str| format!("vehicles[{i}].{f}");
            if v.id.as_str().is_empty() {
                return Err(ValidationError::new(path("id"), "must not be empty"));
            }
            if self.vehicles[..i].iter().any(|o| o.id == v.id) {
                return Err(ValidationError::new(path("id"), format!("duplicate id {}", v.id)));
            }
            if !(v.initial_s >= 0.0 && v.initial_s < track.lap_length()) {
                return Err(ValidationError::new(path("initial_s"), "must lie in [0, lap_length)"));
            }
            if i > 0 && !(v.initial_s < self.vehicles[i - 1].initial_s) {
                return Err(ValidationError::new(
                    path("initial_s"),
                    "platoon arc-lengths must strictly decrease from the head",
                ));
            }
            let params = v.params();
            params
                .validate()
                .map_err(|e| ValidationError::new(path("params"), e.to_string()))?;
            match &v.controller {
                Controller::Cacc(g) => g.validate().map_err(|e| ValidationError::new(path("controller"), e.to_string()))?,
                Controller::HeadProfile(p) => {
                    p.validate().map_err(|e| ValidationError::new(path("controller"), e.to_string()))?;
                    if !(p.trigger_arclength >= 0.0 && p.trigger_arclength < track.lap_length()) {
                        return Err(ValidationError::new(path("controller.trigger_arclength"), "must lie on the track"));
                    }
                }
                Controller::Human if v.kind != SourceKind::Hdv => {
                    return Err(ValidationError::new(path("controller"), "human control needs an hdv vehicle"));
                }
                _ => {}
            }
            if v.kind == SourceKind::Hdv && v.controller != Controller::Human {
                return Err(ValidationError::new(path("controller"), "hdv vehicles take the human controller"));
            }
            if let Some(s) = &v.script {
                if v.kind != SourceKind::Hdv {
                    return Err(ValidationError::new(path("script"), "only hdv vehicles take a driver script"));
                }
                if !(s.period > 0.0 && s.jitter_std >= 0.0 && s.base_speed >= 0.0) {
                    return Err(ValidationError::new(path("script"), "period must be positive and speeds non-negative"));
                }
            }
        }
        Ok(track)
    }

    pub fn vehicle(&self, id: &str) -> Option<(usize, &VehicleSpec)> {
        self.vehicles.iter().enumerate().find(|(_, v)| v.id.as_str() == id)
    }

    /// Start-up configuration of the agent in formation slot `index`.
    pub fn agent_config(&self, track: &Track, index: usize) -> AgentConfig {
        let v = &self.vehicles[index];
        let pose = track.point_at(v.initial_s);
        AgentConfig {
            id: v.id.clone(),
            source: v.kind,
            params: v.params(),
            initial: VehicleState::at_rest(pose, 0.0),
            localization: self.localization,
            script: v.script,
            seed: self.seed,
            index: index as u64 + 1,
        }
    }

    pub fn formation(&self) -> Vec<PlatoonSlot> {
        self.vehicles
            .iter()
            .map(|v| PlatoonSlot {
                id: v.id.clone(),
                controller: v.controller,
                params: v.params(),
                human_steering: v.human_steering,
            })
            .collect()
    }

    /// All links forced to zero delay.
    pub fn with_zero_delay(mut self) -> Self {
        self.links = zero_links();
        self
    }

    /// Head sinusoid switched off.
    pub fn without_perturbation(mut self) -> Self {
        for v in &mut self.vehicles {
            if let Controller::HeadProfile(p) = &mut v.controller {
                p.perturb_amplitude = 0.0;
            }
        }
        self
    }

    /// Lag, process noise and camera noise removed; delays kept.
    pub fn noiseless(mut self) -> Self {
        self.localization = LocalizationModel::noiseless();
        for v in &mut self.vehicles {
            let mut p = v.params();
            p.process_noise_sigma_v = 0.0;
            v.params = Some(p);
            if let Some(s) = &mut v.script {
                s.jitter_std = 0.0;
            }
        }
        self
    }

    /// Mixed platoon of three emulated miniature vehicles followed by three
    /// virtual vehicles.
    pub fn experiment_a() -> Self {
        let kinds = [
            SourceKind::Physical,
            SourceKind::Physical,
            SourceKind::Physical,
            SourceKind::Virtual,
            SourceKind::Virtual,
            SourceKind::Virtual,
        ];
        Self::preset("experiment_a", &kinds)
    }

    /// Like experiment A but with a human-driven vehicle in fourth position
    /// and a virtual third vehicle.
    pub fn experiment_b() -> Self {
        let kinds = [
            SourceKind::Physical,
            SourceKind::Physical,
            SourceKind::Virtual,
            SourceKind::Hdv,
            SourceKind::Virtual,
            SourceKind::Virtual,
        ];
        Self::preset("experiment_b", &kinds)
    }

    fn preset(name: &str, kinds: &[SourceKind]) -> Self {
        let head = HeadProfile::experiment();
        let d_des = CaccGains::miniature().d_des;
        // the head needs ~80 m to reach landmark E, giving ~20 s of settled cruise first
        let head_s = 165.0;
        let warmup = default_warmup();
        let vehicles = kinds
            .iter()
            .enumerate()
            .map(|(i, kind)| {
                let controller = match (i, kind) {
                    (0, _) => Controller::HeadProfile(head),
                    (_, SourceKind::Physical) => Controller::Cacc(CaccGains::miniature()),
                    (_, SourceKind::Virtual) => Controller::Cacc(CaccGains::virtual_vehicle()),
                    (_, SourceKind::Hdv) => Controller::Human,
                };
                let script = (*kind == SourceKind::Hdv).then_some(DriverScript {
                    base_speed: head.base_speed,
                    amplitude: 1.5 * head.perturb_amplitude,
                    period: head.perturb_period,
                    jitter_std: 0.1,
                    start_time: warmup,
                });
                VehicleSpec {
                    id: EntityId::new(format!("v{}", i + 1)),
                    kind: *kind,
                    initial_s: head_s - d_des * i as f64,
                    params: None,
                    controller,
                    human_steering: false,
                    script,
                }
            })
            .collect();
        Self {
            name: name.into(),
            track: TrackSpec::Builtin("mcct-loop".into()),
            vehicles,
            links: measured_links(),
            localization: LocalizationModel::default(),
            mode: Mode::Lockstep,
            seed: 7,
            duration: 120.0,
            warmup,
            cadence: Cadence::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    extern crate std;
    use super::*;

    #[test]
    fn presets_validate() {
        for s in [Scenario::experiment_a(), Scenario::experiment_b()] {
            let track = s.validate().unwrap();
            assert_eq!(s.vehicles.len(), 6);
            for w in s.vehicles.windows(2) {
                let gap = track.signed_gap(w[1].initial_s, w[0].initial_s);
                assert!((gap - 8.4).abs() < 1e-9);
            }
        }
        let b = Scenario::experiment_b();
        assert_eq!(b.vehicles[3].kind, SourceKind::Hdv);
        assert!((b.vehicles[3].script.unwrap().amplitude - 2.1).abs() < 1e-12);
    }

    #[test]
    fn validation_paths() {
        let mut s = Scenario::experiment_a();
        s.vehicles[2].initial_s = 200.0;
        assert_eq!(s.validate().unwrap_err().path, "vehicles[2].initial_s");

        let mut s = Scenario::experiment_a();
        s.vehicles[1].controller = Controller::HeadProfile(HeadProfile::experiment());
        assert_eq!(s.validate().unwrap_err().path, "vehicles");

        let mut s = Scenario::experiment_a();
        s.links.retain(|l| l.link_id != LinkId::HmiDown);
        assert_eq!(s.validate().unwrap_err().path, "links");

        let mut s = Scenario::experiment_a();
        s.track = TrackSpec::Builtin("figure-eight".into());
        assert_eq!(s.validate().unwrap_err().path, "track");

        let mut s = Scenario::experiment_a();
        s.vehicles[4].id = "v2".into();
        assert_eq!(s.validate().unwrap_err().path, "vehicles[4].id");

        let mut s = Scenario::experiment_a();
        s.duration = 0.0;
        assert_eq!(s.validate().unwrap_err().path, "duration");

        let mut s = Scenario::experiment_a();
        s.vehicles[1].controller = Controller::Human;
        assert_eq!(s.validate().unwrap_err().path, "vehicles[1].controller");
    }

    #[test]
    fn variants() {
        let s = Scenario::experiment_a().with_zero_delay().without_perturbation().noiseless();
        assert!(s.links.iter().all(|l| l.delay_mean == 0.0 && l.delay_std == 0.0));
        assert!(s.validate().is_ok());
        match s.vehicles[0].controller {
            Controller::HeadProfile(p) => assert_eq!(p.perturb_amplitude, 0.0),
            _ => panic!(),
        }
    }
}

//! The cloud coordinator.
//!
//! Owns the registry of every entity in the mixed space, fuses incoming
//! reports into full-scale states aligned to the coordinator clock, runs
//! the platoon controllers, and publishes snapshots. It performs no IO: the
//! caller feeds it messages and routes what it returns.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::control::{
    accel_to_vcmd, cacc_accel, cacc_accel_stopped_leader, crossed, head_reference, lateral_preview, Controller,
};
use crate::dynamics::{VehicleParams, VehicleState};
use crate::geometry::{Frame, FrameId, Pose2D, Track};
use crate::message::{ControlCommand, EntityId, FacilityState, Message, ObstacleSpec, StateReport, WireKind};
use crate::netsim::LinkId;
use crate::telemetry::TelemetryEvent;

/// Half width of the lane; obstacles farther than this from the centerline
/// (edge to centerline) do not block it.
pub const LANE_HALF_WIDTH: f64 = 1.75;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MixedError {
    #[error("entity {0} is already registered")]
    DuplicateId(EntityId),
    #[error("unknown vehicle {0}")]
    UnknownVehicle(EntityId),
    #[error("vehicle {0} has never reported a usable state")]
    MissingState(EntityId),
    #[error("stale message from {id} stamped {t}")]
    StaleMessage { id: EntityId, t: f64 },
    #[error("vehicle {0} does not accept driving input")]
    NotDrivable(EntityId),
    #[error("malformed input: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Virtual,
    EmulatedPhysical,
    Hdv,
    Console,
    Facility,
    Obstacle,
}

/// A formation position as configured by the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatoonSlot {
    pub id: EntityId,
    pub controller: Controller,
    pub params: VehicleParams,
    /// For human-driven vehicles: pass steering through instead of lane keeping.
    pub human_steering: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityRecord {
    pub id: EntityId,
    pub kind: EntityKind,
    pub frame: Frame,
    pub controller: Controller,
    pub params: VehicleParams,
    pub human_steering: bool,
    /// Fused state as of `last_update_time`.
    pub last_state: Option<VehicleState>,
    pub last_update_time: f64,
    /// Latest roadside fix: capture time and full-scale pose.
    roadside: Option<(f64, Pose2D)>,
    /// Latest self report: time, full-scale pose, speed.
    report: Option<(f64, Pose2D, f64)>,
    human_input: Option<(f64, f64)>,
    pub stale_dropped: u64,
}

impl EntityRecord {
    fn new(id: EntityId, kind: EntityKind, frame: Frame) -> Self {
        let params = match kind {
            EntityKind::EmulatedPhysical => VehicleParams::emulated_physical(),
            _ => VehicleParams::virtual_replica(),
        };
        Self {
            id,
            kind,
            frame,
            controller: Controller::None,
            params,
            human_steering: false,
            last_state: None,
            last_update_time: f64::NEG_INFINITY,
            roadside: None,
            report: None,
            human_input: None,
            stale_dropped: 0,
        }
    }

    pub fn is_vehicle(&self) -> bool {
        matches!(self.kind, EntityKind::Virtual | EntityKind::EmulatedPhysical | EntityKind::Hdv)
    }

    /// Miniature-frame vehicles are located by the roadside cameras.
    pub fn uses_roadside(&self) -> bool {
        self.frame.id == FrameId::PhysicalMiniature && self.is_vehicle()
    }

    /// Dead-reckons the latest fused ingredients to time `t`.
    pub fn fused_at(&self, t: f64) -> Option<VehicleState> {
        let (t_ref, pose, v) = if self.uses_roadside() {
            let (t_cap, pose) = self.roadside?;
            let v = self.report.map_or(0.0, |r| r.2);
            (t_cap, pose, v)
        } else {
            self.report?
        };
        let ds = v * (t - t_ref);
        Some(VehicleState {
            pose: Pose2D::new(pose.x + ds * pose.theta.cos(), pose.y + ds * pose.theta.sin(), pose.theta),
            v,
            phi: 0.0,
            v_cmd: 0.0,
            phi_cmd: 0.0,
            timestamp: t,
        })
    }

    pub fn downlink(&self) -> LinkId {
        match self.kind {
            EntityKind::EmulatedPhysical => LinkId::VehicleDown,
            EntityKind::Virtual => LinkId::UnityDown,
            EntityKind::Facility => LinkId::FacilityDown,
            _ => LinkId::HmiDown,
        }
    }
}

/// A message the coordinator wants delivered.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub to: EntityId,
    pub link: LinkId,
    pub msg: Message,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoordinatorStats {
    pub stale_dropped: u64,
    pub off_track: u64,
    pub rejected: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct HeadTrigger {
    last_s: Option<f64>,
    fired_at: Option<f64>,
}

pub struct Coordinator {
    track: Track,
    control_dt: f64,
    /// Head perturbation trigger is armed from this time on.
    arm_time: f64,
    formation: Vec<PlatoonSlot>,
    records: BTreeMap<EntityId, EntityRecord>,
    obstacles: Vec<ObstacleSpec>,
    facilities: BTreeMap<EntityId, FacilityState>,
    perturbations: BTreeMap<EntityId, f64>,
    trigger: HeadTrigger,
    events: Vec<TelemetryEvent>,
    last_commands: BTreeMap<EntityId, ControlCommand>,
    stats: CoordinatorStats,
}

impl Coordinator {
    pub fn new(track: Track, formation: Vec<PlatoonSlot>, control_dt: f64, arm_time: f64) -> Self {
        Self {
            track,
            control_dt,
            arm_time,
            formation,
            records: BTreeMap::new(),
            obstacles: Vec::new(),
            facilities: BTreeMap::new(),
            perturbations: BTreeMap::new(),
            trigger: HeadTrigger::default(),
            events: Vec::new(),
            last_commands: BTreeMap::new(),
            stats: CoordinatorStats::default(),
        }
    }

    pub fn track(&self) -> &Track {
        &self.track
    }

    pub fn formation(&self) -> &[PlatoonSlot] {
        &self.formation
    }

    pub fn record(&self, id: &EntityId) -> Option<&EntityRecord> {
        self.records.get(id)
    }

    pub fn records(&self) -> impl Iterator<Item = &EntityRecord> {
        self.records.values()
    }

    pub fn stats(&self) -> CoordinatorStats {
        self.stats
    }

    pub fn obstacles(&self) -> &[ObstacleSpec] {
        &self.obstacles
    }

    pub fn facilities(&self) -> &BTreeMap<EntityId, FacilityState> {
        &self.facilities
    }

    pub fn last_command(&self, id: &EntityId) -> Option<&ControlCommand> {
        self.last_commands.get(id)
    }

    pub fn trigger_time(&self) -> Option<f64> {
        self.trigger.fired_at
    }

    pub fn drain_events(&mut self) -> Vec<TelemetryEvent> {
        core::mem::take(&mut self.events)
    }

    /// True once every platoon member is registered.
    pub fn formation_registered(&self) -> bool {
        self.formation.iter().all(|s| self.records.contains_key(&s.id))
    }

    pub fn register(&mut self, id: EntityId, kind: WireKind, frame: FrameId) -> Result<&EntityRecord, MixedError> {
        if self.records.contains_key(&id) {
            return Err(MixedError::DuplicateId(id));
        }
        let kind = match kind {
            WireKind::Virtual => EntityKind::Virtual,
            WireKind::Physical => EntityKind::EmulatedPhysical,
            WireKind::Hdv => EntityKind::Hdv,
            WireKind::Console => EntityKind::Console,
        };
        let frame = if kind == EntityKind::EmulatedPhysical {
            Frame::MINIATURE
        } else {
            Frame::of(frame)
        };
        let mut rec = EntityRecord::new(id.clone(), kind, frame);
        if kind == EntityKind::Hdv && frame.id == FrameId::PhysicalMiniature {
            rec.params = VehicleParams::emulated_physical();
        }
        if let Some(slot) = self.formation.iter().find(|s| s.id == id) {
            rec.controller = slot.controller;
            rec.params = slot.params;
            rec.human_steering = slot.human_steering;
        } else if kind == EntityKind::Hdv {
            rec.controller = Controller::Human;
        }
        Ok(self.records.entry(id).or_insert(rec))
    }

    /// Folds a state report or roadside fix into the sender's record and
    /// returns the fused state at `t_now`.
    pub fn fuse(&mut self, msg: &Message, t_now: f64) -> Result<VehicleState, MixedError> {
        let id = msg.subject().ok_or(MixedError::Invalid("fuse takes state or obs"))?.clone();
        let rec = match self.records.get_mut(&id) {
            Some(r) if r.is_vehicle() => r,
            _ => return Err(MixedError::UnknownVehicle(id)),
        };
        match msg {
            Message::State(s) => {
                if rec.report.is_some_and(|(t, _, _)| s.t <= t) {
                    rec.stale_dropped += 1;
                    self.stats.stale_dropped += 1;
                    return Err(MixedError::StaleMessage { id, t: s.t });
                }
                rec.report = Some((s.t, Pose2D::new(s.x, s.y, s.theta), s.v.max(0.0)));
            }
            Message::Obs(o) => {
                if !rec.uses_roadside() {
                    return Err(MixedError::Invalid("roadside fix for a vehicle the cameras do not track"));
                }
                if rec.roadside.is_some_and(|(t, _)| o.t_cap <= t) {
                    rec.stale_dropped += 1;
                    self.stats.stale_dropped += 1;
                    return Err(MixedError::StaleMessage { id, t: o.t_cap });
                }
                // wire coordinates are full scale already
                rec.roadside = Some((o.t_cap, Pose2D::new(o.x, o.y, o.theta)));
            }
            _ => return Err(MixedError::Invalid("fuse takes state or obs")),
        }
        let fused = rec.fused_at(t_now).ok_or_else(|| MixedError::MissingState(id.clone()))?;
        rec.last_state = Some(fused);
        if t_now > rec.last_update_time {
            rec.last_update_time = t_now;
        }
        Ok(fused)
    }

    /// Dispatches one inbound message and returns anything to forward.
    pub fn handle(&mut self, msg: &Message, t_now: f64) -> Result<Vec<Outbound>, MixedError> {
        let result = match msg {
            Message::Register { id, kind, frame } => self.register(id.clone(), *kind, *frame).map(|_| Vec::new()),
            Message::State(_) | Message::Obs(_) => match self.fuse(msg, t_now) {
                // accepted, but a miniature vehicle still awaits its first camera fix
                Ok(_) | Err(MixedError::MissingState(_)) => Ok(Vec::new()),
                Err(e) => Err(e),
            },
            Message::Cmd(c) => self.human_input(c).map(|_| Vec::new()),
            Message::Obstacle(o) => self.add_obstacle(*o, t_now).map(|_| Vec::new()),
            Message::Perturb { id, dv } => self.apply_perturb(id, *dv, t_now).map(|_| Vec::new()),
            Message::Facility { id, state } => Ok(self.set_facility(id.clone(), *state, t_now)),
            Message::Tick { .. } | Message::TickAck { .. } | Message::Snapshot { .. } => Ok(Vec::new()),
        };
        if result.is_err() {
            self.stats.rejected += 1;
        }
        result
    }

    fn human_input(&mut self, c: &ControlCommand) -> Result<(), MixedError> {
        let rec = self.records.get_mut(&c.id).ok_or_else(|| MixedError::UnknownVehicle(c.id.clone()))?;
        if rec.controller != Controller::Human {
            return Err(MixedError::NotDrivable(c.id.clone()));
        }
        if !(c.v_cmd.is_finite() && c.phi_cmd.is_finite()) {
            return Err(MixedError::Invalid("non-finite driving input"));
        }
        rec.human_input = Some((c.v_cmd.max(0.0), c.phi_cmd));
        Ok(())
    }

    /// Places an obstacle in the mixed space; returns its index.
    pub fn add_obstacle(&mut self, o: ObstacleSpec, t_now: f64) -> Result<usize, MixedError> {
        if !(o.x.is_finite() && o.y.is_finite() && o.r.is_finite() && o.r >= 0.0) {
            return Err(MixedError::Invalid("obstacle needs finite position and non-negative radius"));
        }
        self.obstacles.push(o);
        self.events.push(TelemetryEvent::Obstacle {
            t: t_now,
            x: o.x,
            y: o.y,
            r: o.r,
        });
        Ok(self.obstacles.len() - 1)
    }

    /// Adds `dv` to the vehicle's next command, once.
    pub fn apply_perturb(&mut self, id: &EntityId, dv: f64, t_now: f64) -> Result<(), MixedError> {
        match self.records.get(id) {
            Some(r) if r.is_vehicle() => {}
            _ => return Err(MixedError::UnknownVehicle(id.clone())),
        }
        if !dv.is_finite() {
            return Err(MixedError::Invalid("non-finite perturbation"));
        }
        *self.perturbations.entry(id.clone()).or_insert(0.0) += dv;
        self.events.push(TelemetryEvent::Perturb {
            t: t_now,
            id: id.clone(),
            dv,
        });
        Ok(())
    }

    /// Updates the facility registry and echoes the change to every console.
    pub fn set_facility(&mut self, id: EntityId, state: FacilityState, t_now: f64) -> Vec<Outbound> {
        self.facilities.insert(id.clone(), state);
        self.events.push(TelemetryEvent::Facility {
            t: t_now,
            id: id.clone(),
            state,
        });
        self.consoles()
            .map(|c| Outbound {
                to: c.clone(),
                link: LinkId::HmiDown,
                msg: Message::Facility { id: id.clone(), state },
            })
            .collect()
    }

    fn consoles(&self) -> impl Iterator<Item = &EntityId> {
        self.records.values().filter(|r| r.kind == EntityKind::Console).map(|r| &r.id)
    }

    /// Fused state of a vehicle at `t`, if it has reported.
    pub fn fused_state(&self, id: &EntityId, t: f64) -> Option<VehicleState> {
        self.records.get(id).and_then(|r| r.fused_at(t))
    }

    /// Computes one command per controlled platoon member.
    pub fn control_step(&mut self, t_now: f64) -> Result<Vec<ControlCommand>, MixedError> {
        let mut fused = Vec::with_capacity(self.formation.len());
        for slot in &self.formation {
            let state = self
                .fused_state(&slot.id, t_now)
                .ok_or_else(|| MixedError::MissingState(slot.id.clone()))?;
            fused.push((state, self.track.project(state.pose).s));
        }
        let v_head = self
            .formation
            .iter()
            .position(|s| matches!(s.controller, Controller::HeadProfile(_)))
            .map(|i| fused[i].0.v);

        let obstacles: Vec<(f64, f64)> = self
            .obstacles
            .iter()
            .filter_map(|o| {
                let p = self.track.project(Pose2D::new(o.x, o.y, 0.0));
                (p.lateral_error.abs() - o.r <= LANE_HALF_WIDTH).then_some((p.s, o.r))
            })
            .collect();

        let mut cmds = Vec::with_capacity(self.formation.len());
        for (i, slot) in self.formation.iter().enumerate() {
            let (state, s) = fused[i];
            let rec = &self.records[&slot.id];
            let v_cmd = match slot.controller {
                Controller::None => continue,
                Controller::HeadProfile(profile) => {
                    if t_now >= self.arm_time && self.trigger.fired_at.is_none() {
                        if let Some(prev) = self.trigger.last_s {
                            if crossed(self.track.lap_length(), prev, s, profile.trigger_arclength) {
                                self.trigger.fired_at = Some(t_now);
                                self.events.push(TelemetryEvent::HeadPerturbation {
                                    t: t_now,
                                    id: slot.id.clone(),
                                    duration: profile.perturb_duration(),
                                    period: profile.perturb_period,
                                    amplitude: profile.perturb_amplitude,
                                });
                            }
                        }
                    }
                    self.trigger.last_s = Some(s);
                    head_reference(&profile, self.trigger.fired_at.map(|f| t_now - f))
                }
                Controller::Cacc(g) => {
                    let (prev_state, prev_s) = if i == 0 { (state, s) } else { fused[i - 1] };
                    let mut gap = if i == 0 { f64::INFINITY } else { self.track.signed_gap(s, prev_s) };
                    let mut a = if i == 0 {
                        0.0
                    } else {
                        cacc_accel(&g, 0.0, gap, state.v, prev_state.v, v_head.unwrap_or(prev_state.v))
                    };
                    for (os, r) in &obstacles {
                        let og = self.track.signed_gap(s, *os) - r;
                        if og < gap {
                            gap = og;
                            a = cacc_accel_stopped_leader(&g, og, state.v);
                        }
                    }
                    accel_to_vcmd(state.v, a, self.control_dt)
                }
                Controller::Human => rec.human_input.map_or(0.0, |h| h.0),
            };
            let phi_cmd = match (slot.controller, rec.human_input) {
                (Controller::Human, Some((_, phi))) if slot.human_steering => phi,
                _ => match lateral_preview(&state, &self.track, &slot.params) {
                    Ok(phi) => phi,
                    Err(_) => {
                        self.stats.off_track += 1;
                        0.0
                    }
                },
            };
            let bump = self.perturbations.remove(&slot.id).unwrap_or(0.0);
            cmds.push(ControlCommand {
                id: slot.id.clone(),
                t: t_now,
                v_cmd: (v_cmd + bump).max(0.0),
                phi_cmd,
            });
        }
        for c in &cmds {
            self.last_commands.insert(c.id.clone(), c.clone());
        }
        Ok(cmds)
    }

    /// Routes commands onto each vehicle's downlink.
    pub fn dispatch(&self, cmds: &[ControlCommand]) -> Vec<Outbound> {
        cmds.iter()
            .filter_map(|c| {
                self.records.get(&c.id).map(|r| Outbound {
                    to: c.id.clone(),
                    link: r.downlink(),
                    msg: Message::Cmd(c.clone()),
                })
            })
            .collect()
    }

    /// The fused mixed space: platoon members in formation order, then any
    /// other registered vehicles by id.
    pub fn snapshot(&self, t_now: f64) -> Message {
        let mut vehicles = Vec::new();
        let report = |r: &EntityRecord| {
            r.fused_at(t_now).map(|s| StateReport {
                id: r.id.clone(),
                t: t_now,
                x: s.pose.x,
                y: s.pose.y,
                theta: s.pose.theta,
                v: s.v,
            })
        };
        for slot in &self.formation {
            if let Some(r) = self.records.get(&slot.id) {
                vehicles.extend(report(r));
            }
        }
        for r in self.records.values() {
            if r.is_vehicle() && !self.formation.iter().any(|s| s.id == r.id) {
                vehicles.extend(report(r));
            }
        }
        Message::Snapshot {
            t: t_now,
            vehicles,
            obstacles: self.obstacles.clone(),
        }
    }

    /// Snapshot addressed to every console (HMI link) and every virtual
    /// vehicle's platform (virtual-platform link).
    pub fn broadcast_snapshot(&self, t_now: f64) -> Vec<Outbound> {
        let snap = self.snapshot(t_now);
        self.records
            .values()
            .filter_map(|r| match r.kind {
                EntityKind::Console => Some((r, LinkId::HmiDown)),
                EntityKind::Virtual => Some((r, LinkId::UnityDown)),
                _ => None,
            })
            .map(|(r, link)| Outbound {
                to: r.id.clone(),
                link,
                msg: snap.clone(),
            })
            .collect()
    }

    /// Whether a message may be applied right away (tolerated MissingState at startup).
    pub fn all_fused(&self, t: f64) -> bool {
        self.formation.iter().all(|s| self.fused_state(&s.id, t).is_some())
    }
}

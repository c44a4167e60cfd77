//! Lockstep simulation engine.
//!
//! One loop owns the clock, the bus and the coordinator. Vehicle agents sit
//! behind [`AgentHost`], which is either in-process ([`LocalHost`]) or a set
//! of remote processes driven over the wire; the engine cannot tell the
//! difference. Each physics tick:
//!
//! 1. agents integrate up to `t` and emit their uplink traffic;
//! 2. uplinks enter the bus, due deliveries reach the coordinator;
//! 3. on control ticks the coordinator issues commands and a snapshot, and
//!    a telemetry row per vehicle is recorded;
//! 4. downlinks that are already due reach the agents before the next tick.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::agent::VehicleAgent;
use crate::clock::Cadence;
use crate::dynamics::{DynamicsError, VehicleState};
use crate::geometry::{Pose2D, Track};
use crate::message::{EntityId, Message};
use crate::mixedspace::{Coordinator, CoordinatorStats, MixedError};
use crate::netsim::{Bus, LinkId, NetError};
use crate::rng::{stream, Purpose};
use crate::scenario::{Scenario, ValidationError};
use crate::telemetry::{TelemetryHeader, TelemetryRecord, TelemetryRow, VehicleMeta};
use crate::control::Controller;

/// Identity of the coordinator on the bus.
pub const CLOUD_ID: &str = "cloud";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Coordinator(#[from] MixedError),
    #[error("agent host: {0}")]
    Host(String),
}

/// The vehicles (and consoles) on the far side of the bus.
pub trait AgentHost {
    /// Registration messages, applied before step 0.
    fn registrations(&mut self) -> Result<Vec<Message>, SimError>;
    /// Hands a downlink message to its recipient.
    fn deliver(&mut self, to: &EntityId, msg: &Message) -> Result<(), SimError>;
    /// Advances every agent to `t` and returns `(sender, link, message)`
    /// uplink traffic in a deterministic order.
    fn advance(&mut self, step: u64, t: f64, dt: f64, control_tick: bool) -> Result<Vec<(EntityId, LinkId, Message)>, SimError>;
    /// Ground truth of a hosted vehicle as of the last advance.
    fn truth(&self, id: &EntityId) -> Option<VehicleState>;
}

/// All agents in this process.
pub struct LocalHost {
    agents: Vec<VehicleAgent>,
}

impl LocalHost {
    pub fn new(agents: Vec<VehicleAgent>) -> Self {
        Self { agents }
    }

    pub fn for_scenario(scenario: &Scenario, track: &Track) -> Self {
        Self::new(
            (0..scenario.vehicles.len())
                .map(|i| VehicleAgent::new(scenario.agent_config(track, i)))
                .collect(),
        )
    }

    pub fn agents(&self) -> &[VehicleAgent] {
        &self.agents
    }
}

impl AgentHost for LocalHost {
    fn registrations(&mut self) -> Result<Vec<Message>, SimError> {
        Ok(self.agents.iter().map(|a| a.register_message()).collect())
    }

    fn deliver(&mut self, to: &EntityId, msg: &Message) -> Result<(), SimError> {
        if let Some(a) = self.agents.iter_mut().find(|a| a.id() == to) {
            a.handle(msg);
        }
        Ok(())
    }

    fn advance(&mut self, step: u64, t: f64, dt: f64, control_tick: bool) -> Result<Vec<(EntityId, LinkId, Message)>, SimError> {
        let mut out = Vec::new();
        for a in &mut self.agents {
            for (link, msg) in a.tick(step, t, dt, control_tick)? {
                out.push((a.id().clone(), link, msg));
            }
        }
        Ok(out)
    }

    fn truth(&self, id: &EntityId) -> Option<VehicleState> {
        self.agents.iter().find(|a| a.id() == id).map(|a| *a.state())
    }
}

/// Converts a raw state report into a ground-truth state.
pub fn truth_from_report(msg: &Message) -> Option<(EntityId, VehicleState)> {
    match msg {
        Message::State(s) => Some((
            s.id.clone(),
            VehicleState {
                pose: Pose2D::new(s.x, s.y, s.theta),
                v: s.v,
                timestamp: s.t,
                ..VehicleState::default()
            },
        )),
        _ => None,
    }
}

pub struct Engine<H: AgentHost> {
    scenario: Scenario,
    track: Track,
    cadence: Cadence,
    coordinator: Coordinator,
    bus: Bus,
    host: H,
    cloud: EntityId,
    record: TelemetryRecord,
    ids_sorted: Vec<EntityId>,
    snapshots: Option<Vec<Message>>,
    step: u64,
    last_step: u64,
}

impl<H: AgentHost> Engine<H> {
    pub fn new(scenario: Scenario, mut host: H) -> Result<Self, SimError> {
        let track = scenario.validate()?;
        let cadence = scenario.cadence;
        let mut coordinator = Coordinator::new(
            track.clone(),
            scenario.formation(),
            cadence.control_dt(),
            scenario.warmup,
        );
        for reg in host.registrations()? {
            coordinator.handle(&reg, 0.0)?;
        }
        let bus = Bus::new(&scenario.links, stream(scenario.seed, Purpose::Bus, 0));
        let header = TelemetryHeader {
            scenario: scenario.name.clone(),
            scenario_hash: String::new(),
            seed: scenario.seed,
            control_dt: cadence.control_dt(),
            lap_length: track.lap_length(),
            vehicles: scenario
                .vehicles
                .iter()
                .map(|v| VehicleMeta {
                    id: v.id.clone(),
                    kind: v.kind.as_str().into(),
                    controller: controller_name(&v.controller).into(),
                    d_des: match v.controller {
                        Controller::Cacc(g) => Some(g.d_des),
                        _ => None,
                    },
                })
                .collect(),
        };
        let mut ids_sorted: Vec<EntityId> = scenario.vehicles.iter().map(|v| v.id.clone()).collect();
        ids_sorted.sort();
        let last_step = cadence.steps_for(scenario.duration);
        Ok(Self {
            scenario,
            track,
            cadence,
            coordinator,
            bus,
            host,
            cloud: EntityId::new(CLOUD_ID),
            record: TelemetryRecord {
                header: Some(header),
                rows: Vec::new(),
                events: Vec::new(),
            },
            ids_sorted,
            snapshots: None,
            step: 0,
            last_step,
        })
    }

    /// Keep every snapshot the coordinator publishes.
    pub fn capture_snapshots(&mut self) {
        self.snapshots = Some(Vec::new());
    }

    pub fn snapshots(&self) -> &[Message] {
        self.snapshots.as_deref().unwrap_or(&[])
    }

    pub fn coordinator(&self) -> &Coordinator {
        &self.coordinator
    }

    pub fn coordinator_mut(&mut self) -> &mut Coordinator {
        &mut self.coordinator
    }

    pub fn host(&self) -> &H {
        &self.host
    }

    pub fn host_mut(&mut self) -> &mut H {
        &mut self.host
    }

    pub fn stats(&self) -> CoordinatorStats {
        self.coordinator.stats()
    }

    pub fn current_step(&self) -> u64 {
        self.step
    }

    pub fn last_step(&self) -> u64 {
        self.last_step
    }

    pub fn time(&self) -> f64 {
        self.cadence.time_of(self.step)
    }

    pub fn is_done(&self) -> bool {
        self.step > self.last_step
    }

    /// Runs one physics tick. Returns false once the scenario is complete.
    pub fn step(&mut self) -> Result<bool, SimError> {
        if self.is_done() {
            return Ok(false);
        }
        let n = self.step;
        let t = self.cadence.time_of(n);
        let control = self.cadence.is_control_step(n);

        for (from, link, msg) in self.host.advance(n, t, self.cadence.physics_dt, control)? {
            self.bus.send(link, &from, &self.cloud, msg, t)?;
        }
        self.route(t)?;

        if control {
            match self.coordinator.control_step(t) {
                Ok(cmds) => {
                    for o in self.coordinator.dispatch(&cmds) {
                        self.bus.send(o.link, &self.cloud, &o.to, o.msg, t)?;
                    }
                }
                // vehicles still waiting for their first report or camera fix
                Err(MixedError::MissingState(_)) if t < self.scenario.warmup => {}
                Err(e) => return Err(e.into()),
            }
            let outs = self.coordinator.broadcast_snapshot(t);
            if let Some(store) = self.snapshots.as_mut() {
                store.push(self.coordinator.snapshot(t));
            }
            for o in outs {
                self.bus.send(o.link, &self.cloud, &o.to, o.msg, t)?;
            }
            self.record_rows(t);
        }
        self.route(t)?;
        let events = self.coordinator.drain_events();
        self.record.events.extend(events);
        self.step += 1;
        Ok(!self.is_done())
    }

    fn route(&mut self, t: f64) -> Result<(), SimError> {
        loop {
            let due = self.bus.deliver_due(t);
            if due.is_empty() {
                return Ok(());
            }
            for env in due {
                if env.recipient_id == self.cloud {
                    // rejected inputs are counted by the coordinator and dropped
                    if let Ok(outs) = self.coordinator.handle(&env.payload, t) {
                        for o in outs {
                            self.bus.send(o.link, &self.cloud, &o.to, o.msg, t)?;
                        }
                    }
                } else {
                    self.host.deliver(&env.recipient_id, &env.payload)?;
                }
            }
        }
    }

    fn record_rows(&mut self, t: f64) {
        let formation = self.coordinator.formation();
        let truth: Vec<Option<(VehicleState, f64)>> = formation
            .iter()
            .map(|s| {
                self.host
                    .truth(&s.id)
                    .map(|st| (st, self.track.project(st.pose).s))
            })
            .collect();
        let mut rows: Vec<TelemetryRow> = Vec::with_capacity(formation.len());
        for (i, slot) in formation.iter().enumerate() {
            let Some((st, s)) = truth[i] else { continue };
            let gap = if i == 0 {
                None
            } else {
                truth[i - 1].map(|(_, s_prev)| self.track.signed_gap(s, s_prev))
            };
            let cmd = self.coordinator.last_command(&slot.id);
            let fused = self.coordinator.fused_state(&slot.id, t);
            rows.push(TelemetryRow {
                t,
                id: slot.id.clone(),
                s,
                x: st.pose.x,
                y: st.pose.y,
                theta: st.pose.theta,
                v: st.v,
                v_cmd: cmd.map_or(0.0, |c| c.v_cmd),
                phi_cmd: cmd.map_or(0.0, |c| c.phi_cmd),
                gap_to_leader: gap,
                fused_x: fused.map(|f| f.pose.x),
                fused_y: fused.map(|f| f.pose.y),
                fused_theta: fused.map(|f| f.pose.theta),
                fused_v: fused.map(|f| f.v),
            });
        }
        for id in &self.ids_sorted {
            if let Some(pos) = rows.iter().position(|r| &r.id == id) {
                self.record.rows.push(rows.swap_remove(pos));
            }
        }
    }

    /// Runs to completion and returns the telemetry.
    pub fn run(mut self) -> Result<TelemetryRecord, SimError> {
        while self.step()? {}
        Ok(self.finish())
    }

    pub fn finish(mut self) -> TelemetryRecord {
        let events = self.coordinator.drain_events();
        self.record.events.extend(events);
        self.record
    }

    pub fn record(&self) -> &TelemetryRecord {
        &self.record
    }
}

pub fn controller_name(c: &Controller) -> &'static str {
    match c {
        Controller::Cacc(_) => "cacc",
        Controller::HeadProfile(_) => "head_profile",
        Controller::Human => "human",
        Controller::None => "none",
    }
}

/// Full closed-loop lockstep run with every agent in this process.
pub fn run(scenario: &Scenario) -> Result<TelemetryRecord, SimError> {
    let track = scenario.validate()?;
    let host = LocalHost::for_scenario(scenario, &track);
    Engine::new(scenario.clone(), host)?.run()
}

/// Builds a host error from anything printable.
pub fn host_error(e: impl core::fmt::Display) -> SimError {
    SimError::Host(format!("{e}"))
}

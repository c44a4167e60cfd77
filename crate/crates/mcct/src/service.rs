//! The coordinator as a network service.
//!
//! [`RemoteHost`] stands in for in-process agents: it forwards ticks and
//! commands to agent processes over the hub and collects what they send
//! back. In lockstep mode every physics tick waits for an acknowledgement
//! from each agent, so a distributed run reproduces the in-process one. In
//! realtime mode the loop is paced by the wall clock and takes whatever has
//! arrived.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use log::{info, warn};
use mcct_core::agent::uplink;
use mcct_core::dynamics::VehicleState;
use mcct_core::geometry::FrameId;
use mcct_core::message::{EntityId, WireKind};
use mcct_core::netsim::LinkId;
use mcct_core::scenario::{Mode, Scenario};
use mcct_core::sim::{host_error, truth_from_report, AgentHost, Engine, SimError};
use mcct_core::telemetry::TelemetryRecord;
use mcct_core::Message;

use crate::hub::{ConnId, Hub, Ingress};

#[derive(Debug, Clone, Copy)]
pub struct ServeOptions {
    pub mode: Mode,
    /// How long to wait for the whole formation to register.
    pub register_timeout: Duration,
    /// Lockstep: how long one agent may take to acknowledge a tick.
    pub ack_timeout: Duration,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Realtime,
            register_timeout: Duration::from_secs(60),
            ack_timeout: Duration::from_secs(10),
        }
    }
}

#[derive(Debug, Clone)]
struct Endpoint {
    id: EntityId,
    kind: WireKind,
    frame: FrameId,
}

pub struct RemoteHost {
    hub: Hub,
    opts: ServeOptions,
    formation: Vec<EntityId>,
    endpoints: HashMap<ConnId, Endpoint>,
    conn_of: HashMap<EntityId, ConnId>,
    truth: HashMap<EntityId, VehicleState>,
    /// Uplink traffic per formation member, in arrival order.
    inbox: BTreeMap<usize, Vec<(LinkId, Message)>>,
    /// Registrations and console traffic, in arrival order.
    others: Vec<(EntityId, LinkId, Message)>,
    acked: HashMap<EntityId, u64>,
    started: Option<Instant>,
}

impl RemoteHost {
    pub fn new(hub: Hub, scenario: &Scenario, opts: ServeOptions) -> Self {
        Self {
            hub,
            opts,
            formation: scenario.vehicles.iter().map(|v| v.id.clone()).collect(),
            endpoints: HashMap::new(),
            conn_of: HashMap::new(),
            truth: HashMap::new(),
            inbox: BTreeMap::new(),
            others: Vec::new(),
            acked: HashMap::new(),
            started: None,
        }
    }

    pub fn hub(&self) -> &Hub {
        &self.hub
    }

    fn slot(&self, id: &EntityId) -> Option<usize> {
        self.formation.iter().position(|f| f == id)
    }

    /// Handles one ingress event. Errors only for lockstep-fatal losses.
    fn absorb(&mut self, ev: Ingress) -> Result<(), SimError> {
        match ev {
            Ingress::Opened { conn, peer, transport } => info!("connection {conn} from {peer} ({transport:?})"),
            Ingress::Malformed { conn, error } => warn!("connection {conn}: {error}"),
            Ingress::Closed { conn } => {
                if let Some(ep) = self.endpoints.remove(&conn) {
                    info!("{} disconnected", ep.id);
                    self.conn_of.remove(&ep.id);
                    if self.started.is_some() && self.opts.mode == Mode::Lockstep && self.slot(&ep.id).is_some() {
                        return Err(host_error(format!("agent {} disconnected", ep.id)));
                    }
                }
            }
            Ingress::Message { conn, msg } => self.absorb_message(conn, msg),
        }
        Ok(())
    }

    fn absorb_message(&mut self, conn: ConnId, msg: Message) {
        if let Message::Register { id, kind, frame } = &msg {
            if self.conn_of.contains_key(id) {
                warn!("duplicate registration of {id} refused");
                self.hub.close(conn);
                return;
            }
            info!("{id} registered as {kind:?} in frame {frame:?}");
            self.endpoints.insert(
                conn,
                Endpoint {
                    id: id.clone(),
                    kind: *kind,
                    frame: *frame,
                },
            );
            self.conn_of.insert(id.clone(), conn);
            if self.started.is_some() {
                self.others.push((id.clone(), uplink(*kind, *frame, &msg), msg));
            }
            return;
        }
        let Some(ep) = self.endpoints.get(&conn).cloned() else {
            warn!("connection {conn} sent {msg:?} before registering");
            return;
        };
        if let Message::TickAck { step, .. } = msg {
            self.acked.insert(ep.id, step);
            return;
        }
        if let Some((id, state)) = truth_from_report(&msg) {
            if id == ep.id {
                self.truth.insert(id, state);
            }
        }
        let link = uplink(ep.kind, ep.frame, &msg);
        match self.slot(&ep.id) {
            Some(i) => self.inbox.entry(i).or_default().push((link, msg)),
            None => self.others.push((ep.id, link, msg)),
        }
    }

    fn drain_ready(&mut self) -> Result<(), SimError> {
        while let Some(ev) = self.hub.try_recv() {
            self.absorb(ev)?;
        }
        Ok(())
    }

    fn take_traffic(&mut self) -> Vec<(EntityId, LinkId, Message)> {
        let mut out = Vec::new();
        for (i, msgs) in std::mem::take(&mut self.inbox) {
            let id = &self.formation[i];
            out.extend(msgs.into_iter().map(|(l, m)| (id.clone(), l, m)));
        }
        out.append(&mut self.others);
        out
    }
}

impl AgentHost for RemoteHost {
    fn registrations(&mut self) -> Result<Vec<Message>, SimError> {
        let deadline = Instant::now() + self.opts.register_timeout;
        while !self.formation.iter().all(|id| self.conn_of.contains_key(id)) {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                let missing: Vec<String> = self
                    .formation
                    .iter()
                    .filter(|id| !self.conn_of.contains_key(*id))
                    .map(|id| id.to_string())
                    .collect();
                return Err(host_error(format!("agents never registered: {}", missing.join(", "))));
            }
            if let Some(ev) = self.hub.recv_timeout(left.min(Duration::from_millis(50))) {
                self.absorb(ev)?;
            }
        }
        // formation first, then anything else connected so far (consoles)
        let mut regs: Vec<(usize, Message)> = self
            .endpoints
            .values()
            .map(|ep| {
                let order = self.slot(&ep.id).unwrap_or(usize::MAX);
                (
                    order,
                    Message::Register {
                        id: ep.id.clone(),
                        kind: ep.kind,
                        frame: ep.frame,
                    },
                )
            })
            .collect();
        regs.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.subject().cmp(&b.1.subject())));
        // anything that arrived alongside the registrations belongs to step 0
        self.inbox.clear();
        self.others.clear();
        self.started = Some(Instant::now());
        Ok(regs.into_iter().map(|(_, m)| m).collect())
    }

    fn deliver(&mut self, to: &EntityId, msg: &Message) -> Result<(), SimError> {
        if let Some(&conn) = self.conn_of.get(to) {
            if !self.hub.send(conn, msg) && self.opts.mode == Mode::Lockstep && self.slot(to).is_some() {
                return Err(host_error(format!("lost connection to {to}")));
            }
        }
        Ok(())
    }

    fn advance(&mut self, step: u64, t: f64, _dt: f64, _control_tick: bool) -> Result<Vec<(EntityId, LinkId, Message)>, SimError> {
        if self.opts.mode == Mode::Realtime {
            let start = *self.started.get_or_insert_with(Instant::now);
            let due = start + Duration::from_secs_f64(t);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        let tick = Message::Tick { t, step };
        for id in self.formation.clone() {
            if let Some(&conn) = self.conn_of.get(&id) {
                if !self.hub.send(conn, &tick) && self.opts.mode == Mode::Lockstep {
                    return Err(host_error(format!("lost connection to {id}")));
                }
            } else if self.opts.mode == Mode::Lockstep {
                return Err(host_error(format!("agent {id} is not connected")));
            }
        }
        match self.opts.mode {
            Mode::Realtime => self.drain_ready()?,
            Mode::Lockstep => {
                let deadline = Instant::now() + self.opts.ack_timeout;
                while !self.formation.iter().all(|id| self.acked.get(id) == Some(&step)) {
                    let left = deadline.saturating_duration_since(Instant::now());
                    if left.is_zero() {
                        return Err(host_error(format!("tick {step} not acknowledged in time")));
                    }
                    if let Some(ev) = self.hub.recv_timeout(left) {
                        self.absorb(ev)?;
                    }
                }
                // console input that is already here joins this tick
                self.drain_ready()?;
            }
        }
        Ok(self.take_traffic())
    }

    fn truth(&self, id: &EntityId) -> Option<VehicleState> {
        self.truth.get(id).copied()
    }
}

/// Runs `scenario` against agents connecting to `hub` and returns the
/// telemetry once the scenario's duration has elapsed.
pub fn serve(hub: Hub, scenario: &Scenario, opts: ServeOptions) -> Result<TelemetryRecord, SimError> {
    let mut scenario = scenario.clone();
    scenario.mode = opts.mode;
    let host = RemoteHost::new(hub, &scenario, opts);
    let engine = Engine::new(scenario, host)?;
    info!("formation registered, running");
    let record = engine.run()?;
    Ok(record)
}

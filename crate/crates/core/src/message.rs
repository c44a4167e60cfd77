//! Wire-level message types.
//!
//! Field names and tags match the line protocol exactly; the JSON codec
//! itself lives in the `mcct` crate. Coordinates are always full-scale
//! meters, whatever the sender's native frame.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::FrameId;

/// Identity of a vehicle, console or facility.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub String);

impl EntityId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EntityId {
    fn from(s: &str) -> Self {
        Self(s.into())
    }
}

/// Kind declared in a `register` message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WireKind {
    Virtual,
    Physical,
    Hdv,
    Console,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FacilityState {
    On,
    Off,
    Red,
    Yellow,
    Green,
    Up,
    Down,
}

/// A vehicle's reported (or fused) kinematic state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateReport {
    pub id: EntityId,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
}

/// A roadside localization fix, stamped with its capture time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsReport {
    pub id: EntityId,
    pub t_cap: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// The actuation contract: commanded speed and front-wheel angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlCommand {
    pub id: EntityId,
    pub t: f64,
    pub v_cmd: f64,
    pub phi_cmd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Register {
        id: EntityId,
        kind: WireKind,
        frame: FrameId,
    },
    State(StateReport),
    Obs(ObsReport),
    Cmd(ControlCommand),
    Obstacle(ObstacleSpec),
    Perturb {
        id: EntityId,
        dv: f64,
    },
    Facility {
        id: EntityId,
        state: FacilityState,
    },
    Tick {
        t: f64,
        step: u64,
    },
    TickAck {
        step: u64,
        id: EntityId,
    },
    Snapshot {
        t: f64,
        vehicles: Vec<StateReport>,
        obstacles: Vec<ObstacleSpec>,
    },
}

impl Message {
    /// Every float carried by the message, for finiteness checks.
    pub fn floats(&self) -> Vec<f64> {
        match self {
            Message::Register { .. } | Message::Facility { .. } | Message::TickAck { .. } => Vec::new(),
            Message::State(s) => alloc::vec![s.t, s.x, s.y, s.theta, s.v],
            Message::Obs(o) => alloc::vec![o.t_cap, o.x, o.y, o.theta],
            Message::Cmd(c) => alloc::vec![c.t, c.v_cmd, c.phi_cmd],
            Message::Obstacle(o) => alloc::vec![o.x, o.y, o.r],
            Message::Perturb { dv, .. } => alloc::vec![*dv],
            Message::Tick { t, .. } => alloc::vec![*t],
            Message::Snapshot { t, vehicles, obstacles } => {
                let mut out = alloc::vec![*t];
                for s in vehicles {
                    out.extend_from_slice(&[s.t, s.x, s.y, s.theta, s.v]);
                }
                for o in obstacles {
                    out.extend_from_slice(&[o.x, o.y, o.r]);
                }
                out
            }
        }
    }

    /// The entity a message speaks for, if any.
    pub fn subject(&self) -> Option<&EntityId> {
        match self {
            Message::Register { id, .. }
            | Message::Perturb { id, .. }
            | Message::Facility { id, .. }
            | Message::TickAck { id, .. } => Some(id),
            Message::State(s) => Some(&s.id),
            Message::Obs(o) => Some(&o.id),
            Message::Cmd(c) => Some(&c.id),
            Message::Obstacle(_) | Message::Tick { .. } | Message::Snapshot { .. } => None,
        }
    }
}

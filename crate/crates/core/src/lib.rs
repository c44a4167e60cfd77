#![no_std]

//! # `mcct-core`
//!
//! Algorithmic core of a desk-scale cloud-control testbed where physical
//! and virtual vehicles share one road. Emulated miniature vehicles, virtual
//! vehicles and human-driven vehicles are fused by a cloud coordinator into
//! one mixed space, connected through a delay-modelled message bus, and
//! driven as a platoon by cloud-side CACC.
//!
//! Everything here is deterministic given a seed and performs no IO. The
//! companion `mcct` crate carries the wire codec, file formats, networking
//! and the command line.

extern crate alloc;

/// Physics and control cadence shared by the simulation engine.
pub mod clock;
/// Step-response comparison between the two vehicle kinds.
pub mod calibration;
/// Cloud-side longitudinal and lateral controllers.
pub mod control;
/// Bicycle-model integration and the emulated miniature-vehicle actuator.
pub mod dynamics;
/// Coordinate frames, poses and the closed experiment track.
pub mod geometry;
/// The messages exchanged between coordinator, agents and consoles.
pub mod message;
/// The cloud coordinator that owns the mixed space.
pub mod mixedspace;
/// Delay-injected message bus.
pub mod netsim;
/// Roadside localization emulator.
pub mod perception;
/// Seeded random streams.
pub mod rng;
/// Experiment descriptions and presets.
pub mod scenario;
/// Lockstep simulation engine and in-process agents.
pub mod sim;
/// Telemetry records, metrics and replay.
pub mod telemetry;
/// Vehicle-side processes: emulated physical, virtual and scripted human.
pub mod agent;

pub use geometry::{Frame, FrameId, Pose2D, Track};
pub use message::{EntityId, Message};

/// Length ratio between the full-scale (virtual) world and the miniature sand table.
pub const MINIATURE_SCALE: f64 = 14.0;

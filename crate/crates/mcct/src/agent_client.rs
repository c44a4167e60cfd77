//! A vehicle agent running as its own process, clocked by the coordinator's
//! ticks.

use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::time::Duration;

use log::{debug, warn};
use mcct_core::agent::{AgentConfig, VehicleAgent};
use mcct_core::clock::Cadence;
use mcct_core::Message;

use crate::hub::connect;
use crate::wire::{encode, FrameDecoder, WireError};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("connection: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("dynamics: {0}")]
    Dynamics(#[from] mcct_core::dynamics::DynamicsError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AgentSummary {
    pub ticks: u64,
    pub commands: u64,
    pub last_t: f64,
}

/// Connects, registers and serves ticks until the coordinator hangs up.
pub fn run_agent(addr: &str, cfg: AgentConfig, cadence: Cadence) -> Result<AgentSummary, AgentError> {
    let stream = connect(addr, 200, Duration::from_millis(50))?;
    drive(stream, VehicleAgent::new(cfg), cadence)
}

pub fn drive(mut stream: TcpStream, mut agent: VehicleAgent, cadence: Cadence) -> Result<AgentSummary, AgentError> {
    let mut out = Vec::with_capacity(1024);
    out.extend(encode(&agent.register_message())?);
    stream.write_all(&out)?;

    let mut summary = AgentSummary::default();
    let mut decoder = FrameDecoder::new();
    let mut buf = [0u8; 16 * 1024];
    loop {
        let n = match stream.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::ConnectionReset => break,
            Err(e) => return Err(e.into()),
        };
        decoder.push(&buf[..n]);
        out.clear();
        while let Some(item) = decoder.next_message() {
            match item? {
                Message::Tick { t, step } => {
                    let control = cadence.is_control_step(step);
                    for (_, msg) in agent.tick(step, t, cadence.physics_dt, control)? {
                        out.extend(encode(&msg)?);
                    }
                    out.extend(encode(&Message::TickAck {
                        step,
                        id: agent.id().clone(),
                    })?);
                    summary.ticks += 1;
                    summary.last_t = t;
                }
                msg @ Message::Cmd(_) => {
                    agent.handle(&msg);
                    summary.commands += 1;
                }
                Message::Snapshot { .. } => {}
                other => debug!("{} ignores {other:?}", agent.id()),
            }
        }
        if !out.is_empty() {
            if let Err(e) = stream.write_all(&out) {
                warn!("{}: write failed: {e}", agent.id());
                break;
            }
        }
    }
    Ok(summary)
}

//! # `mcct`
//!
//! Everything around the deterministic core that touches the outside world:
//! the line-protocol codec, scenario and telemetry files, the coordinator
//! service with its TCP/WebSocket endpoint, standalone vehicle agents,
//! plots, and the `mcct` command line.

pub mod agent_client;
pub mod hub;
pub mod plot;
pub mod scenario_file;
pub mod service;
pub mod telemetry_io;
pub mod wire;

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use mcct_core::scenario::Scenario;
use mcct_core::sim::{Engine, LocalHost, SimError};
use mcct_core::telemetry::{MetricsReport, TelemetryRecord};

pub use mcct_core;

/// Stamps the scenario hash into the record header.
pub fn stamp(record: &mut TelemetryRecord, scenario: &Scenario) {
    if let Some(h) = record.header.as_mut() {
        h.scenario_hash = scenario_file::hash(scenario);
    }
}

/// In-process run. Lockstep runs as fast as possible; realtime sleeps so
/// that simulated time tracks the wall clock.
pub fn run_local(scenario: &Scenario) -> Result<TelemetryRecord, SimError> {
    let track = scenario.validate()?;
    let host = LocalHost::for_scenario(scenario, &track);
    let mut engine = Engine::new(scenario.clone(), host)?;
    let start = Instant::now();
    let realtime = scenario.mode == mcct_core::scenario::Mode::Realtime;
    loop {
        if realtime {
            let due = start + Duration::from_secs_f64(engine.time());
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
        if !engine.step()? {
            break;
        }
    }
    let mut record = engine.finish();
    stamp(&mut record, scenario);
    Ok(record)
}

fn opt(v: Option<f64>, digits: usize) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.digits$}"),
        Some(x) => format!("{x}"),
        None => "-".into(),
    }
}

/// Plain-text metrics table.
pub fn summary_table(m: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "perturbation window {:.2}..{:.2} s, steady state from {:.2} s, order preserved: {}",
        m.window_start, m.window_end, m.steady_start, m.order_preserved
    );
    let _ = writeln!(
        s,
        "{:<8} {:>10} {:>12} {:>14} {:>10} {:>9}",
        "vehicle", "pp [m/s]", "attenuation", "gap rms [m]", "settle [s]", "min gap"
    );
    for v in &m.vehicles {
        let _ = writeln!(
            s,
            "{:<8} {:>10.3} {:>12} {:>14} {:>10.2} {:>9}",
            v.id.as_str(),
            v.peak_to_peak,
            opt(v.attenuation, 3),
            opt(v.gap_rms_error, 3),
            v.settling_time,
            opt(v.min_gap, 2)
        );
    }
    s
}

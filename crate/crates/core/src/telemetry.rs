//! Telemetry records, platoon metrics and replay.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::message::{EntityId, FacilityState, Message, ObstacleSpec, StateReport};

/// Static description of one platoon member, in formation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleMeta {
    pub id: EntityId,
    /// "virtual", "physical" or "hdv".
    pub kind: String,
    /// "cacc", "head_profile", "human" or "none".
    pub controller: String,
    pub d_des: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryHeader {
    pub scenario: String,
    /// Digest of the scenario document; filled in by the file layer.
    pub scenario_hash: String,
    pub seed: u64,
    pub control_dt: f64,
    pub lap_length: f64,
    pub vehicles: Vec<VehicleMeta>,
}

/// One vehicle at one control tick. `s` .. `v` are ground truth; the
/// `fused_*` columns are the coordinator's view (absent until first fused).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub t: f64,
    pub id: EntityId,
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub v_cmd: f64,
    pub phi_cmd: f64,
    pub gap_to_leader: Option<f64>,
    pub fused_x: Option<f64>,
    pub fused_y: Option<f64>,
    pub fused_theta: Option<f64>,
    pub fused_v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TelemetryEvent {
    HeadPerturbation {
        t: f64,
        id: EntityId,
        duration: f64,
        period: f64,
        amplitude: f64,
    },
    Perturb {
        t: f64,
        id: EntityId,
        dv: f64,
    },
    Obstacle {
        t: f64,
        x: f64,
        y: f64,
        r: f64,
    },
    Facility {
        t: f64,
        id: EntityId,
        state: FacilityState,
    },
}

impl TelemetryEvent {
    pub fn t(&self) -> f64 {
        match self {
            TelemetryEvent::HeadPerturbation { t, .. }
            | TelemetryEvent::Perturb { t, .. }
            | TelemetryEvent::Obstacle { t, .. }
            | TelemetryEvent::Facility { t, .. } => *t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub header: Option<TelemetryHeader>,
    pub rows: Vec<TelemetryRow>,
    pub events: Vec<TelemetryEvent>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TelemetryError {
    #[error("telemetry has no head perturbation event")]
    WindowNotFound,
    #[error("replay speed must be a positive finite ratio, got {0}")]
    InvalidSpeed(f64),
    #[error("malformed telemetry: {0}")]
    MalformedRecord(String),
}

impl TelemetryRecord {
    pub fn header(&self) -> Result<&TelemetryHeader, TelemetryError> {
        self.header
            .as_ref()
            .ok_or_else(|| TelemetryError::MalformedRecord("missing header".into()))
    }

    /// Rows must be strictly ordered by `(t, id)` and reference known vehicles.
    pub fn check(&self) -> Result<(), TelemetryError> {
        let header = self.header()?;
        for (i, w) in self.rows.windows(2).enumerate() {
            let ordered = w[0].t < w[1].t || (w[0].t == w[1].t && w[0].id < w[1].id);
            if !ordered {
                return Err(TelemetryError::MalformedRecord(alloc::format!(
                    "rows {} and {} out of (t, id) order",
                    i,
                    i + 1
                )));
            }
        }
        if let Some(r) = self.rows.iter().find(|r| !header.vehicles.iter().any(|m| m.id == r.id)) {
            return Err(TelemetryError::MalformedRecord(alloc::format!("row for unknown vehicle {}", r.id)));
        }
        Ok(())
    }

    /// Truth speed traces per vehicle: `(t, v)` samples in time order.
    pub fn speed_traces(&self) -> BTreeMap<EntityId, Vec<(f64, f64)>> {
        let mut out: BTreeMap<EntityId, Vec<(f64, f64)>> = BTreeMap::new();
        for r in &self.rows {
            out.entry(r.id.clone()).or_default().push((r.t, r.v));
        }
        out
    }

    pub fn head_perturbation(&self) -> Option<(f64, f64, f64)> {
        self.events.iter().find_map(|e| match e {
            TelemetryEvent::HeadPerturbation { t, duration, period, .. } => Some((*t, *duration, *period)),
            _ => None,
        })
    }
}

/// Per-vehicle platoon metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleMetrics {
    pub id: EntityId,
    /// Peak-to-peak truth speed inside the perturbation window, m/s.
    pub peak_to_peak: f64,
    /// Peak-to-peak relative to the predecessor (`None` for the first vehicle).
    pub attenuation: Option<f64>,
    /// RMS of `gap - d_des` over the steady-state tail, m.
    pub gap_rms_error: Option<f64>,
    /// Seconds after the trigger until speed stays within ±2% of its final value.
    pub settling_time: f64,
    pub min_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub window_start: f64,
    pub window_end: f64,
    pub steady_start: f64,
    pub vehicles: Vec<VehicleMetrics>,
    /// No follower ever passed its leader.
    pub order_preserved: bool,
}

impl MetricsReport {
    pub fn get(&self, id: &str) -> Option<&VehicleMetrics> {
        self.vehicles.iter().find(|v| v.id.as_str() == id)
    }

    pub fn peak_to_peak(&self, id: &str) -> Option<f64> {
        self.get(id).map(|m| m.peak_to_peak)
    }
}

/// Settling margin after the perturbation window before gap errors count.
pub const STEADY_STATE_DELAY: f64 = 20.0;
/// Relative band used for settling time.
pub const SETTLING_BAND: f64 = 0.02;

/// Ratio with the degenerate-case conventions: 0/0 is 1, x/0 is infinite.
pub fn attenuation_ratio(pp: f64, pp_prev: f64) -> f64 {
    if pp_prev == 0.0 {
        if pp == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        pp / pp_prev
    }
}

/// Computes platoon metrics. The perturbation window runs from the head
/// trigger for the scripted cycles plus one extra period of propagation.
pub fn metrics(record: &TelemetryRecord) -> Result<MetricsReport, TelemetryError> {
    let header = record.header()?;
    let (t0, duration, period) = record.head_perturbation().ok_or(TelemetryError::WindowNotFound)?;
    let window_end = t0 + duration + period;
    let steady_start = window_end + STEADY_STATE_DELAY;
    let lap = header.lap_length;

    let mut by_id: BTreeMap<&EntityId, Vec<&TelemetryRow>> = BTreeMap::new();
    for r in &record.rows {
        by_id.entry(&r.id).or_default().push(r);
    }
    let t_end = record.rows.last().map(|r| r.t).unwrap_or(0.0);
    if t_end < t0 {
        return Err(TelemetryError::WindowNotFound);
    }

    let mut order_preserved = true;
    let mut vehicles = Vec::with_capacity(header.vehicles.len());
    let mut prev_pp: Option<f64> = None;
    for meta in &header.vehicles {
        let rows = by_id.get(&meta.id).map(|v| v.as_slice()).unwrap_or(&[]);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for r in rows.iter().filter(|r| r.t >= t0 && r.t <= window_end) {
            lo = lo.min(r.v);
            hi = hi.max(r.v);
        }
        let pp = if hi >= lo { hi - lo } else { 0.0 };

        let gap_rms_error = meta.d_des.and_then(|d| {
            let tail: Vec<f64> = rows
                .iter()
                .filter(|r| r.t >= steady_start)
                .filter_map(|r| r.gap_to_leader.map(|g| g - d))
                .collect();
            if tail.is_empty() {
                None
            } else {
                Some((tail.iter().map(|e| e * e).sum::<f64>() / tail.len() as f64).sqrt())
            }
        });

        let gaps: Vec<f64> = rows.iter().filter_map(|r| r.gap_to_leader).collect();
        let min_gap = gaps.iter().cloned().fold(None, |m: Option<f64>, g| Some(m.map_or(g, |m| m.min(g))));
        // a pass shows up as the forward gap jumping to nearly a full lap
        if gaps.iter().any(|g| *g > 0.5 * lap) {
            order_preserved = false;
        }

        let final_samples: Vec<f64> = rows.iter().filter(|r| r.t >= t_end - 10.0).map(|r| r.v).collect();
        let v_final = if final_samples.is_empty() {
            0.0
        } else {
            final_samples.iter().sum::<f64>() / final_samples.len() as f64
        };
        let band = SETTLING_BAND * v_final.abs();
        let last_out = rows
            .iter()
            .filter(|r| r.t >= t0 && (r.v - v_final).abs() > band)
            .map(|r| r.t)
            .fold(None, |_, t| Some(t));
        let settling_time = last_out.map_or(0.0, |t| t - t0);

        vehicles.push(VehicleMetrics {
            id: meta.id.clone(),
            peak_to_peak: pp,
            attenuation: prev_pp.map(|p| attenuation_ratio(pp, p)),
            gap_rms_error,
            settling_time,
            min_gap,
        });
        prev_pp = Some(pp);
    }
    Ok(MetricsReport {
        window_start: t0,
        window_end,
        steady_start,
        vehicles,
        order_preserved,
    })
}

/// Rebuilds the coordinator's snapshot stream from a record. Each snapshot
/// is paired with its wall-clock offset at `speed`× real time.
pub fn replay(record: &TelemetryRecord, speed: f64) -> Result<Vec<(f64, Message)>, TelemetryError> {
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(TelemetryError::InvalidSpeed(speed));
    }
    record.check()?;
    let header = record.header()?;
    let order: BTreeMap<&EntityId, usize> = header.vehicles.iter().enumerate().map(|(i, m)| (&m.id, i)).collect();

    let mut out = Vec::new();
    let mut i = 0;
    while i < record.rows.len() {
        let t = record.rows[i].t;
        let mut j = i;
        let mut tick: Vec<&TelemetryRow> = Vec::new();
        while j < record.rows.len() && record.rows[j].t == t {
            tick.push(&record.rows[j]);
            j += 1;
        }
        tick.sort_by_key(|r| order.get(&r.id).copied().unwrap_or(usize::MAX));
        let vehicles = tick
            .iter()
            .filter_map(|r| match (r.fused_x, r.fused_y, r.fused_theta, r.fused_v) {
                (Some(x), Some(y), Some(theta), Some(v)) => Some(StateReport {
                    id: r.id.clone(),
                    t,
                    x,
                    y,
                    theta,
                    v,
                }),
                _ => None,
            })
            .collect();
        let obstacles = record
            .events
            .iter()
            .filter_map(|e| match e {
                TelemetryEvent::Obstacle { t: te, x, y, r } if *te <= t => Some(ObstacleSpec { x: *x, y: *y, r: *r }),
                _ => None,
            })
            .collect();
        out.push((t / speed, Message::Snapshot { t, vehicles, obstacles }));
        i = j;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    extern crate std;
    use super::*;
    use alloc::string::ToString;
    use core::f64::consts::PI;

    fn header(n: usize) -> TelemetryHeader {
        TelemetryHeader {
            scenario: "synthetic".into(),
            scenario_hash: String::new(),
            seed: 0,
            control_dt: 0.05,
            lap_length: 245.0,
            vehicles: (0..n)
                .map(|i| VehicleMeta {
                    id: EntityId::new(alloc::format!("v{}", i + 1)),
                    kind: "virtual".to_string(),
                    controller: if i == 0 { "head_profile" } else { "cacc" }.to_string(),
                    d_des: if i == 0 { None } else { Some(8.4) },
                })
                .collect(),
        }
    }

    fn synthetic(amplitudes: &[f64], gap: f64) -> TelemetryRecord {
        let mut rows = Vec::new();
        for k in 0..2400 {
            let t = k as f64 * 0.05;
            for (i, a) in amplitudes.iter().enumerate() {
                let v = 4.2 + a * (2.0 * PI * (t - 20.0) / 3.5).sin();
                rows.push(TelemetryRow {
                    t,
                    id: EntityId::new(alloc::format!("v{}", i + 1)),
                    s: 0.0,
                    x: t,
                    y: i as f64,
                    theta: 0.0,
                    v,
                    v_cmd: v,
                    phi_cmd: 0.0,
                    gap_to_leader: if i == 0 { None } else { Some(gap) },
                    fused_x: Some(t),
                    fused_y: Some(i as f64),
                    fused_theta: Some(0.0),
                    fused_v: Some(v),
                });
            }
        }
        TelemetryRecord {
            header: Some(header(amplitudes.len())),
            rows,
            events: alloc::vec![TelemetryEvent::HeadPerturbation {
                t: 20.0,
                id: "v1".into(),
                duration: 7.0,
                period: 3.5,
                amplitude: 1.4,
            }],
        }
    }

    #[test]
    fn geometric_decay_is_recovered() {
        let amps: Vec<f64> = (0..6).map(|i| 1.4 * 0.7f64.powi(i)).collect();
        let m = metrics(&synthetic(&amps, 8.4)).unwrap();
        assert!((m.vehicles[0].peak_to_peak - 2.8).abs() < 0.05);
        for v in &m.vehicles[1..] {
            assert!((v.attenuation.unwrap() - 0.7).abs() < 0.01, "{v:?}");
            assert_eq!(v.gap_rms_error, Some(0.0));
        }
        assert!(m.order_preserved);
        assert!(m.vehicles[0].attenuation.is_none());
    }

    #[test]
    fn constant_traces_use_unit_ratio() {
        let m = metrics(&synthetic(&[0.0, 0.0, 0.0], 8.4)).unwrap();
        for v in &m.vehicles[1..] {
            assert_eq!(v.attenuation, Some(1.0));
            assert_eq!(v.settling_time, 0.0);
        }
        assert_eq!(attenuation_ratio(1.0, 0.0), f64::INFINITY);
    }

    #[test]
    fn missing_trigger_is_an_error() {
        let mut r = synthetic(&[1.0, 0.5], 8.4);
        r.events.clear();
        assert_eq!(metrics(&r), Err(TelemetryError::WindowNotFound));
    }

    #[test]
    fn overtaking_is_detected() {
        let m = metrics(&synthetic(&[1.0, 0.5], 244.0)).unwrap();
        assert!(!m.order_preserved);
    }

    #[test]
    fn replay_rejects_bad_speeds_and_records() {
        let r = synthetic(&[1.0, 0.5], 8.4);
        for s in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(replay(&r, s), Err(TelemetryError::InvalidSpeed(_))));
        }
        let mut bad = r.clone();
        bad.rows.swap(0, 1);
        assert!(matches!(replay(&bad, 1.0), Err(TelemetryError::MalformedRecord(_))));
        let mut bad = r;
        bad.header = None;
        assert!(matches!(replay(&bad, 1.0), Err(TelemetryError::MalformedRecord(_))));
    }

    #[test]
    fn replay_spans_record_at_speed() {
        let r = synthetic(&[1.0, 0.5], 8.4);
        let s = replay(&r, 1.0).unwrap();
        assert_eq!(s.len(), 2400);
        assert!((s.last().unwrap().0 - 119.95).abs() < 1e-9);
        let fast = replay(&r, 4.0).unwrap();
        assert!((fast.last().unwrap().0 - 119.95 / 4.0).abs() < 1e-9);
        match &s[3].1 {
            Message::Snapshot { vehicles, .. } => {
                assert_eq!(vehicles.len(), 2);
                assert_eq!(vehicles[0].id.as_str(), "v1");
            }
            other => panic!("{other:?}"),
        }
    }
}

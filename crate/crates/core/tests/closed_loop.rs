use std::collections::BTreeMap;

use mcct_core::agent::{SourceKind, VehicleAgent};
use mcct_core::dynamics::{VehicleKind, VehicleParams};
use mcct_core::message::{EntityId, Message};
use mcct_core::mixedspace::{Coordinator, MixedError};
use mcct_core::scenario::Scenario;
use mcct_core::sim::{run, AgentHost, Engine, LocalHost};
use mcct_core::telemetry::{replay, TelemetryRecord};

fn truncated(mut s: Scenario, duration: f64) -> Scenario {
    s.duration = duration;
    s
}

/// Agents wired straight into the coordinator with no bus at all.
fn direct_poses(s: &Scenario) -> BTreeMap<(u64, String), (f64, f64)> {
    let track = s.validate().unwrap();
    let c = s.cadence;
    let mut agents: Vec<VehicleAgent> = (0..s.vehicles.len())
        .map(|i| VehicleAgent::new(s.agent_config(&track, i)))
        .collect();
    let mut coord = Coordinator::new(track.clone(), s.formation(), c.control_dt(), s.warmup);
    for a in &agents {
        coord.handle(&a.register_message(), 0.0).unwrap();
    }
    let mut out = BTreeMap::new();
    for n in 0..=c.steps_for(s.duration) {
        let t = c.time_of(n);
        let control = c.is_control_step(n);
        for a in agents.iter_mut() {
            for (_, m) in a.tick(n, t, c.physics_dt, control).unwrap() {
                let _ = coord.handle(&m, t);
            }
        }
        if !control {
            continue;
        }
        match coord.control_step(t) {
            Ok(cmds) => {
                for cmd in cmds {
                    let msg = Message::Cmd(cmd);
                    for a in agents.iter_mut() {
                        a.handle(&msg);
                    }
                }
            }
            Err(MixedError::MissingState(_)) if t < s.warmup => {}
            Err(e) => panic!("{e}"),
        }
        for a in &agents {
            let p = a.state().pose;
            out.insert((n, a.id().to_string()), (p.x, p.y));
        }
    }
    out
}

fn row_poses(rec: &TelemetryRecord, ticks_per_control: u64, dt: f64) -> BTreeMap<(u64, String), (f64, f64)> {
    rec.rows
        .iter()
        .map(|r| {
            let n = (r.t / dt).round() as u64;
            assert_eq!(n % ticks_per_control, 0);
            ((n, r.id.to_string()), (r.x, r.y))
        })
        .collect()
}

#[test]
fn zero_delay_bus_matches_direct_calls() {
    // includes the scripted driver and the head perturbation
    let mut s = truncated(Scenario::experiment_b().with_zero_delay(), 25.0);
    // start the head 25 m short of the landmark so the sinusoid fires early
    for (i, v) in s.vehicles.iter_mut().enumerate() {
        v.initial_s = 220.0 - 8.4 * i as f64;
    }
    let rec = run(&s).unwrap();
    assert!(rec.events.iter().any(|e| matches!(e, mcct_core::telemetry::TelemetryEvent::HeadPerturbation { .. })));
    let bus = row_poses(&rec, s.cadence.ticks_per_control.into(), s.cadence.physics_dt);
    let direct = direct_poses(&s);
    assert_eq!(bus.len(), direct.len());
    for (k, (x, y)) in &bus {
        let (dx, dy) = direct[k];
        assert!((x - dx).abs() <= 1e-9 && (y - dy).abs() <= 1e-9, "{k:?}: ({x}, {y}) vs ({dx}, {dy})");
    }
}

fn ideal_physical() -> VehicleParams {
    let mut p = VehicleParams::emulated_physical();
    p.actuator_tau_v = 0.0;
    p.actuator_tau_phi = 0.0;
    p.process_noise_sigma_v = 0.0;
    p
}

#[test]
fn swapping_vehicle_kind_leaves_trajectory_unchanged() {
    let mut base = truncated(Scenario::experiment_a().noiseless().with_zero_delay(), 40.0);
    for v in base.vehicles.iter_mut() {
        if v.kind == SourceKind::Physical {
            v.params = Some(ideal_physical());
        }
    }
    let reference = run(&base).unwrap();
    for swap in [1usize, 2, 3, 4] {
        let mut s = base.clone();
        let v = &mut s.vehicles[swap];
        let (kind, params) = if v.kind == SourceKind::Physical {
            (SourceKind::Virtual, VehicleParams { kind: VehicleKind::Virtual, ..ideal_physical() })
        } else {
            (SourceKind::Physical, VehicleParams { kind: VehicleKind::EmulatedPhysical, ..VehicleParams::virtual_replica() })
        };
        v.kind = kind;
        v.params = Some(params);
        let rec = run(&s).unwrap();
        assert_eq!(rec.rows.len(), reference.rows.len());
        let worst = rec
            .rows
            .iter()
            .zip(&reference.rows)
            .map(|(a, b)| (a.x - b.x).abs().max((a.y - b.y).abs()).max((a.v - b.v).abs()))
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "swap {swap}: {worst}");
    }
}

#[test]
fn unperturbed_platoon_settles_at_equilibrium() {
    let s = truncated(Scenario::experiment_a().without_perturbation().noiseless(), 120.0);
    let rec = run(&s).unwrap();
    for id in ["v1", "v2", "v3", "v4", "v5", "v6"] {
        let tail: Vec<_> = rec.rows.iter().filter(|r| r.id.as_str() == id && r.t >= 110.0).collect();
        let v = tail.iter().map(|r| r.v).sum::<f64>() / tail.len() as f64;
        assert!((v - 4.2).abs() <= 0.02 * 4.2, "{id} speed {v}");
        if id != "v1" {
            let gap = tail.iter().map(|r| r.gap_to_leader.unwrap()).sum::<f64>() / tail.len() as f64;
            assert!((gap - 8.4).abs() <= 0.02 * 8.4, "{id} gap {gap}");
        }
    }
}

#[test]
fn coordinator_holds_only_full_scale_poses() {
    // noiseless, delay-free: any leftover miniature coordinates would be off by 14×
    let s = truncated(Scenario::experiment_a().noiseless().with_zero_delay(), 15.0);
    let track = s.validate().unwrap();
    let mut engine = Engine::new(s.clone(), LocalHost::for_scenario(&s, &track)).unwrap();
    let mut checked = 0;
    loop {
        let n = engine.current_step();
        let more = engine.step().unwrap();
        if s.cadence.is_control_step(n) {
            let t = s.cadence.time_of(n);
            for rec in engine.coordinator().records() {
                let Some(fused) = rec.fused_at(t) else { continue };
                let truth = engine.host().truth(&rec.id).unwrap();
                let err = (fused.pose.x - truth.pose.x).hypot(fused.pose.y - truth.pose.y);
                assert!(err < 1e-9, "{} at {t}: {err}", rec.id);
                assert!(rec.last_state.is_some_and(|st| st.pose.x.is_finite()));
                checked += 1;
            }
        }
        if !more {
            break;
        }
    }
    assert!(checked > 1000);
}

#[test]
fn commands_depend_only_on_the_past() {
    let s = truncated(Scenario::experiment_a(), 12.0);
    let track = s.validate().unwrap();
    let split = 150u64;
    let mut a = Engine::new(s.clone(), LocalHost::for_scenario(&s, &track)).unwrap();
    let mut b = Engine::new(s.clone(), LocalHost::for_scenario(&s, &track)).unwrap();
    let ids: Vec<EntityId> = s.vehicles.iter().map(|v| v.id.clone()).collect();
    let mut diverged = false;
    loop {
        let n = a.current_step();
        if n == split + 1 {
            let t = b.time();
            b.coordinator_mut().apply_perturb(&ids[0], 3.0, t).unwrap();
        }
        let more = a.step().unwrap();
        b.step().unwrap();
        for id in &ids {
            let (ca, cb) = (a.coordinator().last_command(id), b.coordinator().last_command(id));
            if n <= split {
                assert_eq!(ca, cb, "step {n}");
                if let Some(c) = ca {
                    assert!(c.t <= a.time() + 1e-12);
                }
            } else if ca != cb {
                diverged = true;
            }
        }
        for rec in a.coordinator().records() {
            assert!(rec.last_update_time <= s.cadence.time_of(n) + 1e-12);
        }
        if !more {
            break;
        }
    }
    assert!(diverged);
}

#[test]
fn replayed_snapshots_equal_live_ones() {
    let s = truncated(Scenario::experiment_b(), 30.0);
    let track = s.validate().unwrap();
    let mut engine = Engine::new(s.clone(), LocalHost::for_scenario(&s, &track)).unwrap();
    engine.capture_snapshots();
    let t_obstacle = 10.0;
    while engine.step().unwrap() {
        if (engine.time() - t_obstacle).abs() < 1e-9 {
            let p = track.point_at(40.0);
            engine
                .coordinator_mut()
                .add_obstacle(mcct_core::message::ObstacleSpec { x: p.x, y: p.y, r: 0.5 }, t_obstacle)
                .unwrap();
        }
    }
    let live = engine.snapshots().to_vec();
    let rec = engine.finish();
    let replayed: Vec<Message> = replay(&rec, 4.0).unwrap().into_iter().map(|(_, m)| m).collect();
    assert_eq!(replayed.len(), live.len());
    let mut with_obstacle = 0;
    for (r, l) in replayed.iter().zip(&live) {
        assert_eq!(r, l);
        if let Message::Snapshot { obstacles, .. } = l {
            with_obstacle += usize::from(!obstacles.is_empty());
        }
    }
    assert!(with_obstacle > 0);
}

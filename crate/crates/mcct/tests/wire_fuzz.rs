use mcct::wire::{decode, encode, FrameDecoder, WireError};
use mcct_core::geometry::FrameId;
use mcct_core::message::{ControlCommand, EntityId, FacilityState, ObsReport, ObstacleSpec, StateReport, WireKind};
use mcct_core::Message;
use proptest::prelude::*;

fn id() -> impl Strategy<Value = EntityId> {
    "[a-zA-Z0-9_\\- \"\\\\é]{0,12}".prop_map(EntityId::new)
}

fn num() -> impl Strategy<Value = f64> {
    prop_oneof![any::<f64>().prop_filter("finite", |x| x.is_finite()), -1e6..1e6f64]
}

fn state() -> impl Strategy<Value = StateReport> {
    (id(), num(), num(), num(), num(), num()).prop_map(|(id, t, x, y, theta, v)| StateReport {
        id,
        t,
        x,
        y,
        theta,
        v,
    })
}

fn obstacle() -> impl Strategy<Value = ObstacleSpec> {
    (num(), num(), num()).prop_map(|(x, y, r)| ObstacleSpec { x, y, r })
}

fn message() -> impl Strategy<Value = Message> {
    let kind = prop_oneof![
        Just(WireKind::Virtual),
        Just(WireKind::Physical),
        Just(WireKind::Hdv),
        Just(WireKind::Console)
    ];
    let frame = prop_oneof![Just(FrameId::PhysicalMiniature), Just(FrameId::FullScale)];
    let facility = prop_oneof![
        Just(FacilityState::On),
        Just(FacilityState::Off),
        Just(FacilityState::Red),
        Just(FacilityState::Yellow),
        Just(FacilityState::Green),
        Just(FacilityState::Up),
        Just(FacilityState::Down)
    ];
    prop_oneof![
        (id(), kind, frame).prop_map(|(id, kind, frame)| Message::Register { id, kind, frame }),
        state().prop_map(Message::State),
        (id(), num(), num(), num(), num()).prop_map(|(id, t_cap, x, y, theta)| Message::Obs(ObsReport {
            id,
            t_cap,
            x,
            y,
            theta
        })),
        (id(), num(), num(), num()).prop_map(|(id, t, v_cmd, phi_cmd)| Message::Cmd(ControlCommand {
            id,
            t,
            v_cmd,
            phi_cmd
        })),
        obstacle().prop_map(Message::Obstacle),
        (id(), num()).prop_map(|(id, dv)| Message::Perturb { id, dv }),
        (id(), facility).prop_map(|(id, state)| Message::Facility { id, state }),
        (num(), any::<u64>()).prop_map(|(t, step)| Message::Tick { t, step }),
        (any::<u64>(), id()).prop_map(|(step, id)| Message::TickAck { step, id }),
        (num(), prop::collection::vec(state(), 0..4), prop::collection::vec(obstacle(), 0..3))
            .prop_map(|(t, vehicles, obstacles)| Message::Snapshot { t, vehicles, obstacles }),
    ]
}

proptest! {
    #[test]
    fn every_message_round_trips(msg in message()) {
        let frame = encode(&msg).unwrap();
        prop_assert_eq!(frame.last(), Some(&b'\n'));
        prop_assert_eq!(frame.iter().filter(|b| **b == b'\n').count(), 1);
        prop_assert_eq!(decode(&frame).unwrap(), msg);
    }

    #[test]
    fn stream_splits_do_not_matter(msgs in prop::collection::vec(message(), 1..6), cuts in prop::collection::vec(any::<prop::sample::Index>(), 0..8)) {
        let bytes: Vec<u8> = msgs.iter().flat_map(|m| encode(m).unwrap()).collect();
        let mut points: Vec<usize> = cuts.iter().map(|c| c.index(bytes.len() + 1)).collect();
        points.push(0);
        points.push(bytes.len());
        points.sort_unstable();
        let mut dec = FrameDecoder::new();
        let mut got = Vec::new();
        for w in points.windows(2) {
            dec.push(&bytes[w[0]..w[1]]);
            while let Some(m) = dec.next_message() {
                got.push(m.unwrap());
            }
        }
        prop_assert_eq!(got, msgs);
        prop_assert_eq!(dec.pending(), 0);
        prop_assert!(dec.finish().is_ok());
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..256)) {
        let _ = decode(&bytes);
        let mut dec = FrameDecoder::new();
        dec.push(&bytes);
        while let Some(item) = dec.next_message() {
            if let Err(e) = item {
                let known = matches!(e, WireError::MalformedFrame { .. } | WireError::NonFinite | WireError::Oversized(_));
                prop_assert!(known);
            }
        }
    }

    #[test]
    fn truncated_frames_are_refused(msg in message(), cut in any::<prop::sample::Index>()) {
        let frame = encode(&msg).unwrap();
        let n = cut.index(frame.len());
        let is_malformed = matches!(decode(&frame[..n]), Err(WireError::MalformedFrame { .. }));
        prop_assert!(is_malformed);
    }
}

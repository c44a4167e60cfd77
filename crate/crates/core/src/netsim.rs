//! Delay-injected message bus.
//!
//! Each of the eight links draws a Gaussian one-way delay, clamped to
//! `[0, 2·p99]`. Messages wait in a priority queue ordered by
//! `(deliver_time, sender, seq)`; delivery times are repaired so that a
//! sender's later message on a link never overtakes an earlier one.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::message::{EntityId, Message};
use crate::rng::{gaussian, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkId {
    VehicleUp,
    VehicleDown,
    CameraUp,
    FacilityDown,
    UnityUp,
    UnityDown,
    HmiUp,
    HmiDown,
}

impl LinkId {
    pub const ALL: [LinkId; 8] = [
        LinkId::VehicleUp,
        LinkId::VehicleDown,
        LinkId::CameraUp,
        LinkId::FacilityDown,
        LinkId::UnityUp,
        LinkId::UnityDown,
        LinkId::HmiUp,
        LinkId::HmiDown,
    ];
}

/// Gaussian delay of one link, milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub link_id: LinkId,
    pub delay_mean: f64,
    pub delay_std: f64,
    pub delay_p99: f64,
}

impl LinkModel {
    /// Measured delays of the testbed links.
    pub fn measured(link_id: LinkId) -> Self {
        let (delay_mean, delay_std, delay_p99) = match link_id {
            LinkId::VehicleUp | LinkId::VehicleDown => (1.33, 0.66, 2.86),
            LinkId::CameraUp | LinkId::FacilityDown => (4.23, 1.72, 8.23),
            LinkId::UnityUp | LinkId::UnityDown => (0.38, 1.17, 3.09),
            LinkId::HmiUp | LinkId::HmiDown => (0.36, 2.74, 6.74),
        };
        Self {
            link_id,
            delay_mean,
            delay_std,
            delay_p99,
        }
    }

    pub fn zero(link_id: LinkId) -> Self {
        Self {
            link_id,
            delay_mean: 0.0,
            delay_std: 0.0,
            delay_p99: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let ok = self.delay_mean.is_finite()
            && self.delay_std.is_finite()
            && self.delay_p99.is_finite()
            && self.delay_mean >= 0.0
            && self.delay_std >= 0.0
            && self.delay_p99 >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(NetError::InvalidLink(self.link_id))
        }
    }

    /// One delay sample in seconds.
    pub fn sample(&self, rng: &mut Stream) -> f64 {
        let ms = gaussian(rng, self.delay_mean, self.delay_std).clamp(0.0, 2.0 * self.delay_p99);
        ms / 1000.0
    }
}

/// All eight links at their measured delays.
pub fn measured_links() -> Vec<LinkModel> {
    LinkId::ALL.iter().map(|l| LinkModel::measured(*l)).collect()
}

pub fn zero_links() -> Vec<LinkModel> {
    LinkId::ALL.iter().map(|l| LinkModel::zero(*l)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum NetError {
    #[error("link {0:?} is not registered on this bus")]
    UnknownLink(LinkId),
    #[error("link {0:?} has a negative or non-finite delay parameter")]
    InvalidLink(LinkId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub seq: u64,
    pub sender_id: EntityId,
    pub recipient_id: EntityId,
    pub link: LinkId,
    pub send_time: f64,
    pub deliver_time: f64,
    pub payload: Message,
}

struct Queued(Envelope);

impl Queued {
    fn key(&self) -> (f64, &EntityId, u64) {
        (self.0.deliver_time, &self.0.sender_id, self.0.seq)
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        let (ta, sa, qa) = self.key();
        let (tb, sb, qb) = other.key();
        ta.total_cmp(&tb).then_with(|| sa.cmp(sb)).then_with(|| qa.cmp(&qb))
    }
}

/// The simulated network. Owned by a single loop; not thread-safe by design.
pub struct Bus {
    links: BTreeMap<LinkId, LinkModel>,
    rng: Stream,
    queue: BinaryHeap<Reverse<Queued>>,
    next_seq: BTreeMap<EntityId, u64>,
    last_delivery: BTreeMap<(EntityId, LinkId), f64>,
}

impl Bus {
    pub fn new(links: &[LinkModel], rng: Stream) -> Self {
        Self {
            links: links.iter().map(|l| (l.link_id, *l)).collect(),
            rng,
            queue: BinaryHeap::new(),
            next_seq: BTreeMap::new(),
            last_delivery: BTreeMap::new(),
        }
    }

    pub fn link(&self, id: LinkId) -> Option<&LinkModel> {
        self.links.get(&id)
    }

    /// Queues `msg` with a freshly sampled link delay.
    pub fn send(
        &mut self,
        link: LinkId,
        sender: &EntityId,
        recipient: &EntityId,
        msg: Message,
        t_now: f64,
    ) -> Result<Envelope, NetError> {
        let model = *self.links.get(&link).ok_or(NetError::UnknownLink(link))?;
        let delay = model.sample(&mut self.rng);
        Ok(self.send_with_delay(link, sender, recipient, msg, t_now, delay))
    }

    /// Queues `msg` with an explicit delay in seconds (negative treated as 0).
    pub fn send_with_delay(
        &mut self,
        link: LinkId,
        sender: &EntityId,
        recipient: &EntityId,
        msg: Message,
        t_now: f64,
        delay: f64,
    ) -> Envelope {
        let seq = self.next_seq.entry(sender.clone()).or_insert(0);
        let this_seq = *seq;
        *seq += 1;
        let mut deliver_time = t_now + delay.max(0.0);
        let last = self.last_delivery.entry((sender.clone(), link)).or_insert(f64::NEG_INFINITY);
        if deliver_time < *last {
            deliver_time = *last;
        }
        *last = deliver_time;
        let env = Envelope {
            seq: this_seq,
            sender_id: sender.clone(),
            recipient_id: recipient.clone(),
            link,
            send_time: t_now,
            deliver_time,
            payload: msg,
        };
        self.queue.push(Reverse(Queued(env.clone())));
        env
    }

    /// Removes and returns every envelope due by `t_now`, in delivery order.
    pub fn deliver_due(&mut self, t_now: f64) -> Vec<Envelope> {
        let mut out = Vec::new();
        while let Some(Reverse(top)) = self.queue.peek() {
            if top.0.deliver_time > t_now {
                break;
            }
            if let Some(Reverse(Queued(env))) = self.queue.pop() {
                out.push(env);
            }
        }
        out
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}

#[cfg(test)]
mod tests {
    extern crate std;
    use super::*;
    use crate::rng::{stream, Purpose};
    use proptest::prelude::*;
    use std::vec::Vec;

    fn tick(step: u64) -> Message {
        Message::Tick { t: step as f64, step }
    }

    fn bus(links: &[LinkModel]) -> Bus {
        Bus::new(links, stream(3, Purpose::Bus, 0))
    }

    #[test]
    fn deterministic_link_delay() {
        let link = LinkModel {
            delay_std: 0.0,
            ..LinkModel::measured(LinkId::VehicleUp)
        };
        let mut b = bus(&[link]);
        let e = b.send(LinkId::VehicleUp, &"a".into(), &"cloud".into(), tick(0), 2.0).unwrap();
        assert_eq!(e.deliver_time, 2.0 + 1.33 / 1000.0);
    }

    #[test]
    fn unknown_link() {
        let mut b = bus(&[LinkModel::zero(LinkId::VehicleUp)]);
        assert_eq!(
            b.send(LinkId::HmiUp, &"a".into(), &"b".into(), tick(0), 0.0),
            Err(NetError::UnknownLink(LinkId::HmiUp))
        );
    }

    #[test]
    fn measured_statistics() {
        let mut rng = stream(99, Purpose::Bus, 0);
        for link in [LinkId::VehicleUp, LinkId::CameraUp] {
            let m = LinkModel::measured(link);
            let xs: Vec<f64> = (0..7500).map(|_| m.sample(&mut rng) * 1000.0).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
            assert!((mean - m.delay_mean).abs() < 0.05 * m.delay_mean.max(1.0), "{link:?} {mean}");
            assert!((std / m.delay_std - 1.0).abs() < 0.1, "{link:?} {std}");
            assert!(xs.iter().all(|x| *x >= 0.0 && *x <= 2.0 * m.delay_p99));
        }
    }

    #[test]
    fn empty_bus_delivers_nothing() {
        let mut b = bus(&zero_links());
        assert!(b.deliver_due(1e9).is_empty());
    }

    #[test]
    fn priority_order() {
        let mut b = bus(&zero_links());
        for (who, d) in [("a", 0.005), ("b", 0.003), ("c", 0.004)] {
            b.send_with_delay(LinkId::VehicleUp, &who.into(), &"cloud".into(), tick(0), 0.0, d);
        }
        assert!(b.deliver_due(0.002).is_empty());
        let order: Vec<_> = b.deliver_due(0.01).into_iter().map(|e| e.sender_id.0).collect();
        assert_eq!(order, ["b", "c", "a"]);
    }

    #[test]
    fn same_time_same_sender_in_seq_order() {
        let mut b = bus(&zero_links());
        for k in 0..5 {
            b.send(LinkId::UnityUp, &"v4".into(), &"cloud".into(), tick(k), 1.0).unwrap();
        }
        let got: Vec<u64> = b.deliver_due(1.0).iter().map(|e| e.seq).collect();
        assert_eq!(got, [0, 1, 2, 3, 4]);
    }

    #[test]
    fn fifo_repair_example() {
        let mut b = bus(&zero_links());
        let first = b.send_with_delay(LinkId::VehicleUp, &"v1".into(), &"cloud".into(), tick(0), 0.0, 0.005);
        let second = b.send_with_delay(LinkId::VehicleUp, &"v1".into(), &"cloud".into(), tick(1), 0.001, 0.001);
        assert!(second.deliver_time >= first.deliver_time);
        let got: Vec<u64> = b.deliver_due(1.0).iter().map(|e| e.seq).collect();
        assert_eq!(got, [0, 1]);
    }

    #[test]
    fn fifo_repair_exhaustive_small_cases() {
        // every assignment of 4 delays out of 4 levels to 4 sends, 1 ms apart
        let levels = [0.0, 0.0005, 0.002, 0.006];
        for code in 0..(4usize.pow(4)) {
            let mut b = bus(&zero_links());
            let mut sent = Vec::new();
            for k in 0..4 {
                let d = levels[(code / 4usize.pow(k as u32)) % 4];
                let t = k as f64 * 0.001;
                let e = b.send_with_delay(LinkId::HmiUp, &"s".into(), &"c".into(), tick(k), t, d);
                // repair never makes a message earlier than its own sample
                assert!(e.deliver_time >= t + d);
                sent.push(e);
            }
            let got = b.deliver_due(1.0);
            let seqs: Vec<u64> = got.iter().map(|e| e.seq).collect();
            assert_eq!(seqs, [0, 1, 2, 3]);
            // repaired time equals the running maximum of raw arrival times
            let mut run = f64::NEG_INFINITY;
            for (k, e) in sent.iter().enumerate() {
                let raw = k as f64 * 0.001 + levels[(code / 4usize.pow(k as u32)) % 4];
                run = run.max(raw);
                assert_eq!(e.deliver_time, run);
            }
        }
    }

    proptest! {
        #[test]
        fn causality_and_per_sender_fifo(
            seed in any::<u64>(),
            traffic in proptest::collection::vec((0usize..3, 0usize..8, 0u32..50), 1..120),
        ) {
            let mut b = Bus::new(&measured_links(), stream(seed, Purpose::Bus, 0));
            let senders = ["a", "b", "c"];
            let mut t = 0.0;
            for (s, l, dt) in traffic {
                t += dt as f64 * 1e-4;
                b.send(LinkId::ALL[l], &senders[s].into(), &"x".into(), tick(0), t).unwrap();
            }
            let mut out = Vec::new();
            let mut now = 0.0;
            while !b.is_empty() {
                now += 0.0007;
                for e in b.deliver_due(now) {
                    prop_assert!(e.deliver_time >= e.send_time);
                    prop_assert!(e.deliver_time <= now);
                    out.push(e);
                }
            }
            for w in out.windows(2) {
                prop_assert!(w[0].deliver_time <= w[1].deliver_time);
            }
            for s in senders {
                for l in LinkId::ALL {
                    let seqs: Vec<u64> = out
                        .iter()
                        .filter(|e| e.sender_id.as_str() == s && e.link == l)
                        .map(|e| e.seq)
                        .collect();
                    prop_assert!(seqs.windows(2).all(|w| w[0] < w[1]));
                }
            }
        }
    }
}

//! Egress port with per-class queues and transmission selection.
//!
//! Selection precedence: a TT frame inside its own window, then the remaining
//! classes in the configured order (default RC, AVB A, AVB B, BE). Non-TT
//! frames never start inside a TT window and only start if they finish
//! before the next window opens.

use std::collections::{BTreeMap, VecDeque};

use crate::ethernet::bag::{bag_gate, BagState};
use crate::ethernet::cbs::{CbsPhase, CreditPoint, Shaper};
use crate::ethernet::frame::{AvbClass, ClassTag, EthFrame, QueueClass};
use crate::ethernet::tdma::PortSchedule;
use crate::ids::PortId;
use crate::time::SimTime;

pub const DEFAULT_QUEUE_CAPACITY: usize = 512;

pub const DEFAULT_CLASS_ORDER: [QueueClass; 4] =
    [QueueClass::Rc, QueueClass::AvbA, QueueClass::AvbB, QueueClass::Be];

#[derive(Debug, Clone)]
pub struct PortParams {
    pub rate: u64,
    pub capacity: usize,
    /// Idle slopes for AVB class A and B in bit/s.
    pub idle_slope: [u64; 2],
    pub class_order: Vec<QueueClass>,
    pub bags: BTreeMap<u32, SimTime>,
    pub rc_priority: BTreeMap<u32, u8>,
    pub record_credit: bool,
}

impl PortParams {
    pub fn new(rate: u64) -> Self {
        PortParams {
            rate,
            capacity: DEFAULT_QUEUE_CAPACITY,
            idle_slope: [0, 0],
            class_order: DEFAULT_CLASS_ORDER.to_vec(),
            bags: BTreeMap::new(),
            rc_priority: BTreeMap::new(),
            record_credit: false,
        }
    }
}

#[derive(Debug, Clone)]
struct Queued {
    frame: EthFrame,
    seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnqueueOutcome {
    pub class: QueueClass,
    pub accepted: bool,
    /// Occupancy of the class queue after the operation.
    pub occupancy: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartOutcome {
    Started { class: QueueClass, done: SimTime },
    /// Nothing may start now; retry at `wake` if given.
    Blocked { wake: Option<SimTime> },
    Busy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pick {
    Tt(u32),
    Rc(u32),
    Avb(usize),
    Be(usize),
}

#[derive(Debug, Clone)]
pub struct EgressPort {
    pub id: PortId,
    pub rate: u64,
    capacity: usize,
    schedule: PortSchedule,
    order: Vec<QueueClass>,
    tt: BTreeMap<u32, VecDeque<Queued>>,
    rc: BTreeMap<u32, VecDeque<Queued>>,
    bags: BTreeMap<u32, BagState>,
    rc_priority: BTreeMap<u32, u8>,
    avb: [VecDeque<Queued>; 2],
    shapers: [Shaper; 2],
    be: [VecDeque<Queued>; 8],
    occupancy: [usize; 5],
    drops: [u64; 5],
    in_flight: Option<(QueueClass, EthFrame)>,
    busy_until: SimTime,
    seq: u64,
}

impl EgressPort {
    pub fn new(id: PortId, params: PortParams, schedule: PortSchedule) -> Self {
        assert!(params.rate > 0);
        let bags = params
            .bags
            .iter()
            .map(|(&vl, &bag)| (vl, BagState::new(vl, bag)))
            .collect();
        EgressPort {
            id,
            rate: params.rate,
            capacity: params.capacity,
            schedule,
            order: params.class_order,
            tt: BTreeMap::new(),
            rc: BTreeMap::new(),
            bags,
            rc_priority: params.rc_priority,
            avb: Default::default(),
            shapers: [
                Shaper::new(params.idle_slope[0], params.rate, params.record_credit),
                Shaper::new(params.idle_slope[1], params.rate, params.record_credit),
            ],
            be: Default::default(),
            occupancy: [0; 5],
            drops: [0; 5],
            in_flight: None,
            busy_until: SimTime::ZERO,
            seq: 0,
        }
    }

    pub fn schedule(&self) -> &PortSchedule {
        &self.schedule
    }

    pub fn occupancy(&self, class: QueueClass) -> usize {
        self.occupancy[class.index()]
    }

    pub fn drops(&self, class: QueueClass) -> u64 {
        self.drops[class.index()]
    }

    pub fn is_busy(&self) -> bool {
        self.in_flight.is_some()
    }

    pub fn credit_trace(&self, class: AvbClass) -> Option<&[CreditPoint]> {
        self.shapers[class.index()].trace.as_deref()
    }

    pub fn shaper(&self, class: AvbClass) -> &Shaper {
        &self.shapers[class.index()]
    }

    pub fn frame_duration(&self, frame: &EthFrame) -> SimTime {
        SimTime::for_bits(frame.wire_bits(), self.rate)
    }

    pub fn enqueue(&mut self, now: SimTime, frame: EthFrame) -> EnqueueOutcome {
        let class = frame.class.queue_class();
        let ci = class.index();
        if self.occupancy[ci] >= self.capacity {
            self.drops[ci] += 1;
            return EnqueueOutcome { class, accepted: false, occupancy: self.occupancy[ci] };
        }
        let item = Queued { frame, seq: self.seq };
        self.seq += 1;
        match item.frame.class {
            ClassTag::Tt { ct_id } => self.tt.entry(ct_id).or_default().push_back(item),
            ClassTag::Rc { vl_id } => self.rc.entry(vl_id).or_default().push_back(item),
            ClassTag::Avb { class: c, .. } => {
                let i = c.index();
                self.avb[i].push_back(item);
                let transmitting = matches!(&self.in_flight, Some((q, _)) if *q == class);
                if !transmitting && self.shapers[i].phase == CbsPhase::QueueEmpty {
                    self.shapers[i].set_phase(now, CbsPhase::IdleWaiting);
                }
            }
            ClassTag::Be { priority } => self.be[priority.min(7) as usize].push_back(item),
        }
        self.occupancy[ci] += 1;
        EnqueueOutcome { class, accepted: true, occupancy: self.occupancy[ci] }
    }

    /// Picks and starts the next frame if the link is idle.
    pub fn try_start(&mut self, now: SimTime) -> StartOutcome {
        if self.in_flight.is_some() {
            return StartOutcome::Busy;
        }
        let mut wake: Option<SimTime> = None;
        let mut note = |t: SimTime| {
            if t > now {
                wake = Some(wake.map_or(t, |w: SimTime| w.min(t)));
            }
        };

        let mut pick = None;
        let active = self.schedule.active(now);
        if let Some(w) = active {
            // TT frames leave exactly at their window start; a frame that
            // misses it waits for the next instance.
            if w.start == now && self.tt.get(&w.ct_id).is_some_and(|q| !q.is_empty()) {
                pick = Some(Pick::Tt(w.ct_id));
            }
        }
        for (&ct, q) in &self.tt {
            if !q.is_empty() {
                if let Some(t) = self.schedule.next_start_for(ct, now) {
                    note(t);
                }
            }
        }

        if pick.is_none() {
            // Reserved window: nothing else may start inside it.
            let guard_limit = match active {
                Some(w) => {
                    note(w.end);
                    None
                }
                None => Some(self.schedule.next_start(now)),
            };
            if let Some(next_window) = guard_limit {
                let fits = |frame: &EthFrame| match next_window {
                    Some(w) => now + SimTime::for_bits(frame.wire_bits(), self.rate) <= w.start,
                    None => true,
                };
                let mut guard_blocked = false;
                for class in self.order.clone() {
                    match class {
                        QueueClass::Tt => {}
                        QueueClass::Rc => {
                            let mut best: Option<(u8, u64, u32)> = None;
                            for (&vl, q) in &self.rc {
                                let Some(head) = q.front() else { continue };
                                let gate = self.bags.get(&vl).map_or(now, |b| bag_gate(b, now));
                                if gate > now {
                                    note(gate);
                                    continue;
                                }
                                if !fits(&head.frame) {
                                    guard_blocked = true;
                                    continue;
                                }
                                let key = (self.rc_priority.get(&vl).copied().unwrap_or(0), head.seq, vl);
                                if best.is_none_or(|b| key < b) {
                                    best = Some(key);
                                }
                            }
                            if let Some((_, _, vl)) = best {
                                pick = Some(Pick::Rc(vl));
                            }
                        }
                        QueueClass::AvbA | QueueClass::AvbB => {
                            let i = if class == QueueClass::AvbA { 0 } else { 1 };
                            let Some(head) = self.avb[i].front() else { continue };
                            if self.shapers[i].credit_at(now) < 0 {
                                if let Some(t) = self.shapers[i].eligible_at(now) {
                                    note(t);
                                }
                                continue;
                            }
                            if !fits(&head.frame) {
                                guard_blocked = true;
                                continue;
                            }
                            pick = Some(Pick::Avb(i));
                        }
                        QueueClass::Be => {
                            for p in (0..8).rev() {
                                if let Some(head) = self.be[p].front() {
                                    if fits(&head.frame) {
                                        pick = Some(Pick::Be(p));
                                        break;
                                    }
                                    guard_blocked = true;
                                }
                            }
                        }
                    }
                    if pick.is_some() {
                        break;
                    }
                }
                if pick.is_none() && guard_blocked {
                    if let Some(w) = next_window {
                        note(w.end);
                    }
                }
            }
        }

        let Some(pick) = pick else {
            return StartOutcome::Blocked { wake };
        };
        let item = match pick {
            Pick::Tt(ct) => self.tt.get_mut(&ct).and_then(VecDeque::pop_front),
            Pick::Rc(vl) => {
                if let Some(b) = self.bags.get_mut(&vl) {
                    b.depart(now);
                }
                self.rc.get_mut(&vl).and_then(VecDeque::pop_front)
            }
            Pick::Avb(i) => {
                let f = self.avb[i].pop_front();
                self.shapers[i].set_phase(now, CbsPhase::Transmitting);
                f
            }
            Pick::Be(p) => self.be[p].pop_front(),
        }
        .expect("picked queue has a head");
        let class = item.frame.class.queue_class();
        self.occupancy[class.index()] -= 1;
        let done = now + self.frame_duration(&item.frame);
        self.busy_until = done;
        self.in_flight = Some((class, item.frame));
        StartOutcome::Started { class, done }
    }

    /// Completes the frame on the wire.
    pub fn finish(&mut self, now: SimTime) -> (QueueClass, EthFrame) {
        let (class, frame) = self.in_flight.take().expect("no frame in flight");
        if let ClassTag::Avb { class: c, .. } = frame.class {
            let i = c.index();
            let next = if self.avb[i].is_empty() {
                CbsPhase::QueueEmpty
            } else {
                CbsPhase::IdleWaiting
            };
            self.shapers[i].set_phase(now, next);
        }
        (class, frame)
    }

    /// Brings shaper state up to `now`; used before reading traces at the end of a run.
    pub fn settle(&mut self, now: SimTime) {
        for s in &mut self.shapers {
            s.advance(now);
        }
    }

    pub fn in_flight(&self) -> Option<&EthFrame> {
        self.in_flight.as_ref().map(|(_, f)| f)
    }

    pub fn in_flight_class(&self) -> Option<QueueClass> {
        self.in_flight.as_ref().map(|(c, _)| *c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ethernet::frame::Destination;
    use crate::ethernet::tdma::PortWindow;
    use crate::ids::DeviceId;

    const RATE: u64 = 100_000_000;

    fn frame(class: ClassTag, len: u32) -> EthFrame {
        EthFrame::new(DeviceId(0), Destination::Unicast(DeviceId(1)), len, class, SimTime::ZERO).unwrap()
    }

    fn tt_sched() -> PortSchedule {
        PortSchedule {
            cycle: SimTime::from_ms(1),
            windows: vec![PortWindow { ct_id: 5, offset: SimTime::ZERO, duration: SimTime::from_ns(6720) }],
        }
    }

    fn params() -> PortParams {
        let mut p = PortParams::new(RATE);
        p.idle_slope = [25_000_000, 10_000_000];
        p.record_credit = true;
        p
    }

    #[test]
    fn tt_wins_inside_its_window() {
        let mut port = EgressPort::new(PortId(0), params(), tt_sched());
        port.enqueue(SimTime::ZERO, frame(ClassTag::Be { priority: 7 }, 46));
        port.enqueue(SimTime::ZERO, frame(ClassTag::Avb { class: AvbClass::A, stream_id: 1 }, 46));
        port.enqueue(SimTime::ZERO, frame(ClassTag::Tt { ct_id: 5 }, 46));
        match port.try_start(SimTime::ZERO) {
            StartOutcome::Started { class, done } => {
                assert_eq!(class, QueueClass::Tt);
                assert_eq!(done, SimTime::from_ns(6720));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_credit_lets_best_effort_through() {
        let mut port = EgressPort::new(PortId(0), params(), PortSchedule::default());
        let avb = ClassTag::Avb { class: AvbClass::A, stream_id: 1 };
        port.enqueue(SimTime::ZERO, frame(avb, 46));
        port.enqueue(SimTime::ZERO, frame(avb, 46));
        assert!(matches!(port.try_start(SimTime::ZERO), StartOutcome::Started { class: QueueClass::AvbA, .. }));
        let t = SimTime::from_ns(6720);
        port.finish(t);
        // credit now -504 bits; BE goes first
        port.enqueue(t, frame(ClassTag::Be { priority: 0 }, 46));
        assert!(matches!(port.try_start(t), StartOutcome::Started { class: QueueClass::Be, .. }));
        let t2 = t + SimTime::from_ns(6720);
        port.finish(t2);
        match port.try_start(t2) {
            StartOutcome::Blocked { wake: Some(w) } => assert_eq!(w, t + SimTime::from_ns(20_160)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_port_is_blocked_without_wake() {
        let mut port = EgressPort::new(PortId(0), params(), PortSchedule::default());
        assert_eq!(port.try_start(SimTime::ZERO), StartOutcome::Blocked { wake: None });
    }

    #[test]
    fn guard_band_withholds_long_frames() {
        let sched = PortSchedule {
            cycle: SimTime::from_ms(1),
            windows: vec![PortWindow { ct_id: 5, offset: SimTime::from_us(100), duration: SimTime::from_us(10) }],
        };
        let mut port = EgressPort::new(PortId(0), params(), sched);
        // 1500 B needs 123.04 us, does not fit before the window at 100 us
        port.enqueue(SimTime::ZERO, frame(ClassTag::Be { priority: 0 }, 1500));
        assert_eq!(
            port.try_start(SimTime::ZERO),
            StartOutcome::Blocked { wake: Some(SimTime::from_us(110)) }
        );
        // a short one fits
        port.enqueue(SimTime::ZERO, frame(ClassTag::Be { priority: 3 }, 46));
        assert!(matches!(port.try_start(SimTime::ZERO), StartOutcome::Started { .. }));
        port.finish(SimTime::from_ns(6720));
        // inside the (empty) window nothing starts
        assert_eq!(
            port.try_start(SimTime::from_us(105)),
            StartOutcome::Blocked { wake: Some(SimTime::from_us(110)) }
        );
        assert!(matches!(port.try_start(SimTime::from_us(110)), StartOutcome::Started { .. }));
    }

    #[test]
    fn bag_spaces_departures() {
        let mut p = params();
        p.bags.insert(3, SimTime::from_us(500));
        let mut port = EgressPort::new(PortId(0), p, PortSchedule::default());
        port.enqueue(SimTime::ZERO, frame(ClassTag::Rc { vl_id: 3 }, 46));
        port.enqueue(SimTime::ZERO, frame(ClassTag::Rc { vl_id: 3 }, 46));
        assert!(matches!(port.try_start(SimTime::ZERO), StartOutcome::Started { .. }));
        port.finish(SimTime::from_ns(6720));
        assert_eq!(
            port.try_start(SimTime::from_us(100)),
            StartOutcome::Blocked { wake: Some(SimTime::from_us(500)) }
        );
    }

    #[test]
    fn overflow_counts_drops() {
        let mut p = params();
        p.capacity = 2;
        let mut port = EgressPort::new(PortId(0), p, PortSchedule::default());
        let be = ClassTag::Be { priority: 0 };
        assert_eq!(port.enqueue(SimTime::ZERO, frame(be, 46)).occupancy, 1);
        assert_eq!(port.enqueue(SimTime::ZERO, frame(be, 46)).occupancy, 2);
        let o = port.enqueue(SimTime::ZERO, frame(be, 46));
        assert!(!o.accepted);
        assert_eq!(o.occupancy, 2);
        assert_eq!(port.drops(QueueClass::Be), 1);
    }

    #[test]
    fn rc_is_fifo_across_virtual_links() {
        let mut port = EgressPort::new(PortId(0), params(), PortSchedule::default());
        let mut a = frame(ClassTag::Rc { vl_id: 9 }, 46);
        a.message = Some((crate::ids::MessageId(0), 0));
        port.enqueue(SimTime::ZERO, a);
        port.enqueue(SimTime::ZERO, frame(ClassTag::Rc { vl_id: 2 }, 46));
        port.try_start(SimTime::ZERO);
        let (_, f) = port.finish(SimTime::from_ns(6720));
        assert_eq!(f.class, ClassTag::Rc { vl_id: 9 });
    }
}

use serde::{Deserialize, Serialize};

use crate::time::SimTime;

/// Bandwidth allocation gap bookkeeping for one virtual link on one port.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagState {
    pub vl_id: u32,
    pub bag: SimTime,
    pub last_departure: Option<SimTime>,
}

impl BagState {
    pub fn new(vl_id: u32, bag: SimTime) -> Self {
        assert!(bag > SimTime::ZERO, "BAG must be positive");
        BagState { vl_id, bag, last_departure: None }
    }

    pub fn depart(&mut self, now: SimTime) {
        self.last_departure = Some(now);
    }
}

/// Earliest time a frame of this virtual link may leave.
pub fn bag_gate(state: &BagState, now: SimTime) -> SimTime {
    match state.last_departure {
        None => now,
        Some(last) => now.max(last + state.bag),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_examples() {
        let mut s = BagState::new(7, SimTime::from_us(500));
        assert_eq!(bag_gate(&s, SimTime::from_us(3)), SimTime::from_us(3));
        s.depart(SimTime::ZERO);
        assert_eq!(bag_gate(&s, SimTime::from_us(100)), SimTime::from_us(500));
        assert_eq!(bag_gate(&s, SimTime::from_us(600)), SimTime::from_us(600));
    }
}

//! Slot schedulers: drift-plus-penalty power control (DPC) and the
//! largest-debt-first (LDF) baseline.

mod dpc;
mod ldf;

pub use dpc::{dpc_decide, dpc_objective, DpcState};
pub use ldf::{ldf_decide, LdfState};

use crate::error::Result;
use crate::model::{Action, ChannelState, DeadlineQueue, PowerLevels, UserSpec};

/// Everything a scheduler may observe at decision time.
#[derive(Debug, Clone, Copy)]
pub struct SlotView<'a> {
    pub specs: &'a [UserSpec],
    pub levels: &'a PowerLevels,
    pub channels: &'a ChannelState,
    /// `Some` exactly for deadline users.
    pub queues: &'a [Option<DeadlineQueue>],
}

impl SlotView<'_> {
    pub fn head_ttl(&self, user: usize) -> Option<u32> {
        self.queues.get(user)?.as_ref()?.head_ttl()
    }
}

pub trait Scheduler: Send {
    fn name(&self) -> &'static str;

    fn decide(&self, view: &SlotView<'_>) -> Result<Action>;

    /// Advances internal state after `action` was executed in the slot
    /// described by `view`.
    fn update(&mut self, view: &SlotView<'_>, action: &Action);

    /// Virtual power queue of `user`, if the scheduler keeps one.
    fn power_queue(&self, user: usize) -> Option<f64>;

    /// Secondary per-user state: the throughput queue for DPC, the debt for
    /// LDF.
    fn aux(&self, user: usize) -> Option<f64>;

    /// Sum of all virtual queue backlogs, if the scheduler keeps any.
    fn backlog(&self) -> Option<f64>;
}

/// Per-slot urgency penalty of a deadline queue. Zero if the head packet is
/// served or the queue is empty; otherwise grows linearly as the head packet
/// approaches expiry and reaches one on its last servable slot.
pub fn urgency_cost(head_ttl: Option<u32>, deadline: u32, served: bool) -> f64 {
    match head_ttl {
        Some(ttl) if !served => {
            let m = f64::from(deadline);
            (m - (f64::from(ttl) - 1.0)) / m
        }
        _ => 0.0,
    }
}

/// Total urgency `sum_r f_r(t)` induced by `action`.
pub fn slot_urgency(view: &SlotView<'_>, action: &Action) -> f64 {
    view.specs
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let m = s.deadline_slots()?;
            Some(urgency_cost(view.head_ttl(i), m, action.serves(i)))
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn urgency_values() {
        assert_eq!(urgency_cost(Some(5), 10, true), 0.0);
        assert_eq!(urgency_cost(None, 10, false), 0.0);
        assert_eq!(urgency_cost(Some(1), 10, false), 1.0);
        assert!((urgency_cost(Some(10), 10, false) - 0.1).abs() < 1e-15);
        assert!((urgency_cost(Some(3), 10, false) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn urgency_stays_in_unit_interval() {
        for m in 1..=40 {
            for ttl in 1..=m {
                let f = urgency_cost(Some(ttl), m, false);
                assert!(f > 0.0 && f <= 1.0);
                assert_eq!(f == 1.0, ttl == 1);
            }
        }
    }
}

use serde::{Deserialize, Serialize};

use super::{Scheduler, SlotView};
use crate::error::{Error, Result};
use crate::model::{Action, UserSpec};

/// Throughput debts of the largest-debt-first baseline.
///
/// Each slot, user `i`'s debt grows by its target rate `q_i` and shrinks by
/// one when it is served. Deadline users target their arrival rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdfState {
    y: Vec<f64>,
    q: Vec<f64>,
    t: u64,
}

impl LdfState {
    pub fn new(specs: &[UserSpec]) -> Self {
        let q: Vec<f64> = specs
            .iter()
            .map(|s| {
                if s.is_deadline() {
                    s.arrival_prob()
                } else {
                    s.delta()
                }
            })
            .collect();
        Self {
            y: vec![0.0; q.len()],
            q,
            t: 0,
        }
    }

    /// Starts from explicit debts instead of zero.
    pub fn with_debts(specs: &[UserSpec], y: Vec<f64>) -> Result<Self> {
        let mut s = Self::new(specs);
        if y.len() != s.y.len() {
            return Err(Error::Config {
                field: "y",
                reason: "must have one entry per user".into(),
            });
        }
        s.y = y;
        Ok(s)
    }

    pub fn debts(&self) -> &[f64] {
        &self.y
    }

    pub fn targets(&self) -> &[f64] {
        &self.q
    }

    pub fn slots(&self) -> u64 {
        self.t
    }

    /// `y_i <- y_i + q_i - mu_i` for every user.
    pub fn apply(&mut self, served: &[bool]) {
        for ((y, q), &mu) in self.y.iter_mut().zip(&self.q).zip(served) {
            *y += q - if mu { 1.0 } else { 0.0 };
        }
        self.t += 1;
    }
}

/// Serves the eligible user with the largest positive debt (lowest index on
/// ties) at the power its channel requires. Throughput users are always
/// eligible, deadline users only with a non-empty queue. Idles when no
/// eligible user carries positive debt.
pub fn ldf_decide(state: &LdfState, view: &SlotView<'_>) -> Action {
    let mut best: Option<(usize, f64)> = None;
    for (i, spec) in view.specs.iter().enumerate() {
        let eligible = spec.is_throughput() || view.head_ttl(i).is_some();
        if !eligible {
            continue;
        }
        let y = state.y[i];
        if y > 0.0 && best.is_none_or(|(_, b)| y > b) {
            best = Some((i, y));
        }
    }
    match best {
        Some((user, _)) => Action::Serve {
            user,
            power: view.levels.required(view.channels.0[user]),
        },
        None => Action::Idle,
    }
}

impl Scheduler for LdfState {
    fn name(&self) -> &'static str {
        "ldf"
    }

    fn decide(&self, view: &SlotView<'_>) -> Result<Action> {
        Ok(ldf_decide(self, view))
    }

    fn update(&mut self, view: &SlotView<'_>, action: &Action) {
        let served: Vec<bool> = (0..view.specs.len()).map(|i| action.serves(i)).collect();
        self.apply(&served);
    }

    fn power_queue(&self, _user: usize) -> Option<f64> {
        None
    }

    fn aux(&self, user: usize) -> Option<f64> {
        self.y.get(user).copied()
    }

    fn backlog(&self) -> Option<f64> {
        None
    }
}

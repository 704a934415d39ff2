use serde::{Deserialize, Serialize};

use super::{urgency_cost, Scheduler, SlotView};
use crate::error::{Error, Result};
use crate::model::{candidate_actions, check_action, Action, UserSpec};

/// Virtual queues of the drift-plus-penalty controller.
///
/// `x[i]` tracks the excess of user `i`'s power over its budget and `z[u]`
/// the shortfall of throughput user `u` below its target (always zero for
/// deadline users). `v` weighs the urgency penalty against the queues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpcState {
    x: Vec<f64>,
    z: Vec<f64>,
    v: f64,
}

impl DpcState {
    pub fn new(users: usize, v: f64) -> Result<Self> {
        Self::with_queues(vec![0.0; users], vec![0.0; users], v)
    }

    pub fn with_queues(x: Vec<f64>, z: Vec<f64>, v: f64) -> Result<Self> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config {
                field: "v",
                reason: format!("must be positive and finite, got {v}"),
            });
        }
        if x.len() != z.len() {
            return Err(Error::Config {
                field: "z",
                reason: "must have one entry per user".into(),
            });
        }
        if x.iter().chain(&z).any(|q| q.is_nan() || *q < 0.0) {
            return Err(Error::Config {
                field: "x",
                reason: "virtual queues must be nonnegative".into(),
            });
        }
        Ok(Self { x, z, v })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    /// `X_i <- max(X_i - gamma_i, 0) + p_i` and
    /// `Z_u <- max(Z_u - mu_u, 0) + delta_u`.
    pub fn apply(&mut self, specs: &[UserSpec], action: &Action) {
        for (i, spec) in specs.iter().enumerate() {
            self.x[i] = (self.x[i] - spec.gamma).max(0.0) + action.power_of(i);
            if spec.is_throughput() {
                let mu = if action.serves(i) { 1.0 } else { 0.0 };
                self.z[i] = (self.z[i] - mu).max(0.0) + spec.delta();
            }
        }
    }
}

/// Per-slot drift-plus-penalty objective of `action`:
/// `sum_i X_i (p_i - gamma_i) + sum_u Z_u (delta_u - mu_u) + V sum_r f_r`.
pub fn dpc_objective(action: &Action, state: &DpcState, view: &SlotView<'_>) -> Result<f64> {
    check_action(action, view.channels, view.levels, view.queues)?;
    let mut power_term = 0.0;
    let mut throughput_term = 0.0;
    let mut urgency = 0.0;
    for (i, spec) in view.specs.iter().enumerate() {
        power_term += state.x[i] * (action.power_of(i) - spec.gamma);
        if spec.is_throughput() {
            let mu = if action.serves(i) { 1.0 } else { 0.0 };
            throughput_term += state.z[i] * (spec.delta() - mu);
        }
        if let Some(m) = spec.deadline_slots() {
            urgency += urgency_cost(view.head_ttl(i), m, action.serves(i));
        }
    }
    Ok(power_term + throughput_term + state.v * urgency)
}

/// First candidate (in `candidate_actions` order) with the smallest
/// objective, together with that objective.
pub fn dpc_decide(state: &DpcState, view: &SlotView<'_>) -> Result<(Action, f64)> {
    let mut best = (Action::Idle, f64::INFINITY);
    for action in candidate_actions(view.channels, view.levels, view.queues) {
        let obj = dpc_objective(&action, state, view)?;
        if obj < best.1 {
            best = (action, obj);
        }
    }
    Ok(best)
}

impl Scheduler for DpcState {
    fn name(&self) -> &'static str {
        "dpc"
    }

    fn decide(&self, view: &SlotView<'_>) -> Result<Action> {
        dpc_decide(self, view).map(|(a, _)| a)
    }

    fn update(&mut self, view: &SlotView<'_>, action: &Action) {
        self.apply(view.specs, action);
    }

    fn power_queue(&self, user: usize) -> Option<f64> {
        self.x.get(user).copied()
    }

    fn aux(&self, user: usize) -> Option<f64> {
        Some(self.z[user])
    }

    fn backlog(&self) -> Option<f64> {
        Some(self.x.iter().sum::<f64>() + self.z.iter().sum::<f64>())
    }
}

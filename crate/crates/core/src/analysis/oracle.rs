//! Clairvoyant offline search over tiny instances.
//!
//! Given the full realized sample path, finds the action sequence with the
//! smallest total urgency `sum_t sum_r f_r(t)` subject to finite-horizon
//! budgets: `sum_t p_i(t) <= gamma_i T` and `sum_t mu_u(t) >= floor(delta_u T)`.
//! Slot dynamics are exactly those of the simulator, so the optimum
//! lower-bounds the realized cost of any causal policy on the same path that
//! meets the same budgets.

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::model::{candidate_actions, Action, DeadlineQueue, PowerLevels, UserSpec};
use crate::scheduler::{slot_urgency, Scheduler, SlotView};
use crate::sim::SamplePath;

pub const MAX_USERS: usize = 3;
pub const MAX_SLOTS: usize = 14;

/// Slack allowed when comparing accumulated energy against `gamma_i T`.
const ENERGY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    Optimal { cost: f64, schedule: Vec<Action> },
    Infeasible,
}

impl OracleOutcome {
    pub fn cost(&self) -> Option<f64> {
        match self {
            OracleOutcome::Optimal { cost, .. } => Some(*cost),
            OracleOutcome::Infeasible => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Budgets {
    pub energy_cap: Vec<f64>,
    pub min_services: Vec<u64>,
}

impl Budgets {
    pub fn new(specs: &[UserSpec], slots: usize) -> Self {
        let t = slots as f64;
        Self {
            energy_cap: specs.iter().map(|s| s.gamma * t).collect(),
            min_services: specs
                .iter()
                .map(|s| {
                    if s.is_throughput() {
                        (s.delta() * t).floor() as u64
                    } else {
                        0
                    }
                })
                .collect(),
        }
    }

    pub fn satisfied_by(&self, energy: &[f64], services: &[u64]) -> bool {
        energy
            .iter()
            .zip(&self.energy_cap)
            .all(|(e, cap)| *e <= cap + ENERGY_EPS)
            && services
                .iter()
                .zip(&self.min_services)
                .all(|(s, need)| s >= need)
    }

    fn deficit(&self, services: &[u64]) -> u64 {
        services
            .iter()
            .zip(&self.min_services)
            .map(|(s, need)| need.saturating_sub(*s))
            .sum()
    }
}

#[derive(Clone)]
struct Node {
    queues: Vec<Option<DeadlineQueue>>,
    energy: Vec<f64>,
    services: Vec<u64>,
    cost: f64,
}

struct Search<'a> {
    specs: &'a [UserSpec],
    levels: &'a PowerLevels,
    path: &'a SamplePath,
    budgets: Budgets,
    prune: bool,
}

type Best = Option<(f64, Vec<Action>)>;

impl Search<'_> {
    fn root(&self) -> Node {
        let n = self.specs.len();
        Node {
            queues: self
                .specs
                .iter()
                .map(|s| s.deadline_slots().map(DeadlineQueue::new))
                .collect(),
            energy: vec![0.0; n],
            services: vec![0; n],
            cost: 0.0,
        }
    }

    fn horizon(&self) -> usize {
        self.path.len()
    }

    fn candidates(&self, t: usize, node: &Node) -> Vec<Action> {
        candidate_actions(&self.path.channels[t], self.levels, &node.queues)
    }

    /// Applies `action` in slot `t`. Returns `None` if the child is pruned.
    fn child(&self, t: usize, node: &Node, action: &Action, best: &Best) -> Option<Node> {
        let view = SlotView {
            specs: self.specs,
            levels: self.levels,
            channels: &self.path.channels[t],
            queues: &node.queues,
        };
        let cost = node.cost + slot_urgency(&view, action);
        let mut energy = node.energy.clone();
        let mut services = node.services.clone();
        if let Action::Serve { user, power } = *action {
            energy[user] += power;
            services[user] += 1;
        }
        if self.prune {
            let remaining = (self.horizon() - t - 1) as u64;
            let over_budget = energy
                .iter()
                .zip(&self.budgets.energy_cap)
                .any(|(e, cap)| *e > cap + ENERGY_EPS);
            let hopeless = self.budgets.deficit(&services) > remaining;
            let dominated = best.as_ref().is_some_and(|(b, _)| cost >= *b);
            if over_budget || hopeless || dominated {
                return None;
            }
        }
        let mut queues = node.queues.clone();
        let arrivals = &self.path.arrivals[t];
        for (i, q) in queues.iter_mut().enumerate() {
            if let Some(q) = q {
                q.advance(action.serves(i), arrivals[i]).ok()?;
            }
        }
        Some(Node {
            queues,
            energy,
            services,
            cost,
        })
    }

    fn dfs(&self, t: usize, node: &Node, prefix: &mut Vec<Action>, best: &mut Best) {
        if t == self.horizon() {
            let improves = best.as_ref().is_none_or(|(b, _)| node.cost < *b);
            if improves && self.budgets.satisfied_by(&node.energy, &node.services) {
                *best = Some((node.cost, prefix.clone()));
            }
            return;
        }
        for action in self.candidates(t, node) {
            if let Some(child) = self.child(t, node, &action, best) {
                prefix.push(action);
                self.dfs(t + 1, &child, prefix, best);
                prefix.pop();
            }
        }
    }

    fn solve(&self, split_first_slot: bool) -> OracleOutcome {
        let root = self.root();
        let best = if split_first_slot && self.horizon() > 0 {
            self.solve_split(&root)
        } else {
            let mut best = None;
            self.dfs(0, &root, &mut Vec::new(), &mut best);
            best
        };
        match best {
            Some((cost, schedule)) => OracleOutcome::Optimal { cost, schedule },
            None => OracleOutcome::Infeasible,
        }
    }

    /// Searches each first-slot subtree independently, then keeps the
    /// cheapest, earliest subtree on ties.
    fn solve_split(&self, root: &Node) -> Best {
        let firsts = self.candidates(0, root);
        let subtree = |action: &Action| -> Best {
            let child = self.child(0, root, action, &None)?;
            let mut best = None;
            let mut prefix = vec![*action];
            self.dfs(1, &child, &mut prefix, &mut best);
            best
        };
        #[cfg(feature = "parallel")]
        let results: Vec<Best> = {
            use rayon::prelude::*;
            firsts.par_iter().map(subtree).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let results: Vec<Best> = firsts.iter().map(subtree).collect();

        results
            .into_iter()
            .flatten()
            .fold(None, |acc: Best, cand| match acc {
                Some(a) if a.0 <= cand.0 => Some(a),
                _ => Some(cand),
            })
    }
}

fn check_size(specs: &[UserSpec], path: &SamplePath) -> Result<()> {
    if specs.len() > MAX_USERS || path.len() > MAX_SLOTS {
        return Err(Error::OracleTooLarge {
            users: specs.len(),
            slots: path.len(),
        });
    }
    let shape_ok = path.channels.iter().all(|c| c.len() == specs.len())
        && path.arrivals.len() == path.len()
        && path.arrivals.iter().all(|a| a.len() == specs.len());
    if !shape_ok {
        return Err(Error::PathShape {
            path: path.channels.first().map_or(0, |c| c.len()),
            users: specs.len(),
        });
    }
    Ok(())
}

fn search<'a>(
    specs: &'a [UserSpec],
    levels: &'a PowerLevels,
    path: &'a SamplePath,
    prune: bool,
) -> Result<Search<'a>> {
    check_size(specs, path)?;
    Ok(Search {
        specs,
        levels,
        path,
        budgets: Budgets::new(specs, path.len()),
        prune,
    })
}

/// Branch-and-bound minimum of the realized total urgency. First-slot
/// subtrees are searched in parallel when the `parallel` feature is on.
pub fn offline_oracle(
    specs: &[UserSpec],
    levels: &PowerLevels,
    path: &SamplePath,
) -> Result<OracleOutcome> {
    Ok(search(specs, levels, path, true)?.solve(true))
}

/// Plain enumeration of every action sequence, no pruning.
pub fn exhaustive_oracle(
    specs: &[UserSpec],
    levels: &PowerLevels,
    path: &SamplePath,
) -> Result<OracleOutcome> {
    Ok(search(specs, levels, path, false)?.solve(false))
}

/// Plays back a fixed action sequence, one action per slot, then idles.
pub struct ScriptedScheduler {
    actions: Vec<Action>,
    next: Cell<usize>,
}

impl ScriptedScheduler {
    pub fn new(actions: Vec<Action>) -> Self {
        Self {
            actions,
            next: Cell::new(0),
        }
    }
}

impl Scheduler for ScriptedScheduler {
    fn name(&self) -> &'static str {
        "scripted"
    }

    fn decide(&self, _view: &SlotView<'_>) -> Result<Action> {
        Ok(self
            .actions
            .get(self.next.get())
            .copied()
            .unwrap_or(Action::Idle))
    }

    fn update(&mut self, _view: &SlotView<'_>, _action: &Action) {
        self.next.set(self.next.get() + 1);
    }

    fn power_queue(&self, _user: usize) -> Option<f64> {
        None
    }

    fn aux(&self, _user: usize) -> Option<f64> {
        None
    }

    fn backlog(&self) -> Option<f64> {
        None
    }
}

//! Diagnostics tied to the performance guarantees of the drift-plus-penalty
//! controller: the drift constant `B`, the quadratic Lyapunov function,
//! bound reports, and a clairvoyant offline oracle for tiny instances.

pub mod oracle;

use serde::{Deserialize, Serialize};

pub use oracle::{
    exhaustive_oracle, offline_oracle, Budgets, OracleOutcome, ScriptedScheduler, MAX_SLOTS,
    MAX_USERS,
};

use crate::error::Result;
use crate::model::{PowerLevels, UserSpec};
use crate::rng::{stream, StreamTag};
use crate::scheduler::DpcState;
use crate::sim::{ExperimentConfig, RunResult, SamplePath};

/// Allowed growth of the late-horizon backlog mean over the second-quarter
/// mean before the run counts as not settling.
pub const STABILITY_SLACK: f64 = 0.10;

/// Worst-case constant bounding the second-moment terms of the drift:
/// `B = (N+1) P_high^2 / 2 + (R+1)/2 + (R+1)/2`.
pub fn bound_b(users: &[UserSpec], levels: &PowerLevels) -> f64 {
    let n = users.len() as f64;
    let r = users.iter().filter(|u| u.is_deadline()).count() as f64;
    0.5 * (n + 1.0) * levels.p_high().powi(2) + 0.5 * (r + 1.0) + 0.5 * (r + 1.0)
}

/// Same constant with set sizes `N`, `R` in place of `N+1`, `R+1`.
pub fn bound_b_alt(users: &[UserSpec], levels: &PowerLevels) -> f64 {
    let n = users.len() as f64;
    let r = users.iter().filter(|u| u.is_deadline()).count() as f64;
    0.5 * n * levels.p_high().powi(2) + r
}

/// `L = (sum_i X_i^2 + sum_u Z_u^2) / 2`.
pub fn lyapunov_value(state: &DpcState) -> f64 {
    0.5 * state.x().iter().map(|x| x * x).sum::<f64>()
        + 0.5 * state.z().iter().map(|z| z * z).sum::<f64>()
}

/// Whether the backlog settled: the mean over `[T/2, T)` exceeds the mean
/// over `[T/4, T/2)` by at most [`STABILITY_SLACK`].
pub fn backlog_settled(run: &RunResult) -> Option<bool> {
    let b = run.backlog?;
    Some(b.mean_second_half <= (1.0 + STABILITY_SLACK) * b.mean_second_quarter)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub b: f64,
    pub b_alt: f64,
    pub v: Option<f64>,
    /// Realized `sum_r fbar_r(T)`.
    pub fbar: f64,
    pub fbar_offline: Option<f64>,
    /// `B / V`.
    pub gap_bound: Option<f64>,
    /// Time average of `sum_i X_i + sum_u Z_u`.
    pub queue_avg: Option<f64>,
    /// `fbar <= fbar_offline + B/V`. The offline value lower-bounds the
    /// true optimum, so this is a sufficient check only; it is reported, not
    /// enforced.
    pub within_gap: Option<bool>,
    pub backlog_settled: Option<bool>,
}

pub fn bound_report(
    config: &ExperimentConfig,
    run: &RunResult,
    fbar_offline: Option<f64>,
) -> BoundReport {
    let b = bound_b(&config.users, &config.levels);
    let v = run.scheduler.v();
    let gap_bound = v.map(|v| b / v);
    let fbar = run.fbar();
    BoundReport {
        b,
        b_alt: bound_b_alt(&config.users, &config.levels),
        v,
        fbar,
        fbar_offline,
        gap_bound,
        queue_avg: run.backlog.map(|bl| bl.mean),
        within_gap: fbar_offline
            .zip(gap_bound)
            .map(|(off, gap)| fbar <= off + gap),
        backlog_settled: backlog_settled(run),
    }
}

/// Mean per-slot cost of the clairvoyant oracle over `windows` independent
/// short probe paths of `window_len` slots drawn from the config's user
/// population. Windows whose finite-horizon budgets are infeasible are
/// skipped; `None` if all are.
///
/// This is a proxy only: short windows carry their own floor-rounded
/// budgets and start from empty queues.
pub fn offline_proxy(
    config: &ExperimentConfig,
    windows: u32,
    window_len: usize,
) -> Result<Option<f64>> {
    let mut total = 0.0;
    let mut feasible = 0u32;
    for w in 0..windows {
        let mut ch = stream(config.seed, u64::from(w), StreamTag::ProbeChannels);
        let mut ar = stream(config.seed, u64::from(w), StreamTag::ProbeArrivals);
        let path = SamplePath::draw_from(&config.users, &mut ch, &mut ar, window_len);
        if let Some(cost) = offline_oracle(&config.users, &config.levels, &path)?.cost() {
            total += cost / window_len as f64;
            feasible += 1;
        }
    }
    Ok((feasible > 0).then(|| total / f64::from(feasible)))
}

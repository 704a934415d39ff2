//! Built-in experiment presets.
//!
//! | preset | users | schedulers |
//! |---|---|---|
//! | `fig2-tradeoff` | deadline (λ=0.5, m=10, γ=0.7) + throughput (δ=0.4, γ=0.65), Good w.p. 0.4 | DPC, V ∈ {10, 100, 1000} |
//! | `fig3-droprate`, `fig4-throughput` | deadline (λ=0.35, m ∈ {10, 30}, γ=2) + K ∈ 1..=6 throughput (δ=0.1, γ=2), Good w.p. 0.9 | DPC (V=100), LDF |
//! | `fig5-convergence` | deadline (λ=0.35, m=100, γ=2) + 6 throughput (δ=0.1, γ=2), Good w.p. 0.9 | DPC (V=100), LDF |
//!
//! All presets use power levels (1, 2), 10^5 slots, 20 replications, seed 1
//! and a trace stride of 100 slots. Configs within a preset share the seed,
//! so schedulers are compared on common sample paths.

use serde::{Deserialize, Serialize};

use crate::config::{scheduler_label, DEFAULT_SEED, DEFAULT_SLOTS, DEFAULT_TRACE_EVERY};
use crate::model::{PowerLevels, UserSpec};
use crate::sim::{ExperimentConfig, SchedulerKind};

pub const PRESET_REPLICATIONS: u32 = 20;
pub const FIG2_V_SWEEP: [f64; 3] = [10.0, 100.0, 1000.0];
pub const COMPARISON_V: f64 = 100.0;
/// Throughput target of each throughput user in the multi-user presets.
pub const MULTI_USER_DELTA: f64 = 0.1;
pub const MULTI_USER_ARRIVAL: f64 = 0.35;
pub const MULTI_USER_GOOD_PROB: f64 = 0.9;
pub const MULTI_USER_GAMMA: f64 = 2.0;
pub const COMPARISON_DEADLINES: [u32; 2] = [10, 30];
pub const MAX_THROUGHPUT_USERS: usize = 6;
pub const FIG5_DEADLINE: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Fig2Tradeoff,
    Fig3Droprate,
    Fig4Throughput,
    Fig5Convergence,
    Custom,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Fig2Tradeoff => "fig2-tradeoff",
            Preset::Fig3Droprate => "fig3-droprate",
            Preset::Fig4Throughput => "fig4-throughput",
            Preset::Fig5Convergence => "fig5-convergence",
            Preset::Custom => "custom",
        }
    }

    /// Expands the preset; `Custom` has no built-in configs.
    pub fn expand(&self) -> Vec<ExperimentConfig> {
        match self {
            Preset::Fig2Tradeoff => FIG2_V_SWEEP
                .iter()
                .map(|&v| config("fig2", fig2_users(), SchedulerKind::Dpc { v }))
                .collect(),
            Preset::Fig3Droprate | Preset::Fig4Throughput => {
                let mut out = Vec::new();
                for m in COMPARISON_DEADLINES {
                    for k in 1..=MAX_THROUGHPUT_USERS {
                        for kind in comparison_schedulers() {
                            out.push(config(&format!("m={m} K={k}"), multi_user(m, k), kind));
                        }
                    }
                }
                out
            }
            Preset::Fig5Convergence => comparison_schedulers()
                .into_iter()
                .map(|kind| {
                    config(
                        "fig5",
                        multi_user(FIG5_DEADLINE, MAX_THROUGHPUT_USERS),
                        kind,
                    )
                })
                .collect(),
            Preset::Custom => Vec::new(),
        }
    }
}

pub fn levels() -> PowerLevels {
    PowerLevels::new(1.0, 2.0).expect("valid levels")
}

pub fn fig2_users() -> Vec<UserSpec> {
    vec![
        UserSpec::deadline(0.5, 10, 0.7, 0.4),
        UserSpec::throughput(0.4, 0.65, 0.4),
    ]
}

/// One deadline user with deadline `m` plus `k` throughput users.
pub fn multi_user(m: u32, k: usize) -> Vec<UserSpec> {
    let mut users = vec![UserSpec::deadline(
        MULTI_USER_ARRIVAL,
        m,
        MULTI_USER_GAMMA,
        MULTI_USER_GOOD_PROB,
    )];
    users.extend(std::iter::repeat_n(
        UserSpec::throughput(MULTI_USER_DELTA, MULTI_USER_GAMMA, MULTI_USER_GOOD_PROB),
        k,
    ));
    users
}

fn comparison_schedulers() -> [SchedulerKind; 2] {
    [SchedulerKind::Dpc { v: COMPARISON_V }, SchedulerKind::Ldf]
}

fn config(base: &str, users: Vec<UserSpec>, scheduler: SchedulerKind) -> ExperimentConfig {
    ExperimentConfig {
        label: scheduler_label(base, &scheduler),
        users,
        levels: levels(),
        scheduler,
        horizon: DEFAULT_SLOTS,
        seed: DEFAULT_SEED,
        trace_every: DEFAULT_TRACE_EVERY,
        replications: PRESET_REPLICATIONS,
    }
}

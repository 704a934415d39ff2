//! Experiment configuration files and command-line overrides.
//!
//! A config file is TOML (or the same shape in JSON when the file ends in
//! `.json`):
//!
//! ```toml
//! label = "two-user"
//! seed = 7
//! slots = 100000
//! replications = 5
//! trace_every = 100
//! p_low = 1.0
//! p_high = 2.0
//! scheduler = ["dpc", "ldf"]   # or a single name
//! v = [10.0, 100.0]            # DPC weights; one config per value
//!
//! [[user]]
//! role = "deadline"
//! arrival_prob = 0.5
//! deadline = 10
//! gamma = 0.7
//! good_prob = 0.4
//!
//! [[user]]
//! role = "throughput"
//! delta = 0.4
//! gamma = 0.65
//! good_prob = 0.4
//! ```
//!
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{PowerLevels, UserSpec};
use crate::sim::{ExperimentConfig, SchedulerKind};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_SLOTS: u64 = 100_000;
pub const DEFAULT_TRACE_EVERY: u64 = 100;
pub const DEFAULT_V: f64 = 100.0;
pub const DEFAULT_P_LOW: f64 = 1.0;
pub const DEFAULT_P_HIGH: f64 = 2.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("invalid `{key}`: {reason}")]
    Field { key: String, reason: String },
    #[error(transparent)]
    Model(#[from] crate::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerName {
    Dpc,
    Ldf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RoleName {
    Deadline,
    Throughput,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserEntry {
    role: RoleName,
    gamma: f64,
    good_prob: f64,
    arrival_prob: Option<f64>,
    deadline: Option<u32>,
    delta: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    label: Option<String>,
    seed: Option<u64>,
    slots: Option<u64>,
    replications: Option<u32>,
    trace_every: Option<u64>,
    p_low: Option<f64>,
    p_high: Option<f64>,
    scheduler: Option<OneOrMany<SchedulerName>>,
    v: Option<OneOrMany<f64>>,
    #[serde(rename = "user", alias = "users", default)]
    users: Vec<UserEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFormat {
    Toml,
    Json,
}

fn field(key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        key: key.into(),
        reason: reason.into(),
    }
}

fn user_spec(i: usize, u: UserEntry) -> Result<UserSpec, ConfigError> {
    let key = |name: &str| format!("user[{}].{name}", i + 1);
    match u.role {
        RoleName::Deadline => {
            if u.delta.is_some() {
                return Err(field(key("delta"), "only valid for throughput users"));
            }
            let p = u
                .arrival_prob
                .ok_or_else(|| field(key("arrival_prob"), "required for deadline users"))?;
            let m = u
                .deadline
                .ok_or_else(|| field(key("deadline"), "required for deadline users"))?;
            Ok(UserSpec::deadline(p, m, u.gamma, u.good_prob))
        }
        RoleName::Throughput => {
            if u.arrival_prob.is_some() {
                return Err(field(key("arrival_prob"), "only valid for deadline users"));
            }
            if u.deadline.is_some() {
                return Err(field(key("deadline"), "only valid for deadline users"));
            }
            let d = u
                .delta
                .ok_or_else(|| field(key("delta"), "required for throughput users"))?;
            Ok(UserSpec::throughput(d, u.gamma, u.good_prob))
        }
    }
}

/// Parses config text into one experiment per (scheduler, V) combination.
pub fn parse_config_str(
    text: &str,
    format: ConfigFormat,
    origin: &str,
) -> Result<Vec<ExperimentConfig>, ConfigError> {
    let parse_err = |message: String| ConfigError::Parse {
        origin: origin.to_string(),
        message,
    };
    let file: FileConfig = match format {
        ConfigFormat::Toml => toml::from_str(text).map_err(|e| parse_err(e.to_string()))?,
        ConfigFormat::Json => serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?,
    };
    if file.users.is_empty() {
        return Err(field("user", "at least one user is required"));
    }
    let levels = PowerLevels::new(
        file.p_low.unwrap_or(DEFAULT_P_LOW),
        file.p_high.unwrap_or(DEFAULT_P_HIGH),
    )?;
    let users = file
        .users
        .into_iter()
        .enumerate()
        .map(|(i, u)| user_spec(i, u))
        .collect::<Result<Vec<_>, _>>()?;
    for (i, u) in users.iter().enumerate() {
        u.validate(i + 1, &levels)?;
    }

    let schedulers = file
        .scheduler
        .map_or(vec![SchedulerName::Dpc], OneOrMany::into_vec);
    let vs = file.v.map_or(vec![DEFAULT_V], OneOrMany::into_vec);
    if schedulers.is_empty() {
        return Err(field("scheduler", "must name at least one scheduler"));
    }
    if vs.is_empty() {
        return Err(field("v", "must list at least one value"));
    }
    let base_label = file.label.unwrap_or_else(|| "custom".to_string());
    let mut out = Vec::new();
    for s in schedulers {
        let kinds: Vec<SchedulerKind> = match s {
            SchedulerName::Dpc => vs.iter().map(|&v| SchedulerKind::Dpc { v }).collect(),
            SchedulerName::Ldf => vec![SchedulerKind::Ldf],
        };
        for kind in kinds {
            let config = ExperimentConfig {
                label: scheduler_label(&base_label, &kind),
                users: users.clone(),
                levels,
                scheduler: kind,
                horizon: file.slots.unwrap_or(DEFAULT_SLOTS),
                seed: file.seed.unwrap_or(DEFAULT_SEED),
                trace_every: file.trace_every.unwrap_or(DEFAULT_TRACE_EVERY),
                replications: file.replications.unwrap_or(1),
            };
            config.validate()?;
            out.push(config);
        }
    }
    Ok(out)
}

pub fn scheduler_label(base: &str, kind: &SchedulerKind) -> String {
    match kind {
        SchedulerKind::Dpc { v } => format!("{base} dpc V={v}"),
        SchedulerKind::Ldf => format!("{base} ldf"),
    }
}

pub fn parse_config_file(path: &Path) -> Result<Vec<ExperimentConfig>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let format = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => ConfigFormat::Json,
        _ => ConfigFormat::Toml,
    };
    parse_config_str(&text, format, &path.display().to_string())
}

/// Command-line overrides applied on top of a preset or config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scheduler: Option<SchedulerName>,
    pub v: Option<f64>,
    pub slots: Option<u64>,
    pub seed: Option<u64>,
    pub replications: Option<u32>,
    pub trace_every: Option<u64>,
}

impl Overrides {
    /// `scheduler` keeps only the matching configs, or converts all of them
    /// when none match. `v` replaces the weight of every DPC config; configs
    /// that become identical are merged.
    pub fn apply(
        &self,
        configs: Vec<ExperimentConfig>,
    ) -> Result<Vec<ExperimentConfig>, ConfigError> {
        let mut configs = configs;
        if let Some(name) = self.scheduler {
            let matches = |c: &ExperimentConfig| {
                matches!(
                    (name, c.scheduler),
                    (SchedulerName::Dpc, SchedulerKind::Dpc { .. })
                        | (SchedulerName::Ldf, SchedulerKind::Ldf)
                )
            };
            if configs.iter().any(matches) {
                configs.retain(matches);
            } else {
                for c in &mut configs {
                    c.scheduler = match name {
                        SchedulerName::Dpc => SchedulerKind::Dpc { v: DEFAULT_V },
                        SchedulerName::Ldf => SchedulerKind::Ldf,
                    };
                }
            }
        }
        if let Some(v) = self.v {
            for c in &mut configs {
                if let SchedulerKind::Dpc { v: old } = &mut c.scheduler {
                    *old = v;
                }
            }
        }
        for c in &mut configs {
            if let Some(s) = self.slots {
                c.horizon = s;
            }
            if let Some(s) = self.seed {
                c.seed = s;
            }
            if let Some(r) = self.replications {
                c.replications = r;
            }
            if let Some(t) = self.trace_every {
                c.trace_every = t;
            }
        }
        let mut unique: Vec<ExperimentConfig> = Vec::with_capacity(configs.len());
        for mut c in configs {
            let base = c.label.split(" dpc ").next().unwrap_or(&c.label);
            let base = base.strip_suffix(" ldf").unwrap_or(base).to_string();
            c.label = scheduler_label(&base, &c.scheduler);
            if !unique.contains(&c) {
                unique.push(c);
            }
        }
        for c in &unique {
            c.validate()?;
        }
        Ok(unique)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_USER: &str = r#"
        seed = 7
        slots = 500
        scheduler = ["dpc", "ldf"]
        v = [10.0, 1000.0]

        [[user]]
        role = "deadline"
        arrival_prob = 0.5
        deadline = 10
        gamma = 0.7
        good_prob = 0.4

        [[user]]
        role = "throughput"
        delta = 0.4
        gamma = 0.65
        good_prob = 0.4
    "#;

    #[test]
    fn toml_expands_scheduler_and_v() {
        let cs = parse_config_str(TWO_USER, ConfigFormat::Toml, "inline").unwrap();
        assert_eq!(cs.len(), 3);
        assert_eq!(cs[0].scheduler, SchedulerKind::Dpc { v: 10.0 });
        assert_eq!(cs[2].scheduler, SchedulerKind::Ldf);
        assert_eq!(cs[0].users[0], UserSpec::deadline(0.5, 10, 0.7, 0.4));
        assert_eq!((cs[0].horizon, cs[0].seed, cs[0].replications), (500, 7, 1));
        assert_eq!(cs[0].trace_every, DEFAULT_TRACE_EVERY);
    }

    #[test]
    fn json_shape_is_equivalent() {
        let json = r#"{
            "seed": 7, "slots": 500, "scheduler": ["dpc", "ldf"], "v": [10.0, 1000.0],
            "user": [
                {"role": "deadline", "arrival_prob": 0.5, "deadline": 10, "gamma": 0.7, "good_prob": 0.4},
                {"role": "throughput", "delta": 0.4, "gamma": 0.65, "good_prob": 0.4}
            ]
        }"#;
        assert_eq!(
            parse_config_str(json, ConfigFormat::Json, "inline").unwrap(),
            parse_config_str(TWO_USER, ConfigFormat::Toml, "inline").unwrap()
        );
    }

    #[test]
    fn delta_on_deadline_user_names_field() {
        let text = r#"
            [[user]]
            role = "deadline"
            arrival_prob = 0.5
            deadline = 10
            delta = 0.2
            gamma = 0.7
            good_prob = 0.4
        "#;
        let err = parse_config_str(text, ConfigFormat::Toml, "inline").unwrap_err();
        assert!(err.to_string().contains("user[1].delta"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = "bogus = 3\n[[user]]\nrole = \"throughput\"\ndelta = 0.1\ngamma = 1.0\ngood_prob = 0.5\n";
        let err = parse_config_str(text, ConfigFormat::Toml, "inline").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn out_of_range_values_rejected() {
        let text = "[[user]]\nrole = \"throughput\"\ndelta = 1.5\ngamma = 1.0\ngood_prob = 0.5\n";
        let err = parse_config_str(text, ConfigFormat::Toml, "inline").unwrap_err();
        assert!(err.to_string().contains("delta"), "{err}");
        let text = "p_low = 2.0\n[[user]]\nrole = \"throughput\"\ndelta = 0.5\ngamma = 1.0\ngood_prob = 0.5\n";
        assert!(parse_config_str(text, ConfigFormat::Toml, "inline").is_err());
    }

    #[test]
    fn overrides_filter_and_collapse() {
        let cs = parse_config_str(TWO_USER, ConfigFormat::Toml, "inline").unwrap();
        let o = Overrides {
            scheduler: Some(SchedulerName::Dpc),
            v: Some(50.0),
            slots: Some(99),
            ..Default::default()
        };
        let out = o.apply(cs).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].scheduler, SchedulerKind::Dpc { v: 50.0 });
        assert_eq!(out[0].horizon, 99);
        assert_eq!(out[0].label, "custom dpc V=50");
    }

    #[test]
    fn overrides_convert_single_scheduler_sets() {
        let text = "[[user]]\nrole = \"throughput\"\ndelta = 0.1\ngamma = 1.0\ngood_prob = 0.5\n";
        let cs = parse_config_str(text, ConfigFormat::Toml, "inline").unwrap();
        let o = Overrides {
            scheduler: Some(SchedulerName::Ldf),
            ..Default::default()
        };
        assert_eq!(o.apply(cs).unwrap()[0].scheduler, SchedulerKind::Ldf);
    }

    #[test]
    fn overrides_are_validated() {
        let cs = parse_config_str(TWO_USER, ConfigFormat::Toml, "inline").unwrap();
        let o = Overrides {
            trace_every: Some(0),
            ..Default::default()
        };
        assert!(o.apply(cs).is_err());
    }
}

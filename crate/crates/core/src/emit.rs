//! Output files.
//!
//! Every emission writes `config.json` (the resolved configs, defaults
//! filled in) plus, in the chosen format:
//!
//! * `final.{csv,json}`: one record per (config, replication).
//! * `trace.{csv,json}`: one record per sampled slot and user.
//! * `plotdata_<name>.{csv,json}`: `series,x,y` points for the preset's
//!   figures.
//!
//! CSV columns (fixed order):
//!
//! * `final.csv`: `run_id,label,scheduler,v,replication,seed,horizon,users,`
//!   `dbar_sum,fbar_sum,dbar,pbar,mubar,fbar,B,B_alt,gap_bound,queue_avg,`
//!   `fbar_offline,within_gap,backlog_settled`. The per-user columns
//!   `dbar,pbar,mubar,fbar` hold `;`-separated values in user order, empty
//!   where the metric does not apply.
//! * `trace.csv`: `run_id,replication,t,user,Qlen,head_ttl,X,Z_or_y,Dbar,pbar,mubar,fbar`.
//!
//! Empty cells mean "not applicable". Floats use the shortest
//! representation that round-trips.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{bound_report, BoundReport};
use crate::preset::Preset;
use crate::sim::{ExperimentConfig, RunResult, TraceRow, UserSummary};

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot serialize {path}: {message}")]
    Serialize { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    fn ext(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

pub const FINAL_COLUMNS: [&str; 21] = [
    "run_id",
    "label",
    "scheduler",
    "v",
    "replication",
    "seed",
    "horizon",
    "users",
    "dbar_sum",
    "fbar_sum",
    "dbar",
    "pbar",
    "mubar",
    "fbar",
    "B",
    "B_alt",
    "gap_bound",
    "queue_avg",
    "fbar_offline",
    "within_gap",
    "backlog_settled",
];

pub const TRACE_COLUMNS: [&str; 12] = [
    "run_id",
    "replication",
    "t",
    "user",
    "Qlen",
    "head_ttl",
    "X",
    "Z_or_y",
    "Dbar",
    "pbar",
    "mubar",
    "fbar",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRecord {
    pub run_id: usize,
    pub label: String,
    pub scheduler: String,
    pub v: Option<f64>,
    pub replication: u32,
    pub seed: u64,
    pub horizon: u64,
    pub users: Vec<UserSummary>,
    pub dbar_sum: f64,
    pub fbar_sum: f64,
    pub report: BoundReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub run_id: usize,
    pub replication: u32,
    #[serde(flatten)]
    pub row: TraceRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub series: String,
    pub x: f64,
    pub y: f64,
}

pub fn final_records(configs: &[ExperimentConfig], results: &[RunResult]) -> Vec<FinalRecord> {
    results
        .iter()
        .map(|r| FinalRecord {
            run_id: r.config_index,
            label: r.label.clone(),
            scheduler: r.scheduler.name().to_string(),
            v: r.scheduler.v(),
            replication: r.replication,
            seed: r.seed,
            horizon: r.horizon,
            users: r.users.clone(),
            dbar_sum: r.users.iter().filter_map(|u| u.dbar).sum(),
            fbar_sum: r.fbar(),
            report: bound_report(&configs[r.config_index], r, None),
        })
        .collect()
}

pub fn trace_records(results: &[RunResult]) -> Vec<TraceRecord> {
    results
        .iter()
        .flat_map(|r| {
            r.trace.iter().map(move |row| TraceRecord {
                run_id: r.config_index,
                replication: r.replication,
                row: row.clone(),
            })
        })
        .collect()
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = xs
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Replication mean of a final per-run metric, per config index.
fn per_config_mean(results: &[RunResult], f: impl Fn(&RunResult) -> f64) -> BTreeMap<usize, f64> {
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in results {
        groups.entry(r.config_index).or_default().push(f(r));
    }
    groups.into_iter().map(|(k, v)| (k, mean(v))).collect()
}

/// Replication mean of a traced per-user metric, per config index and slot.
fn trace_mean(
    results: &[RunResult],
    user: usize,
    f: impl Fn(&TraceRow) -> f64,
) -> BTreeMap<usize, Vec<(u64, f64)>> {
    let mut groups: BTreeMap<usize, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in results {
        for row in r.trace.iter().filter(|row| row.user == user) {
            groups
                .entry(r.config_index)
                .or_default()
                .entry(row.t)
                .or_default()
                .push(f(row));
        }
    }
    groups
        .into_iter()
        .map(|(k, by_t)| (k, by_t.into_iter().map(|(t, v)| (t, mean(v))).collect()))
        .collect()
}

fn series_points(series: String, pts: &[(u64, f64)]) -> impl Iterator<Item = PlotPoint> + '_ {
    pts.iter().map(move |&(t, y)| PlotPoint {
        series: series.clone(),
        x: t as f64,
        y,
    })
}

fn deadline_of(c: &ExperimentConfig) -> u32 {
    c.users.iter().find_map(|u| u.deadline_slots()).unwrap_or(0)
}

fn throughput_users(c: &ExperimentConfig) -> usize {
    c.users.iter().filter(|u| u.is_throughput()).count()
}

fn first_user(c: &ExperimentConfig, deadline: bool) -> Option<usize> {
    c.users
        .iter()
        .position(|u| u.is_deadline() == deadline)
        .map(|i| i + 1)
}

/// Plot-ready series for `preset`, keyed by file stem suffix.
pub fn plot_data(
    preset: Preset,
    configs: &[ExperimentConfig],
    results: &[RunResult],
) -> Vec<(String, Vec<PlotPoint>)> {
    let sched_series = |c: &ExperimentConfig| match c.scheduler.v() {
        Some(v) if preset == Preset::Fig2Tradeoff => format!("V={v}"),
        _ => c.scheduler.name().to_string(),
    };
    let user_metric = |user: Option<usize>, pick: fn(&UserSummary) -> Option<f64>| {
        move |r: &RunResult| {
            user.and_then(|u| r.users.get(u - 1))
                .and_then(pick)
                .unwrap_or(0.0)
        }
    };
    match preset {
        Preset::Fig2Tradeoff => {
            let mut throughput = Vec::new();
            let mut power = Vec::new();
            let mut tradeoff = Vec::new();
            for (i, c) in configs.iter().enumerate() {
                let (d, u) = (first_user(c, true), first_user(c, false));
                if let Some(u) = u {
                    if let Some(pts) = trace_mean(results, u, |r| r.mubar).get(&i) {
                        throughput.extend(series_points(sched_series(c), pts));
                    }
                }
                if let Some(d) = d {
                    if let Some(pts) = trace_mean(results, d, |r| r.pbar).get(&i) {
                        power.extend(series_points(sched_series(c), pts));
                    }
                }
                let x = c.scheduler.v().unwrap_or(0.0);
                let dbar = per_config_mean(results, user_metric(d, |u| u.dbar));
                let pbar = per_config_mean(results, user_metric(d, |u| Some(u.pbar)));
                if let (Some(&db), Some(&pb)) = (dbar.get(&i), pbar.get(&i)) {
                    tradeoff.push(PlotPoint {
                        series: "dbar_1".into(),
                        x,
                        y: db,
                    });
                    tradeoff.push(PlotPoint {
                        series: "pbar_1".into(),
                        x,
                        y: pb,
                    });
                }
            }
            vec![
                ("fig2a_throughput".into(), throughput),
                ("fig2b_power".into(), power),
                ("fig2c_tradeoff".into(), tradeoff),
            ]
        }
        Preset::Fig3Droprate | Preset::Fig4Throughput => {
            let metric: Box<dyn Fn(&RunResult) -> f64> = if preset == Preset::Fig3Droprate {
                Box::new(|r: &RunResult| r.users.iter().filter_map(|u| u.dbar).sum())
            } else {
                Box::new(|r: &RunResult| {
                    r.users
                        .iter()
                        .filter(|u| !u.deadline)
                        .map(|u| u.mubar)
                        .sum()
                })
            };
            let means = per_config_mean(results, metric);
            let pts = configs
                .iter()
                .enumerate()
                .filter_map(|(i, c)| {
                    Some(PlotPoint {
                        series: format!("{} m={}", c.scheduler.name(), deadline_of(c)),
                        x: throughput_users(c) as f64,
                        y: *means.get(&i)?,
                    })
                })
                .collect();
            let name = if preset == Preset::Fig3Droprate {
                "fig3_droprate"
            } else {
                "fig4_throughput"
            };
            vec![(name.into(), pts)]
        }
        Preset::Fig5Convergence => {
            let mut pts = Vec::new();
            for (i, c) in configs.iter().enumerate() {
                if let Some(u) = first_user(c, false) {
                    if let Some(s) = trace_mean(results, u, |r| r.mubar).get(&i) {
                        pts.extend(series_points(sched_series(c), s));
                    }
                }
            }
            vec![("fig5_convergence".into(), pts)]
        }
        Preset::Custom => {
            let mut pts = Vec::new();
            for (i, c) in configs.iter().enumerate() {
                for u in 1..=c.users.len() {
                    if let Some(s) = trace_mean(results, u, |r| r.mubar).get(&i) {
                        pts.extend(series_points(format!("{} user {u} mubar", c.label), s));
                    }
                    if let Some(s) = trace_mean(results, u, |r| r.pbar).get(&i) {
                        pts.extend(series_points(format!("{} user {u} pbar", c.label), s));
                    }
                }
            }
            vec![("custom_convergence".into(), pts)]
        }
    }
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn joined(users: &[UserSummary], f: impl Fn(&UserSummary) -> Option<f64>) -> String {
    users
        .iter()
        .map(|u| opt(f(u)))
        .collect::<Vec<_>>()
        .join(";")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EmitError + '_ {
    move |source| EmitError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> EmitError + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(source) => EmitError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => EmitError::Serialize {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), EmitError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), EmitError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| EmitError::Serialize {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

fn final_row(r: &FinalRecord) -> Vec<String> {
    let rep = &r.report;
    vec![
        r.run_id.to_string(),
        r.label.clone(),
        r.scheduler.clone(),
        opt(r.v),
        r.replication.to_string(),
        r.seed.to_string(),
        r.horizon.to_string(),
        r.users.len().to_string(),
        num(r.dbar_sum),
        num(r.fbar_sum),
        joined(&r.users, |u| u.dbar),
        joined(&r.users, |u| Some(u.pbar)),
        joined(&r.users, |u| Some(u.mubar)),
        joined(&r.users, |u| u.fbar),
        num(rep.b),
        num(rep.b_alt),
        opt(rep.gap_bound),
        opt(rep.queue_avg),
        opt(rep.fbar_offline),
        opt(rep.within_gap),
        opt(rep.backlog_settled),
    ]
}

fn trace_row(r: &TraceRecord) -> Vec<String> {
    let row = &r.row;
    vec![
        r.run_id.to_string(),
        r.replication.to_string(),
        row.t.to_string(),
        row.user.to_string(),
        opt(row.qlen),
        opt(row.head_ttl),
        opt(row.x),
        opt(row.z_or_y),
        opt(row.dbar),
        num(row.pbar),
        num(row.mubar),
        opt(row.fbar),
    ]
}

/// Writes every output file into `out_dir` (created if missing) and returns
/// the written paths.
pub fn emit(
    preset: Preset,
    configs: &[ExperimentConfig],
    results: &[RunResult],
    format: Format,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, EmitError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();
    let path = |name: &str| out_dir.join(name);

    let p = path("config.json");
    write_json(&p, configs)?;
    written.push(p);

    let finals = final_records(configs, results);
    let traces = trace_records(results);
    let plots = plot_data(preset, configs, results);
    let ext = format.ext();

    let p = path(&format!("final.{ext}"));
    match format {
        Format::Csv => write_csv(&p, &FINAL_COLUMNS, finals.iter().map(final_row))?,
        Format::Json => write_json(&p, &finals)?,
    }
    written.push(p);

    let p = path(&format!("trace.{ext}"));
    match format {
        Format::Csv => write_csv(&p, &TRACE_COLUMNS, traces.iter().map(trace_row))?,
        Format::Json => write_json(&p, &traces)?,
    }
    written.push(p);

    for (name, pts) in &plots {
        let p = path(&format!("plotdata_{name}.{ext}"));
        match format {
            Format::Csv => write_csv(
                &p,
                &["series", "x", "y"],
                pts.iter()
                    .map(|pt| vec![pt.series.clone(), num(pt.x), num(pt.y)]),
            )?,
            Format::Json => write_json(&p, pts)?,
        }
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_results_give_header_only_csv() {
        let dir = tempfile::tempdir().unwrap();
        emit(Preset::Custom, &[], &[], Format::Csv, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("final.csv")).unwrap();
        assert_eq!(text, FINAL_COLUMNS.join(",") + "\n");
        let text = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
        assert_eq!(text, TRACE_COLUMNS.join(",") + "\n");
    }

    #[test]
    fn unwritable_directory_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let err = emit(Preset::Custom, &[], &[], Format::Csv, &blocker.join("out")).unwrap_err();
        assert!(err.to_string().contains("file"), "{err}");
    }
}

//! The slot loop.
//!
//! Each slot runs in a fixed order: draw channels and arrivals, let the
//! scheduler decide on the current queues, serve, drop expired heads, age
//! the remaining packets, append arrivals, then update the scheduler state
//! and the running metrics.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    check_action, sample_arrivals, sample_channels, Action, ChannelState, DeadlineQueue,
    PowerLevels, UserSpec,
};
use crate::rng::{stream, StreamTag};
use crate::scheduler::{slot_urgency, urgency_cost, DpcState, LdfState, Scheduler, SlotView};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulerKind {
    Dpc { v: f64 },
    Ldf,
}

impl SchedulerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchedulerKind::Dpc { .. } => "dpc",
            SchedulerKind::Ldf => "ldf",
        }
    }

    pub fn v(&self) -> Option<f64> {
        match *self {
            SchedulerKind::Dpc { v } => Some(v),
            SchedulerKind::Ldf => None,
        }
    }

    pub fn build(&self, specs: &[UserSpec]) -> Result<Box<dyn Scheduler>> {
        Ok(match *self {
            SchedulerKind::Dpc { v } => Box::new(DpcState::new(specs.len(), v)?),
            SchedulerKind::Ldf => Box::new(LdfState::new(specs)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub label: String,
    pub users: Vec<UserSpec>,
    pub levels: PowerLevels,
    pub scheduler: SchedulerKind,
    pub horizon: u64,
    pub seed: u64,
    pub trace_every: u64,
    pub replications: u32,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| {
            Err(Error::Config {
                field,
                reason: reason.to_string(),
            })
        };
        if self.horizon == 0 {
            return bad("horizon", "must be at least 1");
        }
        if self.trace_every == 0 {
            return bad("trace_every", "must be at least 1");
        }
        if self.replications == 0 {
            return bad("replications", "must be at least 1");
        }
        if let SchedulerKind::Dpc { v } = self.scheduler {
            if !(v > 0.0 && v.is_finite()) {
                return bad("v", "must be positive and finite");
            }
        }
        for (i, u) in self.users.iter().enumerate() {
            u.validate(i + 1, &self.levels)?;
        }
        Ok(())
    }

    pub fn deadline_users(&self) -> usize {
        self.users.iter().filter(|u| u.is_deadline()).count()
    }
}

/// Realized channels and arrivals of a run, slot by slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub channels: Vec<ChannelState>,
    pub arrivals: Vec<Vec<bool>>,
}

impl SamplePath {
    /// Draws the same path a live run with `(seed, replication)` would see.
    pub fn draw(specs: &[UserSpec], seed: u64, replication: u64, slots: usize) -> Self {
        let mut ch = stream(seed, replication, StreamTag::Channels);
        let mut ar = stream(seed, replication, StreamTag::Arrivals);
        Self::draw_from(specs, &mut ch, &mut ar, slots)
    }

    pub fn draw_from(
        specs: &[UserSpec],
        channels: &mut ChaCha8Rng,
        arrivals: &mut ChaCha8Rng,
        slots: usize,
    ) -> Self {
        let mut path = Self {
            channels: Vec::with_capacity(slots),
            arrivals: Vec::with_capacity(slots),
        };
        for _ in 0..slots {
            path.channels.push(sample_channels(specs, channels));
            path.arrivals.push(sample_arrivals(specs, arrivals));
        }
        path
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }
}

// One source per world, so the inline RNG state is not worth boxing.
#[allow(clippy::large_enum_variant)]
pub enum PathSource {
    Random {
        channels: ChaCha8Rng,
        arrivals: ChaCha8Rng,
    },
    Replay {
        path: SamplePath,
        next: usize,
    },
}

impl PathSource {
    pub fn seeded(seed: u64, replication: u64) -> Self {
        PathSource::Random {
            channels: stream(seed, replication, StreamTag::Channels),
            arrivals: stream(seed, replication, StreamTag::Arrivals),
        }
    }

    pub fn replay(path: SamplePath) -> Self {
        PathSource::Replay { path, next: 0 }
    }

    fn next_slot(&mut self, specs: &[UserSpec]) -> Result<(ChannelState, Vec<bool>)> {
        match self {
            PathSource::Random { channels, arrivals } => Ok((
                sample_channels(specs, channels),
                sample_arrivals(specs, arrivals),
            )),
            PathSource::Replay { path, next } => {
                let t = *next;
                if t >= path.len() {
                    return Err(Error::PathExhausted(t));
                }
                *next += 1;
                let (c, a) = (path.channels[t].clone(), path.arrivals[t].clone());
                if c.len() != specs.len() || a.len() != specs.len() {
                    return Err(Error::PathShape {
                        path: c.len(),
                        users: specs.len(),
                    });
                }
                Ok((c, a))
            }
        }
    }
}

/// Running sums behind the time averages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsAccumulator {
    pub slots: u64,
    pub drops: Vec<u64>,
    pub energy: Vec<f64>,
    pub services: Vec<u64>,
    pub urgency: Vec<f64>,
    pub arrivals: Vec<u64>,
    /// `sum_t sum_r f_r(t)`.
    pub total_cost: f64,
}

impl MetricsAccumulator {
    pub fn new(users: usize) -> Self {
        Self {
            slots: 0,
            drops: vec![0; users],
            energy: vec![0.0; users],
            services: vec![0; users],
            urgency: vec![0.0; users],
            arrivals: vec![0; users],
            total_cost: 0.0,
        }
    }

    fn avg(&self, sum: f64) -> f64 {
        if self.slots == 0 {
            0.0
        } else {
            sum / self.slots as f64
        }
    }

    pub fn drop_rate(&self, user: usize) -> f64 {
        self.avg(self.drops[user] as f64)
    }

    pub fn avg_power(&self, user: usize) -> f64 {
        self.avg(self.energy[user])
    }

    pub fn throughput(&self, user: usize) -> f64 {
        self.avg(self.services[user] as f64)
    }

    pub fn avg_urgency(&self, user: usize) -> f64 {
        self.avg(self.urgency[user])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSlot {
    pub dropped: bool,
    pub power: f64,
    pub served: bool,
    /// `f_r(t)`; `None` for throughput users.
    pub urgency: Option<f64>,
    /// Scheduler state after the update.
    pub x: Option<f64>,
    pub aux: Option<f64>,
    /// Queue state entering the next slot.
    pub qlen: Option<usize>,
    pub head_ttl: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    /// Zero-based slot index.
    pub t: u64,
    pub channels: ChannelState,
    pub arrivals: Vec<bool>,
    pub action: Action,
    pub urgency: f64,
    pub users: Vec<UserSlot>,
}

pub struct World {
    specs: Vec<UserSpec>,
    levels: PowerLevels,
    queues: Vec<Option<DeadlineQueue>>,
    source: PathSource,
    metrics: MetricsAccumulator,
}

impl World {
    pub fn new(specs: Vec<UserSpec>, levels: PowerLevels, source: PathSource) -> Result<Self> {
        for (i, s) in specs.iter().enumerate() {
            s.validate(i + 1, &levels)?;
            if s.deadline_slots() == Some(1) {
                log::warn!(
                    "user {}: deadline of 1 slot leaves each packet a single servable slot",
                    i + 1
                );
            }
        }
        let queues = specs
            .iter()
            .map(|s| s.deadline_slots().map(DeadlineQueue::new))
            .collect();
        let metrics = MetricsAccumulator::new(specs.len());
        Ok(Self {
            specs,
            levels,
            queues,
            source,
            metrics,
        })
    }

    pub fn specs(&self) -> &[UserSpec] {
        &self.specs
    }

    pub fn queues(&self) -> &[Option<DeadlineQueue>] {
        &self.queues
    }

    pub fn metrics(&self) -> &MetricsAccumulator {
        &self.metrics
    }

    pub fn step(&mut self, sched: &mut dyn Scheduler) -> Result<SlotRecord> {
        self.step_inspect(sched, |_, _| {})
    }

    /// Like [`World::step`], but hands the decision-time view and the chosen
    /// action to `inspect` before anything is executed.
    pub fn step_inspect(
        &mut self,
        sched: &mut dyn Scheduler,
        inspect: impl FnOnce(&SlotView<'_>, &Action),
    ) -> Result<SlotRecord> {
        let (channels, arrivals) = self.source.next_slot(&self.specs)?;
        let n = self.specs.len();
        let view = SlotView {
            specs: &self.specs,
            levels: &self.levels,
            channels: &channels,
            queues: &self.queues,
        };
        let action = sched.decide(&view)?;
        check_action(&action, &channels, &self.levels, &self.queues)?;
        inspect(&view, &action);

        let urgency: Vec<Option<f64>> = (0..n)
            .map(|i| {
                self.specs[i]
                    .deadline_slots()
                    .map(|m| urgency_cost(view.head_ttl(i), m, action.serves(i)))
            })
            .collect();
        let slot_cost = slot_urgency(&view, &action);
        sched.update(&view, &action);

        let t = self.metrics.slots;
        let mut users = Vec::with_capacity(n);
        for i in 0..n {
            let served = action.serves(i);
            let power = action.power_of(i);
            let dropped = match &mut self.queues[i] {
                Some(q) => q
                    .advance(served, arrivals[i])
                    .map_err(|_| Error::ServeEmpty(i))?,
                None => false,
            };
            let m = &mut self.metrics;
            m.drops[i] += dropped as u64;
            m.energy[i] += power;
            m.services[i] += served as u64;
            m.arrivals[i] += arrivals[i] as u64;
            if let Some(f) = urgency[i] {
                m.urgency[i] += f;
            }
            let q = self.queues[i].as_ref();
            users.push(UserSlot {
                dropped,
                power,
                served,
                urgency: urgency[i],
                x: sched.power_queue(i),
                aux: sched.aux(i),
                qlen: q.map(DeadlineQueue::len),
                head_ttl: q.and_then(DeadlineQueue::head_ttl),
            });
        }
        self.metrics.total_cost += slot_cost;
        self.metrics.slots += 1;

        Ok(SlotRecord {
            t,
            channels,
            arrivals,
            action,
            urgency: slot_cost,
            users,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSummary {
    /// One-based user id.
    pub user: usize,
    pub deadline: bool,
    pub dbar: Option<f64>,
    pub pbar: f64,
    pub mubar: f64,
    pub fbar: Option<f64>,
    pub drops: u64,
    pub energy: f64,
    pub services: u64,
    pub arrivals: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// Completed slots.
    pub t: u64,
    pub user: usize,
    pub qlen: Option<usize>,
    pub head_ttl: Option<u32>,
    pub x: Option<f64>,
    pub z_or_y: Option<f64>,
    pub dbar: Option<f64>,
    pub pbar: f64,
    pub mubar: f64,
    pub fbar: Option<f64>,
}

/// Time averages of the total virtual backlog `sum_i X_i + sum_u Z_u`,
/// sampled at the start of every slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacklogSummary {
    pub mean: f64,
    /// Mean over slots `[T/4, T/2)`.
    pub mean_second_quarter: f64,
    /// Mean over slots `[T/2, T)`.
    pub mean_second_half: f64,
    pub last: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub config_index: usize,
    pub label: String,
    pub scheduler: SchedulerKind,
    pub replication: u32,
    pub seed: u64,
    pub horizon: u64,
    pub users: Vec<UserSummary>,
    pub total_cost: f64,
    pub backlog: Option<BacklogSummary>,
    pub trace: Vec<TraceRow>,
}

impl RunResult {
    /// `sum_r fbar_r(T)`.
    pub fn fbar(&self) -> f64 {
        self.users.iter().filter_map(|u| u.fbar).sum()
    }
}

#[derive(Default)]
struct WindowMean {
    sum: f64,
    count: u64,
}

impl WindowMean {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.count += 1;
    }

    fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

/// Runs replication `replication` of `config` on its seeded sample path.
pub fn run(config: &ExperimentConfig, replication: u32) -> Result<RunResult> {
    run_indexed(config, 0, replication)
}

fn run_indexed(config: &ExperimentConfig, index: usize, replication: u32) -> Result<RunResult> {
    config.validate()?;
    let source = PathSource::seeded(config.seed, u64::from(replication));
    let mut world = World::new(config.users.clone(), config.levels, source)?;
    let mut sched = config.scheduler.build(&config.users)?;

    let horizon = config.horizon;
    let (q1, q2) = (horizon / 4, horizon / 2);
    let mut all = WindowMean::default();
    let mut second_quarter = WindowMean::default();
    let mut second_half = WindowMean::default();
    let mut last_backlog = 0.0;
    let mut trace = Vec::new();

    for t in 0..horizon {
        if let Some(b) = sched.backlog() {
            all.push(b);
            if t >= q2 {
                second_half.push(b);
            } else if t >= q1 {
                second_quarter.push(b);
            }
            last_backlog = b;
        }
        let record = world.step(sched.as_mut())?;
        let done = t + 1;
        if done % config.trace_every == 0 {
            let m = world.metrics();
            for (i, u) in record.users.iter().enumerate() {
                let deadline = config.users[i].is_deadline();
                trace.push(TraceRow {
                    t: done,
                    user: i + 1,
                    qlen: u.qlen,
                    head_ttl: u.head_ttl,
                    x: u.x,
                    z_or_y: if deadline && config.scheduler.v().is_some() {
                        None
                    } else {
                        u.aux
                    },
                    dbar: deadline.then(|| m.drop_rate(i)),
                    pbar: m.avg_power(i),
                    mubar: m.throughput(i),
                    fbar: deadline.then(|| m.avg_urgency(i)),
                });
            }
        }
    }

    let m = world.metrics();
    let users = config
        .users
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let deadline = s.is_deadline();
            UserSummary {
                user: i + 1,
                deadline,
                dbar: deadline.then(|| m.drop_rate(i)),
                pbar: m.avg_power(i),
                mubar: m.throughput(i),
                fbar: deadline.then(|| m.avg_urgency(i)),
                drops: m.drops[i],
                energy: m.energy[i],
                services: m.services[i],
                arrivals: m.arrivals[i],
            }
        })
        .collect();

    Ok(RunResult {
        config_index: index,
        label: config.label.clone(),
        scheduler: config.scheduler,
        replication,
        seed: config.seed,
        horizon,
        users,
        total_cost: m.total_cost,
        backlog: sched.backlog().map(|_| BacklogSummary {
            mean: all.mean(),
            mean_second_quarter: second_quarter.mean(),
            mean_second_half: second_half.mean(),
            last: last_backlog,
        }),
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Fans runs out over the rayon pool; sequential without the
    /// `parallel` feature.
    #[default]
    Parallel,
}

/// Runs every replication of every config. Results are ordered by config,
/// then replication, whatever the execution mode.
pub fn run_batch(configs: &[ExperimentConfig], exec: Execution) -> Result<Vec<RunResult>> {
    for c in configs {
        c.validate()?;
    }
    let jobs: Vec<(usize, u32)> = configs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| (0..c.replications).map(move |r| (i, r)))
        .collect();
    let work = |&(i, r): &(usize, u32)| run_indexed(&configs[i], i, r);
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            jobs.par_iter().map(work).collect()
        }
        _ => jobs.iter().map(work).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Channel;

    fn levels() -> PowerLevels {
        PowerLevels::new(1.0, 2.0).unwrap()
    }

    fn fig2(v: f64, horizon: u64) -> ExperimentConfig {
        ExperimentConfig {
            label: "fig2".into(),
            users: vec![
                UserSpec::deadline(0.5, 10, 0.7, 0.4),
                UserSpec::throughput(0.4, 0.65, 0.4),
            ],
            levels: levels(),
            scheduler: SchedulerKind::Dpc { v },
            horizon,
            seed: 9,
            trace_every: 100,
            replications: 2,
        }
    }

    fn single_slot_path(ttl_arrival: bool) -> SamplePath {
        SamplePath {
            channels: vec![ChannelState(vec![Channel::Good]); 2],
            arrivals: vec![vec![ttl_arrival], vec![false]],
        }
    }

    #[test]
    fn idle_single_slot_has_zero_metrics() {
        let specs = vec![UserSpec::deadline(0.0, 10, 1.0, 0.5)];
        let mut w = World::new(specs.clone(), levels(), PathSource::seeded(1, 0)).unwrap();
        let mut s = DpcState::new(1, 10.0).unwrap();
        let rec = w.step(&mut s).unwrap();
        assert_eq!(rec.action, Action::Idle);
        assert_eq!(rec.urgency, 0.0);
        let m = w.metrics();
        assert_eq!((m.drops[0], m.energy[0], m.services[0]), (0, 0.0, 0));
    }

    #[test]
    fn last_slot_packet_is_served_under_large_v() {
        let specs = vec![UserSpec::deadline(1.0, 1, 1.0, 1.0)];
        let mut w =
            World::new(specs, levels(), PathSource::replay(single_slot_path(true))).unwrap();
        let mut s = DpcState::new(1, 1000.0).unwrap();
        w.step(&mut s).unwrap();
        assert_eq!(w.queues()[0].as_ref().unwrap().head_ttl(), Some(1));
        let rec = w.step(&mut s).unwrap();
        assert_eq!(
            rec.action,
            Action::Serve {
                user: 0,
                power: 1.0
            }
        );
        assert!(!rec.users[0].dropped);
        assert_eq!(rec.users[0].urgency, Some(0.0));
    }

    #[test]
    fn last_slot_packet_drops_when_idle() {
        let specs = vec![UserSpec::deadline(1.0, 1, 1.0, 1.0)];
        let mut w = World::new(
            specs.clone(),
            levels(),
            PathSource::replay(single_slot_path(true)),
        )
        .unwrap();
        let mut s = LdfState::with_debts(&specs, vec![-10.0]).unwrap();
        w.step(&mut s).unwrap();
        let rec = w.step(&mut s).unwrap();
        assert_eq!(rec.action, Action::Idle);
        assert!(rec.users[0].dropped);
        assert_eq!(rec.users[0].urgency, Some(1.0));
    }

    #[test]
    fn exhausted_replay_is_an_error() {
        let specs = vec![UserSpec::throughput(0.1, 1.0, 0.5)];
        let path = SamplePath {
            channels: vec![],
            arrivals: vec![],
        };
        let mut w = World::new(specs, levels(), PathSource::replay(path)).unwrap();
        let mut s = DpcState::new(1, 1.0).unwrap();
        assert_eq!(w.step(&mut s).unwrap_err(), Error::PathExhausted(0));
    }

    #[test]
    fn replay_of_drawn_path_matches_live_run() {
        let c = fig2(10.0, 500);
        let path = SamplePath::draw(&c.users, c.seed, 1, 500);
        let mut live =
            World::new(c.users.clone(), c.levels, PathSource::seeded(c.seed, 1)).unwrap();
        let mut replay = World::new(c.users.clone(), c.levels, PathSource::replay(path)).unwrap();
        let mut a = DpcState::new(2, 10.0).unwrap();
        let mut b = DpcState::new(2, 10.0).unwrap();
        for _ in 0..500 {
            assert_eq!(live.step(&mut a).unwrap(), replay.step(&mut b).unwrap());
        }
    }

    #[test]
    fn identical_seeds_give_identical_results() {
        let c = fig2(100.0, 2000);
        assert_eq!(run(&c, 0).unwrap(), run(&c, 0).unwrap());
        assert_ne!(run(&c, 0).unwrap().users, run(&c, 1).unwrap().users);
    }

    #[test]
    fn schedulers_share_the_sample_path() {
        let c = fig2(10.0, 1000);
        let mut ldf = c.clone();
        ldf.scheduler = SchedulerKind::Ldf;
        let mut wd = World::new(c.users.clone(), c.levels, PathSource::seeded(c.seed, 0)).unwrap();
        let mut wl = World::new(c.users.clone(), c.levels, PathSource::seeded(c.seed, 0)).unwrap();
        let mut sd = c.scheduler.build(&c.users).unwrap();
        let mut sl = ldf.scheduler.build(&c.users).unwrap();
        for _ in 0..1000 {
            let (a, b) = (wd.step(sd.as_mut()).unwrap(), wl.step(sl.as_mut()).unwrap());
            assert_eq!((a.channels, a.arrivals), (b.channels, b.arrivals));
        }
    }

    #[test]
    fn accounting_identities_hold_every_slot() {
        let c = fig2(50.0, 5000);
        let mut w = World::new(c.users.clone(), c.levels, PathSource::seeded(3, 0)).unwrap();
        let mut s = c.scheduler.build(&c.users).unwrap();
        let mut energy = 0.0;
        for _ in 0..5000 {
            let rec = w.step(s.as_mut()).unwrap();
            energy += rec
                .action
                .served_user()
                .map_or(0.0, |u| rec.action.power_of(u));
            let m = w.metrics();
            assert_eq!(m.energy.iter().sum::<f64>(), energy);
            let q = w.queues()[0].as_ref().unwrap();
            assert_eq!(m.arrivals[0], m.services[0] + m.drops[0] + q.len() as u64);
            for i in 0..2 {
                assert!((0.0..=1.0).contains(&m.throughput(i)));
                assert!((0.0..=2.0).contains(&m.avg_power(i)));
            }
        }
    }

    #[test]
    fn invalid_config_rejected_before_running() {
        let mut c = fig2(10.0, 0);
        assert!(matches!(
            run(&c, 0),
            Err(Error::Config {
                field: "horizon",
                ..
            })
        ));
        c.horizon = 10;
        c.trace_every = 0;
        assert!(matches!(
            run_batch(&[c], Execution::Sequential),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn batch_modes_agree() {
        let configs = vec![fig2(10.0, 3000), fig2(100.0, 3000)];
        let seq = run_batch(&configs, Execution::Sequential).unwrap();
        let par = run_batch(&configs, Execution::Parallel).unwrap();
        assert_eq!(seq, par);
        assert_eq!(seq.len(), 4);
        assert_eq!((seq[3].config_index, seq[3].replication), (1, 1));
    }

    #[test]
    fn trace_is_subsampled() {
        let r = run(&fig2(10.0, 1000), 0).unwrap();
        assert_eq!(r.trace.len(), 10 * 2);
        assert_eq!(r.trace[0].t, 100);
        assert_eq!(r.trace[0].z_or_y, None);
        assert!(r.trace[1].z_or_y.is_some());
    }
}

//! System model: users, two-state channels, Bernoulli arrivals, deadline
//! queues and the per-slot feasible action set.
//!
//! Users are indexed by position (`0..N`). Deadline users own a FIFO of
//! packets, each carrying the number of slots it may still be served in.
//! Throughput users are saturated and have no queue.

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role-specific parameters of a user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum UserRole {
    /// Packets arrive w.p. `arrival_prob` each slot and expire after
    /// `deadline` servable slots.
    Deadline { arrival_prob: f64, deadline: u32 },
    /// Saturated source that must be served at long-run rate `delta`.
    Throughput { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    #[serde(flatten)]
    pub role: UserRole,
    /// Average power budget.
    pub gamma: f64,
    /// Probability that the channel is Good in a slot.
    pub good_prob: f64,
}

impl UserSpec {
    pub fn deadline(arrival_prob: f64, deadline: u32, gamma: f64, good_prob: f64) -> Self {
        Self {
            role: UserRole::Deadline {
                arrival_prob,
                deadline,
            },
            gamma,
            good_prob,
        }
    }

    pub fn throughput(delta: f64, gamma: f64, good_prob: f64) -> Self {
        Self {
            role: UserRole::Throughput { delta },
            gamma,
            good_prob,
        }
    }

    pub fn is_deadline(&self) -> bool {
        matches!(self.role, UserRole::Deadline { .. })
    }

    pub fn is_throughput(&self) -> bool {
        matches!(self.role, UserRole::Throughput { .. })
    }

    pub fn deadline_slots(&self) -> Option<u32> {
        match self.role {
            UserRole::Deadline { deadline, .. } => Some(deadline),
            UserRole::Throughput { .. } => None,
        }
    }

    pub fn arrival_prob(&self) -> f64 {
        match self.role {
            UserRole::Deadline { arrival_prob, .. } => arrival_prob,
            UserRole::Throughput { .. } => 0.0,
        }
    }

    /// Throughput target; zero for deadline users.
    pub fn delta(&self) -> f64 {
        match self.role {
            UserRole::Throughput { delta } => delta,
            UserRole::Deadline { .. } => 0.0,
        }
    }

    /// Checks parameter ranges; `user` is only used in the error message.
    pub fn validate(&self, user: usize, levels: &PowerLevels) -> Result<()> {
        let bad = |field, reason: String| Error::UserSpec {
            user,
            field,
            reason,
        };
        if !(0.0..=levels.p_high()).contains(&self.gamma) {
            return Err(bad(
                "gamma",
                format!("must lie in [0, {}], got {}", levels.p_high(), self.gamma),
            ));
        }
        if !(0.0..=1.0).contains(&self.good_prob) {
            return Err(bad(
                "good_prob",
                format!("must lie in [0, 1], got {}", self.good_prob),
            ));
        }
        match self.role {
            UserRole::Deadline {
                arrival_prob,
                deadline,
            } => {
                if !(0.0..=1.0).contains(&arrival_prob) {
                    return Err(bad(
                        "arrival_prob",
                        format!("must lie in [0, 1], got {arrival_prob}"),
                    ));
                }
                if deadline == 0 {
                    return Err(bad("deadline", "must be at least 1".into()));
                }
            }
            UserRole::Throughput { delta } => {
                if !(0.0..=1.0).contains(&delta) {
                    return Err(bad("delta", format!("must lie in [0, 1], got {delta}")));
                }
            }
        }
        Ok(())
    }
}

/// The two positive transmit power levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPowerLevels", into = "RawPowerLevels")]
pub struct PowerLevels {
    p_low: f64,
    p_high: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPowerLevels {
    p_low: f64,
    p_high: f64,
}

impl TryFrom<RawPowerLevels> for PowerLevels {
    type Error = Error;
    fn try_from(raw: RawPowerLevels) -> Result<Self> {
        PowerLevels::new(raw.p_low, raw.p_high)
    }
}

impl From<PowerLevels> for RawPowerLevels {
    fn from(l: PowerLevels) -> Self {
        RawPowerLevels {
            p_low: l.p_low,
            p_high: l.p_high,
        }
    }
}

impl PowerLevels {
    pub fn new(p_low: f64, p_high: f64) -> Result<Self> {
        if p_low > 0.0 && p_low < p_high && p_high.is_finite() {
            Ok(Self { p_low, p_high })
        } else {
            Err(Error::PowerLevels { p_low, p_high })
        }
    }

    pub fn p_low(&self) -> f64 {
        self.p_low
    }

    pub fn p_high(&self) -> f64 {
        self.p_high
    }

    /// Power needed for a successful transmission over `channel`.
    pub fn required(&self, channel: Channel) -> f64 {
        match channel {
            Channel::Bad => self.p_high,
            Channel::Good => self.p_low,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    Bad,
    Good,
}

/// Channel state of every user for one slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelState(pub Vec<Channel>);

impl ChannelState {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, user: usize) -> Option<Channel> {
        self.0.get(user).copied()
    }
}

/// Draws one channel state per user; each is Good w.p. `good_prob`.
pub fn sample_channels<R: Rng + ?Sized>(specs: &[UserSpec], rng: &mut R) -> ChannelState {
    ChannelState(
        specs
            .iter()
            .map(|s| {
                if rng.random::<f64>() < s.good_prob {
                    Channel::Good
                } else {
                    Channel::Bad
                }
            })
            .collect(),
    )
}

/// Draws the arrival indicator of every user. Throughput users never
/// receive arrivals and consume no randomness.
pub fn sample_arrivals<R: Rng + ?Sized>(specs: &[UserSpec], rng: &mut R) -> Vec<bool> {
    specs
        .iter()
        .map(|s| match s.role {
            UserRole::Deadline { arrival_prob, .. } => rng.random::<f64>() < arrival_prob,
            UserRole::Throughput { .. } => false,
        })
        .collect()
}

/// Selectable power set `{0, level}` of one user in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSet {
    pub level: f64,
}

impl PowerSet {
    pub fn contains(&self, power: f64) -> bool {
        power == 0.0 || power == self.level
    }

    pub fn as_array(&self) -> [f64; 2] {
        [0.0, self.level]
    }
}

pub fn feasible_powers(channels: &ChannelState, levels: &PowerLevels) -> Vec<PowerSet> {
    channels
        .0
        .iter()
        .map(|&c| PowerSet {
            level: levels.required(c),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Packet {
    /// Slots left in which the packet may still be served, counting the
    /// current one.
    pub ttl: u32,
}

/// FIFO of packets sharing a common deadline.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DeadlineQueue {
    ttls: VecDeque<u32>,
    deadline: u32,
}

impl DeadlineQueue {
    pub fn new(deadline: u32) -> Self {
        Self {
            ttls: VecDeque::new(),
            deadline,
        }
    }

    /// Builds a queue from explicit ttls (head first). Returns `None` if the
    /// ttls are not strictly increasing within `[1, deadline]`.
    pub fn from_ttls(deadline: u32, ttls: impl IntoIterator<Item = u32>) -> Option<Self> {
        let q = Self {
            ttls: ttls.into_iter().collect(),
            deadline,
        };
        q.is_well_formed().then_some(q)
    }

    pub fn deadline(&self) -> u32 {
        self.deadline
    }

    pub fn len(&self) -> usize {
        self.ttls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ttls.is_empty()
    }

    pub fn head_ttl(&self) -> Option<u32> {
        self.ttls.front().copied()
    }

    pub fn packets(&self) -> impl Iterator<Item = Packet> + '_ {
        self.ttls.iter().map(|&ttl| Packet { ttl })
    }

    pub fn is_well_formed(&self) -> bool {
        self.ttls.iter().all(|&t| t >= 1 && t <= self.deadline)
            && self
                .ttls
                .iter()
                .zip(self.ttls.iter().skip(1))
                .all(|(a, b)| a < b)
    }

    /// Slot-boundary transition. Serves the head if `served`, drops the head
    /// if it was left unserved on its last slot, ages the rest by one slot,
    /// then appends the arrival. Returns whether a packet was dropped.
    pub fn advance(&mut self, served: bool, arrival: bool) -> Result<bool, QueueError> {
        let before = self.ttls.len();
        if served && self.ttls.pop_front().is_none() {
            return Err(QueueError::ServeEmpty);
        }
        let dropped = !served && self.ttls.front() == Some(&1);
        if dropped {
            self.ttls.pop_front();
        }
        for ttl in self.ttls.iter_mut() {
            *ttl -= 1;
        }
        debug_assert!(self.ttls.front().is_none_or(|&t| t >= 1));
        if arrival {
            self.ttls.push_back(self.deadline);
        }
        debug_assert_eq!(
            self.ttls.len(),
            before.saturating_sub(served as usize) + arrival as usize - dropped as usize
        );
        debug_assert!(self.is_well_formed());
        Ok(dropped)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum QueueError {
    #[error("serve requested on an empty queue")]
    ServeEmpty,
}

/// Slot decision: stay silent, or let one user transmit at the power its
/// channel requires.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Idle,
    Serve { user: usize, power: f64 },
}

impl Action {
    pub fn served_user(&self) -> Option<usize> {
        match *self {
            Action::Serve { user, .. } => Some(user),
            Action::Idle => None,
        }
    }

    pub fn power_of(&self, user: usize) -> f64 {
        match *self {
            Action::Serve { user: u, power } if u == user => power,
            _ => 0.0,
        }
    }

    pub fn serves(&self, user: usize) -> bool {
        self.served_user() == Some(user)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Idle => write!(f, "idle"),
            Action::Serve { user, power } => write!(f, "serve({},{})", user + 1, power),
        }
    }
}

/// Candidate actions in evaluation order: `Serve` for every user in
/// ascending index, then `Idle`. Deadline users with an empty queue are
/// skipped. `queues[i]` is `Some` exactly for deadline users.
pub fn candidate_actions(
    channels: &ChannelState,
    levels: &PowerLevels,
    queues: &[Option<DeadlineQueue>],
) -> Vec<Action> {
    let mut out = Vec::with_capacity(channels.len() + 1);
    for (user, &channel) in channels.0.iter().enumerate() {
        if queues
            .get(user)
            .and_then(Option::as_ref)
            .is_some_and(|q| q.is_empty())
        {
            continue;
        }
        out.push(Action::Serve {
            user,
            power: levels.required(channel),
        });
    }
    out.push(Action::Idle);
    out
}

/// Checks that `action` is one of the slot's candidates.
pub fn check_action(
    action: &Action,
    channels: &ChannelState,
    levels: &PowerLevels,
    queues: &[Option<DeadlineQueue>],
) -> Result<()> {
    if let Action::Serve { user, power } = *action {
        let channel = channels.get(user).ok_or(Error::UnknownUser(user))?;
        let required = levels.required(channel);
        if power != required {
            return Err(Error::InfeasiblePower {
                user,
                power,
                required,
            });
        }
        if queues
            .get(user)
            .and_then(Option::as_ref)
            .is_some_and(|q| q.is_empty())
        {
            return Err(Error::ServeEmpty(user));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn levels() -> PowerLevels {
        PowerLevels::new(1.0, 2.0).unwrap()
    }

    #[test]
    fn degenerate_channel_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let specs = [
            UserSpec::throughput(0.1, 1.0, 1.0),
            UserSpec::throughput(0.1, 1.0, 0.0),
        ];
        for _ in 0..1000 {
            let s = sample_channels(&specs, &mut rng);
            assert_eq!(s.0, vec![Channel::Good, Channel::Bad]);
        }
    }

    #[test]
    fn good_fraction_matches_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let specs = [UserSpec::throughput(0.1, 1.0, 0.4)];
        let n = 1_000_000;
        let good = (0..n)
            .filter(|_| sample_channels(&specs, &mut rng).0[0] == Channel::Good)
            .count();
        let frac = good as f64 / n as f64;
        assert!((frac - 0.4).abs() <= 0.002, "{frac}");
    }

    #[test]
    fn degenerate_arrival_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let specs = [
            UserSpec::deadline(0.0, 5, 1.0, 0.5),
            UserSpec::deadline(1.0, 5, 1.0, 0.5),
            UserSpec::throughput(0.5, 1.0, 0.5),
        ];
        for _ in 0..1000 {
            assert_eq!(sample_arrivals(&specs, &mut rng), vec![false, true, false]);
        }
    }

    #[test]
    fn arrival_rate_matches_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let specs = [UserSpec::deadline(0.35, 10, 1.0, 0.5)];
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| sample_arrivals(&specs, &mut rng)[0])
            .count();
        let rate = hits as f64 / n as f64;
        assert!((rate - 0.35).abs() <= 0.002, "{rate}");
    }

    #[test]
    fn feasible_power_sets() {
        let s = ChannelState(vec![Channel::Bad, Channel::Good]);
        let sets = feasible_powers(&s, &levels());
        assert_eq!(sets[0].as_array(), [0.0, 2.0]);
        assert_eq!(sets[1].as_array(), [0.0, 1.0]);
        assert!(!sets[0].contains(1.0));
    }

    #[test]
    fn power_levels_reject_degenerate() {
        assert!(PowerLevels::new(1.0, 1.0).is_err());
        assert!(PowerLevels::new(0.0, 2.0).is_err());
        assert!(PowerLevels::new(2.0, 1.0).is_err());
    }

    #[test]
    fn candidates_follow_id_order_then_idle() {
        let s = ChannelState(vec![Channel::Good, Channel::Bad]);
        let queues = vec![None, None];
        assert_eq!(
            candidate_actions(&s, &levels(), &queues),
            vec![
                Action::Serve {
                    user: 0,
                    power: 1.0
                },
                Action::Serve {
                    user: 1,
                    power: 2.0
                },
                Action::Idle
            ]
        );
    }

    #[test]
    fn empty_deadline_queue_is_not_a_candidate() {
        let s = ChannelState(vec![Channel::Good]);
        let queues = vec![Some(DeadlineQueue::new(4))];
        assert_eq!(
            candidate_actions(&s, &levels(), &queues),
            vec![Action::Idle]
        );
        assert_eq!(
            candidate_actions(&ChannelState(vec![]), &levels(), &[]),
            vec![Action::Idle]
        );
    }

    #[test]
    fn unserved_last_slot_packet_drops() {
        let mut q = DeadlineQueue::from_ttls(10, [1]).unwrap();
        assert!(q.advance(false, false).unwrap());
        assert!(q.is_empty());
    }

    #[test]
    fn served_last_slot_packet_does_not_drop() {
        let mut q = DeadlineQueue::from_ttls(10, [1]).unwrap();
        assert!(!q.advance(true, false).unwrap());
        assert!(q.is_empty());
    }

    #[test]
    fn serve_then_age_then_arrive() {
        let mut q = DeadlineQueue::from_ttls(10, [3, 7]).unwrap();
        assert!(!q.advance(true, true).unwrap());
        assert_eq!(q, DeadlineQueue::from_ttls(10, [6, 10]).unwrap());
    }

    #[test]
    fn serve_on_empty_is_an_error() {
        let mut q = DeadlineQueue::new(3);
        assert_eq!(q.advance(true, false), Err(QueueError::ServeEmpty));
    }

    #[test]
    fn unit_deadline_packet_gets_one_servable_slot() {
        let mut q = DeadlineQueue::new(1);
        q.advance(false, true).unwrap();
        assert_eq!(q.head_ttl(), Some(1));
        assert!(!q.advance(true, false).unwrap());
        q.advance(false, true).unwrap();
        assert!(q.advance(false, false).unwrap());
    }

    #[test]
    fn check_action_rejects_wrong_power() {
        let s = ChannelState(vec![Channel::Bad]);
        let err = check_action(
            &Action::Serve {
                user: 0,
                power: 1.0,
            },
            &s,
            &levels(),
            &[None],
        );
        assert!(matches!(err, Err(Error::InfeasiblePower { .. })));
        let err = check_action(
            &Action::Serve {
                user: 3,
                power: 1.0,
            },
            &s,
            &levels(),
            &[None],
        );
        assert_eq!(err, Err(Error::UnknownUser(3)));
    }

    #[test]
    fn spec_validation_names_field() {
        let l = levels();
        let err = UserSpec::deadline(0.5, 0, 0.7, 0.4)
            .validate(0, &l)
            .unwrap_err();
        assert!(err.to_string().contains("deadline"));
        let err = UserSpec::throughput(0.4, 3.0, 0.4)
            .validate(1, &l)
            .unwrap_err();
        assert!(err.to_string().contains("gamma"));
    }

    proptest! {
        #[test]
        fn queue_transitions_conserve_and_stay_ordered(
            deadline in 1u32..12,
            steps in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..200),
        ) {
            let mut q = DeadlineQueue::new(deadline);
            for (serve, arrive) in steps {
                let served = serve && !q.is_empty();
                let before = q.len();
                let dropped = q.advance(served, arrive).unwrap();
                prop_assert_eq!(
                    q.len() as i64,
                    (before as i64 - served as i64).max(0) + arrive as i64 - dropped as i64
                );
                prop_assert!(q.is_well_formed());
            }
        }

        #[test]
        fn candidates_are_distinct_feasible_and_end_idle(
            chans in proptest::collection::vec(any::<bool>(), 0..6),
            nonempty in proptest::collection::vec(proptest::option::of(any::<bool>()), 0..6),
        ) {
            let n = chans.len().min(nonempty.len());
            let s = ChannelState(chans[..n].iter().map(|&g| if g { Channel::Good } else { Channel::Bad }).collect());
            let queues: Vec<_> = nonempty[..n].iter().map(|o| o.map(|full| {
                if full { DeadlineQueue::from_ttls(5, [2]).unwrap() } else { DeadlineQueue::new(5) }
            })).collect();
            let cands = candidate_actions(&s, &levels(), &queues);
            prop_assert_eq!(cands.last(), Some(&Action::Idle));
            let sets = feasible_powers(&s, &levels());
            let mut seen = std::collections::HashSet::new();
            for a in &cands[..cands.len() - 1] {
                let Action::Serve { user, power } = *a else { panic!("idle before end") };
                prop_assert!(seen.insert(user));
                prop_assert!(power > 0.0 && sets[user].contains(power));
            }
        }
    }
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid power levels: need 0 < p_low < p_high, got p_low={p_low}, p_high={p_high}")]
    PowerLevels { p_low: f64, p_high: f64 },

    #[error("user {user}: `{field}` {reason}")]
    UserSpec {
        user: usize,
        field: &'static str,
        reason: String,
    },

    #[error("invalid experiment config: `{field}` {reason}")]
    Config { field: &'static str, reason: String },

    #[error("user {0} does not exist")]
    UnknownUser(usize),

    #[error("user {0} was served but its queue is empty")]
    ServeEmpty(usize),

    #[error("user {user}: power {power} is not the required level {required} for its channel")]
    InfeasiblePower {
        user: usize,
        power: f64,
        required: f64,
    },

    #[error("sample path exhausted after {0} slots")]
    PathExhausted(usize),

    #[error("sample path covers {path} users but the instance has {users}")]
    PathShape { path: usize, users: usize },

    #[error(
        "oracle instance too large: {users} users over {slots} slots (limit 3 users, 14 slots)"
    )]
    OracleTooLarge { users: usize, slots: usize },
}

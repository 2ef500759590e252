//! Crate-wide error type.

use crate::topology::{ClientId, ServerId};

/// Errors surfaced by the simulator.
///
/// Configuration problems carry the offending key so callers can report
/// actionable messages; everything else maps onto the failure modes of the
/// individual subsystems.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value violates an invariant. `key` names the field.
    #[error("invalid config: {key}: {reason}")]
    InvalidConfig { key: String, reason: String },

    /// The configuration document could not be parsed at all.
    #[error("config parse error: {0}")]
    ConfigParse(String),

    /// An uplink with zero rate; the (client, server) pair cannot communicate.
    #[error("infeasible link between client {client} and server {server}")]
    InfeasibleLink { client: ClientId, server: ServerId },

    /// A coalition whose aggregate data size is zero cannot split payoffs.
    #[error("invalid coalition: {0}")]
    InvalidCoalition(String),

    /// `capacity * n_servers < n_clients`: no capacity-respecting partition exists.
    #[error("infeasible instance: {clients} clients, {servers} servers, capacity {capacity}")]
    InfeasibleInstance {
        clients: usize,
        servers: usize,
        capacity: usize,
    },

    /// A brute-force oracle was asked to enumerate an instance above its guard.
    #[error("enumeration guard: {0}")]
    EnumerationGuard(String),

    /// Refine was called on a profile pair with nothing left to refine.
    #[error("refine precondition violated: relaxed profile already equals the strict one")]
    RefineExhausted,

    /// Quality/weight vectors of different lengths were combined.
    #[error("dimension mismatch: qualities have length {qualities}, weights {weights}")]
    DimensionMismatch { qualities: usize, weights: usize },

    /// The bid objective grows without bound over the search domain.
    #[error("quality objective diverges: {0}")]
    Divergence(String),

    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A bid violates its structural preconditions.
    #[error("invalid bid from coalition {coalition}: {reason}")]
    InvalidBid { coalition: ServerId, reason: String },

    /// A preference profile does not cover the candidate set exactly once.
    #[error("invalid preference profile for client {client}: {reason}")]
    InvalidProfile { client: ClientId, reason: String },

    /// A serialized artifact failed structural validation.
    #[error("invalid serialized data: {0}")]
    InvalidData(String),

    #[error("aggregation requires at least one update")]
    EmptyAggregation,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code per the CLI contract: 1 for configuration errors,
    /// 2 for runtime errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig { .. } | Error::ConfigParse(_) => 1,
            _ => 2,
        }
    }
}

use thiserror::Error;

use crate::world::PhoneId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("energy charged to dead phone {0}")]
    ChargedDeadPhone(PhoneId),

    #[error("link {0}-{1} would close a cycle")]
    WouldCreateCycle(PhoneId, PhoneId),

    #[error("invariant violated at tick {tick}: {what}")]
    Invariant { tick: u64, what: String },
}

pub type Result<T> = std::result::Result<T, SimError>;

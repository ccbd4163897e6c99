//! Networked runtime for Dišimo devices.
//!
//! * [`wire`] defines the newline-delimited JSON protocol.
//! * [`hub`] is the transport-independent session hub and [`server`] puts it
//!   behind TCP and WebSocket listeners.
//! * [`host`] runs a simulated device against a hub.
//! * [`scenario`] replays a scripted multi-user session deterministically.

pub mod host;
pub mod hub;
pub mod scenario;
pub mod server;
pub mod wire;

use thiserror::Error;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] disimo_core::Error),

    #[error("{0}")]
    BadInput(String),

    #[error("{0}")]
    Connect(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    /// 2 for bad input, 3 for connectivity failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ServiceError::Connect(_) | ServiceError::Io(_) => 3,
            ServiceError::Core(_) | ServiceError::BadInput(_) => 2,
        }
    }
}

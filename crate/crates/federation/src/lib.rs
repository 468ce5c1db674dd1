//! Federation layer: the model-store server, the client training loop and
//! the message transports that connect them.
//!
//! The server owns one global model and one model per cluster key, applies
//! updates under per-model exclusive locks and never blocks readers on an
//! in-progress aggregation. Clients fetch, train locally and submit; raw site
//! data never crosses the transport — only snapshots and session deltas do.
//!
//! Two transports ship with the crate: [`transport::InProcessTransport`]
//! routes encoded frames straight into a server instance (the simulator
//! default), and [`transport::TcpTransport`] speaks the same length-prefixed
//! frames over a stream socket for multi-process runs.

pub mod client;
pub mod message;
pub mod server;
pub mod transport;

pub use client::{
    predict_for_client, run_training_cycle, ClientError, ClientSchedule, ClientState, CycleReport,
    ModelChoice, SessionOutcome, SessionResult, SessionTarget,
};
pub use message::{ErrorCode, Frame, ServerMessage, WireError};
pub use server::{
    FederationServer, RegisterOutcome, ServerConfig, ServerError, UpdateRecord,
};
pub use transport::{
    FaultInjector, FrameDirection, FrameInspector, InProcessTransport, ServerApi, TcpServerHandle,
    TcpTransport, TransportError,
};

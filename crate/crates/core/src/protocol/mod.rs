//! Client-server evaluation protocol.
//!
//! Frames are UTF-8 JSON objects `{"action": ..., "payload": ...}`, one per
//! line, over a TCP stream with strict request-reply alternation:
//!
//! | request                   | reply payload                                   |
//! |---------------------------|-------------------------------------------------|
//! | `CONFIG`, `null`          | `{"primitives": {name: arity}, "constants": [..], "options": {..}}` |
//! | `EXPERIMENT`, `[expr, ..]`| `{"fitness": [[f, ..], ..]}`, one tuple per expression |
//! | `SHUTDOWN`, `null`        | `{}`, then the server closes the connection     |
//!
//! Replies carry the request's action. A server that cannot handle a frame
//! answers `{"action": "ERROR", "payload": "<diagnostic>"}`. Non-finite
//! fitness values are sent as `null`.

mod client;
mod message;
mod server;

use std::io;

pub use client::{
    apply_server_options, client_run, pset_from_config, ClientRunError, ClientSettings, ClientTimeouts,
    Connection, RemoteAssessment, RemoteConstOpt, RequestCounts,
};
pub use message::{
    decode_message, encode_message, experiment_reply, fitness_to_value, parse_experiment_reply, Action,
    ConfigReply, Message,
};
pub use server::{serve, serve_connection, ExperimentHandler, ServeEnd};

use crate::expr::ExprError;

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("incomplete frame (missing trailing newline)")]
    IncompleteFrame,
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("unexpected reply: {0}")]
    BadReply(String),
    #[error("server reported an error: {0}")]
    Remote(String),
    #[error("timed out waiting for the {0} reply")]
    Timeout(Action),
    #[error("connection closed by peer")]
    ConnectionClosed,
    #[error("reply holds {found} fitness tuples for {expected} expressions")]
    LengthMismatch { expected: usize, found: usize },
    #[error("fitness tuple has {found} values, expected {expected}")]
    ObjectiveCount { expected: usize, found: usize },
    #[error("invalid primitive set: {0}")]
    Pset(#[from] ExprError),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

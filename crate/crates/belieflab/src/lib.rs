//! File formats, the live session service and the command-line front end
//! for `belieflab-core`.
//!
//! * [`schema`] reads and writes the canonical response CSV.
//! * [`session`] runs live subject sessions with a JSON-lines event log.
//! * [`http`] exposes sessions over HTTP for the web client.
//! * [`cli`] implements the `belieflab` binary.

pub mod cli;
pub mod http;
pub mod schema;
pub mod session;

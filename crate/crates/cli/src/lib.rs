//! Command-line front end and the HTTP annotation backend.

pub mod server;

//! HTTP service and benchmark driver over a preprocessed workspace.

pub mod bench;
pub mod server;

//! Pipeline orchestration behind the `synonymix` command.

pub mod codec;
pub mod config;
pub mod pipeline;
pub mod workspace;

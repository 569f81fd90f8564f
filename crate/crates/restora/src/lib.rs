//! File formats, threaded execution and the command line for
//! `restora-core`.
//!
//! - [`feeder_file`]: feeder and scenario JSON in engineering units.
//! - [`plan_file`], [`trace_file`], [`cluster_file`], [`manifest`]: run artifacts.
//! - [`compare`]: plan-to-plan differences.
//! - [`exec`]: a scoped-thread executor for agent solves.
//! - [`cli`]: the `restora` binary.

#![forbid(unsafe_code)]

pub mod cli;
pub mod cluster_file;
pub mod compare;
pub mod error;
pub mod exec;
pub mod feeder_file;
pub mod manifest;
pub mod num;
pub mod plan_file;
pub mod trace_file;

pub use error::InputError;
pub use exec::Threaded;
pub use feeder_file::{from_json_str, parse_feeder, to_json_string, FeederFile};
pub use plan_file::PlanFile;

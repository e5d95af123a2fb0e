//! Command-line and HTTP control surface for the pipeline harness.
//!
//! The binary is a thin argument parser over [`commands`]; the HTTP
//! surface in [`server`] serves the same store through [`views`].

pub mod commands;
pub mod prompt;
pub mod server;
pub mod views;
pub mod workspace;

pub use workspace::{CliError, Workspace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_LINT: i32 = 2;
pub const EXIT_BLOCKED: i32 = 3;
pub const EXIT_HALTED: i32 = 4;

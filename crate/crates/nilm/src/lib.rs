//! File formats, report rendering and the command-line front end for
//! [`nilm_core`].

pub mod cli;
pub mod config;
pub mod files;
pub mod ingest;
pub mod report;

pub use nilm_core;

//! Command-line front end: CSV ingestion, report rendering and subcommands.

pub mod cli;
pub mod io;
pub mod report;

pub use cli::run;

//! File formats, reports and the command-line front end for the
//! sentence-structure detector.
//!
//! * [`seb`]: the `SEB1` sentence-embedding bundle (corpus format).
//! * [`checkpoint`]: the `SDH1` model checkpoint.
//! * [`report`]: evaluation reports with byte-stable JSON output.
//! * [`history`]: training history as JSON lines.
//! * [`cli`]: the `sentstruct` command.

pub mod checkpoint;
pub mod cli;
mod error;
pub mod history;
pub mod report;
pub mod seb;

pub use error::{CliError, ExitCode};

//! Statistics over experiment records.

pub mod ks;
pub mod report;

pub use ks::{ks_two_sample, KsError, KsResult};
pub use report::{write_report, Report, ReportError};

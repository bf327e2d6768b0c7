//! Batch front-end for `mhbound`: JSON experiment configs in, JSON and CSV
//! reports out.

pub mod config;
pub mod report;
pub mod run;

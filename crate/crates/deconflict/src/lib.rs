//! File formats, run drivers and the command-line front end for the
//! deconfliction workbench built on `deconflict-core`.

pub mod checkpoint;
pub mod config;
pub mod report;
pub mod run;

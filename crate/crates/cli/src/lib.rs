//! Std front-end for `wncs-core`: the config file format, BLER tables and
//! λ/policy/seed sweeps written as CSV.

pub mod bler_table;
pub mod config;
pub mod sweep;

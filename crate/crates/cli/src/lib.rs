//! Command-line front end for the `ciric_dp` library.

pub mod args;
pub mod certify;
pub mod commands;
pub mod seeds;

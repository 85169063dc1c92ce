//! Support code for the `jigsaw` binary.

pub mod config;

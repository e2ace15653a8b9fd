//! Command-line and HTTP front ends for the knowledge base.

pub mod cli;
pub mod fitting;
pub mod ops;
pub mod service;

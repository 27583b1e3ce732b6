//! Instance files, random generation, batch audits and the command line.

pub mod audit;
pub mod cli;
pub mod generate;
pub mod io;
pub mod report;

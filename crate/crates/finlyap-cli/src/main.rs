//! Command-line front end for the contraction-certification toolkit.
//!
//! Binds run configuration (flags, or a JSON file with flags overriding)
//! to the library engines and emits a versioned JSON report — to standard
//! output by default, or to a directory together with plot-ready CSV
//! series. Exit codes are a total function of the outcome: 0 certified or
//! pass, 1 counterexample or fail, 2 inconclusive, 3 usage or
//! configuration error.

mod config;
mod parse;
mod run;

fn main() {
    std::process::exit(run::run());
}

//! Design of length-constrained, tree-based adaptive screening tests.
//!
//! The pipeline fits a generative model for item responses ([`copula`]) and a
//! Bayesian risk model ([`risk`]), simulates a target population from paired
//! posterior draws ([`population`]), grows item-budgeted regression trees
//! ([`tree`]), and picks thresholds and compares test lengths by expected
//! utility ([`decision`]). Finished tests are exported in a portable format
//! ([`deploy`]).

pub mod archive;
pub mod copula;
pub mod decision;
pub mod deploy;
pub mod items;
pub mod matrix;
pub mod population;
pub mod predicate;
pub mod risk;
pub mod simulate;
pub mod stats;
pub mod tree;

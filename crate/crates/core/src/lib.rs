//! Efficiency-optimal policy synthesis for labeled MDPs under
//! deterministic Rabin tasks.
//!
//! The pipeline: parse a model and an automaton ([`parsers`]), build their
//! product ([`model::build_product`]), decompose it into accepting end
//! components ([`graph`]), solve per-component ratio programs ([`lp`]),
//! perturb and stitch the policies ([`synthesis`]), and evaluate the result
//! analytically ([`chain`]) or by simulation ([`sim`]).

pub mod casestudies;
pub mod chain;
pub mod cli;
pub mod error;
pub mod graph;
pub mod lp;
pub mod model;
pub mod parsers;
pub mod sim;
pub mod synthesis;

pub use error::{Error, Result};

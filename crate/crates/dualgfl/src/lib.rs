//! Deterministic simulator of hierarchical federated learning under a
//! dual-level game: clients form server-anchored coalitions through a hedonic
//! game solved by Pareto-optimal partitioning, and coalitions compete for
//! training slots in a multi-attribute scoring auction with equilibrium bids
//! and budget-constrained winner selection.
//!
//! The crate is a library first: `topology` builds the network and cost
//! model, `preference` turns payoff estimates into ranked coalition
//! candidates, `hedonic` runs the partitioning game, `auction` prices and
//! selects coalitions, and `fedsim` drives full training rounds with a
//! built-in synthetic learner. `config` and `experiment` wrap everything for
//! the `dualgfl` binary.

pub mod error;
pub mod rng;
pub mod topology;
pub mod preference;
pub mod hedonic;
pub mod auction;
pub mod config;
pub mod fedsim;
pub mod experiment;

pub use error::{Error, Result};

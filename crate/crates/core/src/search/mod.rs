//! Combinatorial and stochastic design search.

pub mod exchange;
pub mod ga;
pub mod saturated;

pub use exchange::{exchange_compound, largest_magnitude_support, CompoundDesign};
pub use ga::{ga_minimax, CrossoverRule, ExactFitness, GAConfig, GaResult};
pub use saturated::{saturated_design, saturated_indices};

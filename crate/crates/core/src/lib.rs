//! Constrained architecture specialization over a layer-wise MBConv search
//! space.
//!
//! The pipeline runs in four steps:
//!
//! 1. [`progressive_builder::build_table`] fills an [`AccuracyTable`] one
//!    layer at a time against an [`Evaluator`], starting from a network made
//!    entirely of the largest block.
//! 2. [`AccuracyTable::to_loss_domain`] turns every row into the accuracy
//!    loss relative to that layer's best block.
//! 3. [`specializer::specialize`] runs a genetic algorithm over gene vectors
//!    to minimize the summed loss under a FLOPs or parameter ceiling, priced
//!    by [`cost_model`].
//! 4. [`analysis`] provides Kendall's tau, layer-importance profiles and
//!    curve exports.
//!
//! The `ponas` binary wires these steps into reproducible subcommands.

pub mod accuracy_table;
pub mod analysis;
pub mod cli;
pub mod cost_model;
pub mod error;
pub mod fmt;
pub mod progressive_builder;
pub mod search_space;
pub mod specializer;

pub use accuracy_table::{synth_table, AccuracyLossTable, AccuracyTable, SynthProfile, Table};
pub use cost_model::{
    architecture_cost, block_cost, satisfies, Constraint, CostReport, LayerCostTable, Metric,
};
pub use error::{Error, Result};
pub use progressive_builder::{build_table, Evaluator, SyntheticEvaluator};
pub use search_space::{
    decode, default_macro, enumerate_candidate_blocks, ArchitectureSpec, CandidateBlock,
    Chromosome, MacroArchitecture,
};
pub use specializer::{brute_force, specialize, EvolutionLog, GaConfig, Selection};

/// Version string embedded in every CLI output.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

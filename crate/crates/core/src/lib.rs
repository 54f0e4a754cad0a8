//! Recovers the generalized separable structure of a black-box function
//! and fits a symbolic model to it.
//!
//! The pipeline has four stages:
//!
//! 1. [`detect`] probes an [`Oracle`] with mixed second differences, finds
//!    repeated variables as minimal vertex cuts of the additive interaction
//!    graph, and splits the remaining variables into minimal blocks.
//! 2. [`detect::factor_partition`] splits each block into multiplicative
//!    factors with an offset-invariant rank-one test.
//! 3. [`fit`] fits every factor against a stream of expression skeletons,
//!    optimizing their continuous parameters with a low-dimensional simplex
//!    evolution engine.
//! 4. [`assemble`] combines the fitted factors by linear least squares over
//!    per-block subset products and validates on fresh samples.
//!
//! [`benchmark`] encodes the ten reference targets and runs the whole
//! protocol across seeds; [`pipeline`] glues the stages together.

pub mod assemble;
pub mod benchmark;
pub mod detect;
pub mod expr;
pub mod fit;
pub mod oracle;
pub mod pipeline;
pub mod seed;

pub use assemble::{AssembledModel, BasisTerm};
pub use benchmark::{CaseReport, CaseSpec, SuiteReport};
pub use detect::{Block, DetectConfig, FactorData, FactorRole, GsStructure, InteractionGraph};
pub use expr::{Expr, ExprError, Node};
pub use fit::{FactorModel, OptimizerConfig, Skeleton};
pub use oracle::{DomainBox, Oracle, SampleSet};
pub use pipeline::{PipelineConfig, PipelineError, PipelineOutcome};

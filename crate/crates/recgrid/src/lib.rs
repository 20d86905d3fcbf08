//! Depth-aware recurrent convolutional networks for size-preserving grid tasks.
//!
//! The crate implements two closely related architectures, DARC (a looped
//! pre-norm conv block writing into a residual stream) and DAMP (DARC plus a
//! per-position gated MLP inside the loop), together with everything needed
//! to train and compare them per task: a minimal reverse-mode autodiff core,
//! Muon and AdamW optimizers, difficulty-parameterized grid task generators,
//! an exact-match difficulty-sweep evaluator, and paired comparison
//! statistics (bootstrap CI, paired t, Wilcoxon, Cohen's d, Cliff's delta).

pub mod error;
pub mod tensor;
pub mod taskgen;
pub mod model;
pub mod optim;
pub mod trainer;
pub mod evaluator;
pub mod stats;
pub mod report;
pub mod config;
pub mod seeding;

pub use error::{Error, Result};
pub use taskgen::{ExamplePair, Grid, TaskSpec, NUM_COLORS};
pub use tensor::{Real, Tape, TensorId};

//! Adversarial negative sampling for implicit-feedback recommendation with a
//! sampling-decomposable generator.
//!
//! A matrix-factorization discriminator is trained on a self-normalized
//! importance-weighted logistic loss. Its negatives come from a rank-K
//! generator `Q(i|c) = sum_k x[c,k] y[i,k]` that draws in O(1) through alias
//! tables and is refitted by closed-form softmax updates.

pub mod alias;
pub mod bench;
pub mod checkpoint;
pub mod dataset;
pub mod discriminator;
pub mod error;
pub mod evaluator;
pub mod generator;
pub mod math;
pub mod negatives;
pub mod oracle;
pub mod par;
pub mod rng;
pub mod trainer;

pub use alias::AliasTable;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use dataset::{DatasetSplit, InteractionDataset};
pub use discriminator::{DiscriminatorParams, OptimizerState, WeightedNegatives};
pub use error::{Error, Result};
pub use evaluator::{evaluate, EvalReport};
pub use generator::{GeneratorParams, GeneratorTables};
pub use negatives::SamplerMode;
pub use par::Exec;
pub use trainer::{train, TrainConfig, TrainLog};

//! Feature-based matrix factorization.
//!
//! An instance carries a label and three sparse feature groups: global `γ`,
//! user `α` and item `β`. The raw score is
//!
//! ```text
//! y = mu + Σ_j γ_j b^g_j + Σ_j α_j b^u_j + Σ_j β_j b^i_j + (Σ_j α_j p_j)ᵀ (Σ_j β_j q_j)
//! ```
//!
//! and is trained by stochastic gradient descent under squared, logistic or
//! smoothed-hinge loss. Data streams from a binary buffer through a background
//! prefetch queue, so training memory does not grow with the data.

pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod featuregen;
pub mod io;
pub mod loss;
pub mod model;
pub mod sparse;
pub mod trainer;

pub use error::{Error, FeatureGroup, ParseError, Result};
pub use loss::{LossKind, Prediction};
pub use model::{Model, ModelDims};
pub use sparse::{Instance, SparseVector};
pub use trainer::{
    init_model, sgd_step, train_block, train_epoch, FeedbackBlock, FeedbackRange, Regularization,
    TrainConfig, TrainReport, WriteBack,
};

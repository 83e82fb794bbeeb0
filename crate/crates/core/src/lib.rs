//! Sequential maximum-entropy-discrimination (MED) classifiers.
//!
//! A stream of batches is absorbed one time point at a time. Each update
//! solves a small log-barrier dual whose linear term carries the prior
//! built from all earlier batches, so old data never has to be refit.
//! The Laplacian variant additionally regularizes the kernel with graph
//! Laplacians of every batch (labeled or not), either exactly through a
//! recursive kernel or through a running spectral approximation.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the common `f64` instantiations.

pub mod datagen;
pub mod dual;
pub mod error;
pub mod graph;
pub mod kernel;
pub mod lapmed;
pub mod linalg;
pub mod persist;
pub mod scalar;
pub mod seqmed;

pub use dual::{fit_bias, solve_dual, BiasFit, DualProblem, DualSolution, SolveStatus, SolverOptions};
pub use error::{Error, Result};
pub use graph::{knn_heat_weights, laplacian, normalized_laplacian, LaplacianMatrix, WeightMatrix};
pub use kernel::{fit_tfidf, gram, FeatureMatrix, GramMatrix, KernelSpec};
pub use lapmed::{
    derive_hyperparams, ApproxState, GraphParams, KernelMode, LapFitReport, LapHyperparams, SeqLapMedModel,
};
pub use persist::{load_model, model_from_json, model_to_json, save_model, AnyModel};
pub use scalar::Real;
pub use seqmed::{Batch, CSchedule, FitReport, SeqMedModel, Step};

pub type Model = SeqMedModel<f64>;
pub type LapModel = SeqLapMedModel<f64>;
pub type AnyModel64 = AnyModel<f64>;
pub type Batch64 = Batch<f64>;
pub type Features = FeatureMatrix<f64>;
pub type Kernel = KernelSpec<f64>;

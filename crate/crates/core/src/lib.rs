//! Matrix-variate location mixtures of normals, X = Y + Bν1ₙᵀ with
//! Y ∼ N_{p,n}(μ1ₙᵀ, Σ⊗Iₙ): exact samplers for lᵀSx̄ and lᵀS⁻¹x̄,
//! their high-dimensional normal limits, the density of X under
//! truncated-normal mixing, and a Monte Carlo harness that checks the
//! limits numerically.

pub mod asymptotics;
pub mod checks;
pub mod density;
pub mod distributions;
mod error;
pub mod linalg;
pub mod mc_harness;
pub mod model_core;
pub mod normal;
pub mod parallel;
mod rng;
pub mod stochastic_reps;

pub use asymptotics::{standardize, AsymptoticParams, CorollaryParams, Standardizer, TraceTerm};
pub use distributions::NuDistribution;
pub use error::{Error, Result};
pub use mc_harness::{ExperimentConfig, GofReport, KdeGrid, SampleSet};
pub use model_core::ModelSpec;
pub use rng::RngStream;
pub use stochastic_reps::{ProductDraw, ProductKind, ProductSampler};

//! Policy-gradient dynamics on bandits and tabular gridworlds.

pub mod analytics;
pub mod baselines;
pub mod env;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod policy;
pub mod rng;
pub mod scalar;
pub mod theory;

pub use baselines::BaselineKind;
pub use env::{BanditSpec, EnvSpec, GridworldSpec, Trajectory};
pub use error::{Error, Result};
pub use estimators::{EstimatorConfig, GradientKind, LambdaChoice, SamplerKind, StepSchedule};
pub use policy::PolicyKind;
pub use rng::RandomStream;
pub use scalar::Scalar;

pub type Policy = policy::PolicyParams<f64>;
pub type Policy32 = policy::PolicyParams<f32>;
pub type GradEstimate = estimators::GradEstimate<f64>;
pub type GradEstimate32 = estimators::GradEstimate<f32>;

//! Numerical laboratory for the two-dimensional one-component plasma.
//!
//! The geometric and energetic layers are generic over [`Scalar`] (f32 or f64); the
//! statistical and experiment layers work in f64. The aliases below fix f64.

pub mod dlr;
pub mod electric;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod loctrans;
pub mod movefn;
pub mod observables;
pub mod partition;
pub mod profile;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod snapshot;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Point = geometry::Point<f64>;
pub type PointConfig = geometry::PointConfig<f64>;
pub type Disk = geometry::Disk<f64>;
pub type Window = geometry::Window<f64>;
pub type DyadicPartition = partition::DyadicPartition<f64>;
pub type EnergyBreakdown = energy::EnergyBreakdown<f64>;
pub type ChainPlan = sampler::ChainPlan<f64>;
pub type ChainState = sampler::ChainState<f64>;

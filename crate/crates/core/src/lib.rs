//! Distributed estimation of random-feature regression weights over agent networks.
//!
//! Each agent observes `y_{i,t} = H_{i,t}θ + v_{i,t}` where the rows of
//! `H_{i,t}` are random cosine features of its local inputs, and updates
//!
//! ```text
//! θ̂_{i,t+1} = Σ_j P_ij θ̂_{j,t} + α H_{i,t}ᵀ (y_{i,t} - H_{i,t} θ̂_{i,t})
//! ```
//!
//! with `P = I - αL` built from the graph Laplacian. The crate provides the
//! simulation ([`estimator`]), the mean and second-moment error models
//! ([`analysis`]), and a Monte-Carlo harness ([`harness`]).
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the common `f64` instantiation.

pub mod analysis;
pub mod error;
pub mod estimator;
pub mod features;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod observation;
pub mod rng;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type FeatureMap64 = features::FeatureMap<f64>;
pub type FeatureMap32 = features::FeatureMap<f32>;
pub type MixingMatrix64 = network::MixingMatrix<f64>;
pub type MixingMatrix32 = network::MixingMatrix<f32>;
pub type DataPool64 = observation::DataPool<f64>;
pub type SyntheticModel64 = observation::SyntheticModel<f64>;
pub type AgentBatch64 = observation::AgentBatch<f64>;
pub type NetworkState64 = estimator::NetworkState<f64>;
pub type NetworkState32 = estimator::NetworkState<f32>;
pub type ErrorTrace64 = estimator::ErrorTrace<f64>;
pub type SystemMatrices64 = analysis::SystemMatrices<f64>;
pub type SpectralReport64 = analysis::SpectralReport<f64>;
pub type AggregateResult64 = harness::AggregateResult<f64>;

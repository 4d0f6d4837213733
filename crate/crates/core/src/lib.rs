//! Simulation of MEC-assisted wireless VR: FoV mobility and prediction,
//! Rayleigh-fading multicast/unicast downlinks, rendering-latency models and
//! reinforcement-learning controllers for user association and rendering
//! placement.

// `!(x > 0)` is used on purpose so NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod channel;
pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod latency;
pub mod mobility;
pub mod model;
pub mod neural;
pub mod predictor;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Scalar used by the simulator and experiment harness.
pub type Real = f64;

pub type Topology = model::NetworkTopology<Real>;
pub type Phy = model::PhyParams<Real>;
pub type Rendering = model::RenderingParams<Real>;
pub type Channels = channel::ChannelRealization<Real>;
pub type Mlp = neural::Mlp<Real>;
pub type Gru = neural::GruClassifier<Real>;
pub type Params = neural::ParameterSet<Real>;
pub type CentralizedDqn = agents::CentralizedDqn<Real>;
pub type DistributedDqn = agents::DistributedDqn<Real>;
pub type CentralizedAc = agents::CentralizedAc<Real>;
pub type DistributedAc = agents::DistributedAc<Real>;
pub type FovPredictor = predictor::FovPredictor<Real>;

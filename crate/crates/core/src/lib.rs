//! Context-aware land-use configuration generation.
//!
//! The pipeline runs in stages:
//!
//! 1. [`geodata`] frames every residential community as a 1 km central square
//!    wrapped by eight equal context squares, ingests the six CSV record
//!    kinds, and can synthesize a city with planted ground truth.
//! 2. [`features`] computes the explicit context features (house-price
//!    trend, POI ratio, public and private transport statistics).
//! 3. [`spatialgraph`] turns the feature matrix into a 9-node attributed
//!    graph and embeds it with a variational graph autoencoder.
//! 4. [`landuse`] quantifies configurations as `m × n × n` count tensors and
//!    labels them by the harmonic quality score.
//! 5. [`advplanner`] trains the three-way adversarial planner and the
//!    AVG/MAX/VAE baselines.
//! 6. [`scoring`] fits the random-forest scoring model used for evaluation.
//!
//! [`cli`] wires the stages together behind the `lucgen` binary.

pub mod advplanner;
pub mod cli;
pub mod error;
pub mod features;
pub mod geodata;
pub mod landuse;
pub mod numerics;
pub mod scoring;
pub mod spatialgraph;

pub use error::{Error, Result};

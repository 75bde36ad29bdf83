//! Discrete denoising diffusion for graphs with categorical node and edge
//! attributes, plus a Gaussian baseline, structural features, a graph
//! transformer denoiser and sample-quality metrics.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod datagen;
pub mod denoiser;
pub mod engine;
pub mod error;
pub mod features;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod noise;
pub mod pipeline;

pub use error::{Error, Result};

//! Serket: build large probabilistic models by connecting small ones.

pub mod channel;
pub mod cli;
pub mod connector;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod message;
pub mod metrics;
pub mod mlda;
pub mod module;
pub mod npylm;
pub mod pylm;
pub mod rng;
pub mod synth;

//! Mode-seeking regularization for conditional GANs, trained and evaluated on
//! synthetic Gaussian-mixture data.
//!
//! Layers, bottom up: [`tensor`] and [`autodiff`] (a small reverse-mode
//! engine), [`nn`] (MLPs and Adam), [`gan`] (objectives), [`data`]
//! (mixtures and sampling), [`metrics`] (NDB, JSD, diversity, coverage),
//! [`trainer`] (training loop, checkpoints, sweeps, interpolation) and
//! [`cli`].

pub mod autodiff;
pub mod data;
pub mod gan;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod checkpoint;
pub mod config;
pub mod trainer;
pub mod cli;
pub mod svg;

//! Training classifiers under label noise by learning soft labels against a
//! small clean meta-set.
//!
//! The pipeline: generate or load a dataset ([`data`], [`idx`]), corrupt its
//! labels, train with [`trainer`] using a [`config::TrainConfig`], and score
//! the result with [`eval`].

pub mod config;
pub mod data;
pub mod eval;
pub mod idx;
pub mod labels;
pub mod linalg;
pub mod losses;
pub mod model;
pub mod rng;
pub mod trainer;

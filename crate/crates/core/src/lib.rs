//! Core library for the SAWE (self-attention weighted ensemble) DDoS flow
//! classifier: a minimal f64 tensor/backprop engine, native gradient-boosted
//! trees and random forests, the flow-CSV preprocessing pipeline, the three
//! SA-CNN base architectures, the grid-searched weighted stacking ensemble,
//! and evaluation reporting.

pub mod artifact;
pub mod data;
pub mod ensemble;
pub mod models;
pub mod nn;
pub mod report;
pub mod seed;
pub mod tensor;
pub mod trees;

pub use tensor::Tensor;

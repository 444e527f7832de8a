//! CSI fingerprint localization with self-supervised pretraining.
//!
//! The crate bundles a small dense/convolutional network engine ([`tensor`],
//! [`nn`], [`loss`], [`optim`], [`gradcheck`]), the four localization
//! architectures ([`models`]), dataset handling ([`data`]), the two training
//! procedures ([`train`]) and the evaluation metrics ([`metrics`]).

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{DType, Element, Tensor};

//! Two-sensor structured autoencoders that identify the latent variables
//! shared by both sensors and disentangle each sensor's private variables
//! through a Jacobian-orthogonality penalty.

pub mod cli;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod images;
pub mod matrix;
pub mod mlp;
pub mod model;
pub mod parallel;
pub mod train;

pub use error::{Error, Result};
pub use matrix::Matrix;

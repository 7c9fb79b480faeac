//! Out-of-distribution detection by distilling frozen random networks on
//! original images and on low-rank (SVD-blurred) copies of them.
//!
//! A predictor network is trained to match one frozen target on the training
//! data and a separate frozen target on each degraded copy. At test time the
//! squared distance between the predictor and the first target is the
//! uncertainty of a sample.

pub mod degradations;
pub mod detection;
pub mod effective_rank;
pub mod error;
pub mod evaluation;
pub mod data_io;
pub mod linalg;
pub mod nn;
pub mod seed;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Dataset, ImageTensor, Shape};

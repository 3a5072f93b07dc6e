//! Predicting visual features from text: sentence vectorization (bag of
//! words, mean word embedding, GRU), an MLP regressing into a fixed visual
//! feature space, RMSprop training, and cosine caption retrieval.

pub mod cli;
pub mod data;
mod error;
pub mod linalg;
pub mod nn;
mod parallel;
pub mod retrieval;
pub mod text;
pub mod train;

pub use error::{Error, ErrorKind, Result};
pub use parallel::thread_pool;

//! The std side of the cough screening engine: WAV ingest, model files,
//! corpora on disk, training and evaluation drivers, the anonymous record
//! store, the HTTP service and the command line.

pub mod cli;
pub mod config;
pub mod corpus_io;
pub mod engine;
pub mod model_io;
pub mod pipeline;
pub mod records;
pub mod report;
pub mod service;
pub mod training;
pub mod wav;

pub use engine::{Engine, Models, Screening};

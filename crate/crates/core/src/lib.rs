//! Transfer-learning settings for sentence encoders on semantic similarity.
//!
//! The crate covers four ways of applying a sentence encoder to a scored
//! sentence-pair dataset:
//!
//! * unsupervised evaluation (UE): cosine of the two embeddings, no training;
//! * feature transfer (FT): a classifier head trained on frozen embeddings;
//! * network transfer (NT): classifier head and encoder trained end to end,
//!   optionally with the word embedding matrix;
//! * direct network transfer (DNT): the encoder (and optionally the word
//!   embedding matrix) trained so that embedding cosine matches the
//!   normalized gold score, with no classifier head.
//!
//! Everything runs on a small reverse-mode differentiation engine in
//! [`autodiff`].

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod embeddings;
pub mod encoders;
mod error;
pub mod experiment;
pub mod metrics;
pub mod synthetic;
pub mod trainer;
pub mod transfer;

pub use error::{Error, Result};

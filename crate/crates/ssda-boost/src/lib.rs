//! Boosting-based fine-tuning of a pretrained linear classifier over
//! extracted feature vectors, for semi-supervised domain adaptation.
//!
//! Given many labeled source samples, a handful of labeled target
//! samples and a pool of unlabeled target samples (all as feature
//! vectors from some frozen extractor), [`trainer::train`] appends
//! alternating supervised-adaptation and semi-supervised fine-tuning
//! blocks to the normalized initial classifier. Each block maps the
//! features through a frozen random nonlinear projection and fits one
//! ridge learner per class to Newton-boosting working responses.
//!
//! For the source-free setting, [`sourcegen`] synthesizes a labeled
//! stand-in source domain from the classifier's last linear layer, after
//! which training proceeds unchanged.
//!
//! Everything is deterministic given the seed.

pub mod dataset;
pub mod error;
pub mod logitboost;
pub mod mapping;
pub mod model_io;
pub mod ridge;
pub mod sampling;
pub mod sourcegen;
pub mod trainer;

pub use error::{Error, Result};

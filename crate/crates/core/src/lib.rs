//! Context-dependent word meaning from sentence images.
//!
//! Pipeline: train an encoder from role-ordered word vectors to sentence
//! images, adapt the input vectors per sentence with frozen weights,
//! aggregate seeded runs into per-attribute changes, turn changes into
//! context-effect measures, and score those measures against human
//! judgements with a single-boundary fit and a chance baseline.

pub mod ensemble;
pub mod error;
pub mod matching;
pub mod measures;
pub mod model;
pub mod network;
pub mod stats;
pub mod survey;
pub mod synthesis;

pub use error::{Error, Result};

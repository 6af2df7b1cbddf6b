//! Text and audio augmentation, feature extraction and attention fusion for
//! binary sarcasm classification.

pub mod audio;
pub mod augment;
pub mod corpus;
pub mod error;
pub mod features;
pub mod fusion;
pub mod trainer;

pub use error::{Error, Result};

//! Bilingual bag-of-words autoencoders for cross-language word and
//! document representations.

pub mod autoencoder;
pub mod bilingual;
pub mod classifier;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod gradcheck;
pub mod math;
pub mod model_io;
pub mod synth;
pub mod train;
pub mod tree;

pub use bilingual::{BilingualModel, Lang, Variant};
pub use error::{Error, Result};
pub use train::{train, TrainConfig, TrainData, TrainReport};

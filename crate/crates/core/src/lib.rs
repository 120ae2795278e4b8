//! Binary hyperdimensional computing classifier.
//!
//! Records are quantized and mapped through per-feature level memories into
//! bit-packed hypervectors, bundled into class prototypes, and refined by
//! retraining that also revisits correctly classified samples whose
//! similarity margin falls below a confidence threshold.

pub mod bundler;
pub mod datasets;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod hdvec;
pub mod memory;
pub mod model;

pub use bundler::Bundle;
pub use encoder::{EncodedSet, EncoderSchema};
pub use error::{HdcError, Result};
pub use hdvec::{HdRng, Hypervector, DEFAULT_DIM};
pub use memory::{ItemMemory, LevelMemory, QuantizationSchema};
pub use model::{AssociativeMemory, Prediction, TrainHistory, TrainSchedule};

//! Temporal sentence grounding over streaming video features.
//!
//! A twin network predicts, for every incoming frame, the probability that
//! it starts, lies in the middle of, or ends the event described by a
//! sentence query. The deployable ordinary network sees present and
//! compressed historical frames; a prophet network that also sees future
//! frames exists only during training and distils into it.
//!
//! * [`numerics`]: tensors, reverse-mode differentiation, AdamW.
//! * [`data`]: feature files, manifests, synthetic corpora.
//! * [`encoding`]: configuration, frame windows, query encoder.
//! * [`compressor`]: query-guided compression of long frame blocks.
//! * [`decoders`]: ordinary and prophet decoders, span predictor.
//! * [`model`]: the twin network.
//! * [`training`]: labels, losses, checkpoints, training loop.
//! * [`streaming`]: incremental per-frame inference.
//! * [`evaluation`]: candidate moments and R@n,IoU=m.
//! * [`cli`]: the `streamground` command.

pub mod cli;
pub mod compressor;
pub mod data;
pub mod decoders;
pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod streaming;
pub mod training;

pub use error::{Error, Result};

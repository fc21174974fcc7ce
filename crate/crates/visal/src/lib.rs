//! Video-saliency pipeline library: bottom-up channel-weighted feature
//! fusion, top-down key-object selection with local contrast enhancement, a
//! two-layer peephole convolutional LSTM head, and a full evaluation metric
//! suite, plus file codecs, a synthetic scene generator, and an end-to-end
//! sequential driver.

pub mod convlstm;
pub mod error;
pub mod image;
pub mod metrics;
pub mod selection;
pub mod tensor;
pub mod weighting;

pub use error::{Error, Result};

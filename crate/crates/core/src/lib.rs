//! Two-stage discrete-token text-to-speech on a synthetic speech world.
//!
//! The pipeline turns phone strings into audio through two sequence models:
//! a "reading" stage that maps text to semantic tokens (k-means codes of
//! pitch-normalized harmonic features) and a "speaking" stage that maps
//! semantic tokens to acoustic tokens (flattened residual-VQ codes), which
//! decode back to a waveform. Everything runs against a deterministic
//! synthetic speech world with an exact transcription oracle, so training
//! regimes (denoising pretraining, backtranslation, prompted generation,
//! best-of-n sampling) can be measured end to end without external data.

pub mod acoustic;
pub mod dsp;
pub mod eval;
pub mod model;
pub mod rng;
pub mod s1;
pub mod s2;
pub mod semantic;
pub mod synth;
pub mod wav;

use thiserror::Error;

/// Error type shared by the core pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates an operation's preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A configuration object is internally inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    /// A serialized artifact is malformed or of the wrong version.
    #[error("format error: {0}")]
    Format(String),
    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn invalid_config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

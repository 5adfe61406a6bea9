//! Differentiable sample-wise time-varying linear prediction.
//!
//! The crate provides all-pole filter kernels with analytic reverse-mode
//! gradients ([`lpc`]), brute-force references that check them
//! ([`oracle`]), a small reverse-mode tape that chains them ([`tape`]),
//! and a glottal source-filter vocoder ([`source`], [`params`], [`synth`])
//! trained against a multi-resolution spectral loss ([`loss`]).

pub mod bench;
pub mod cli;
pub mod error;
pub mod fit;
pub mod io;
pub mod loss;
pub mod lpc;
pub mod optim;
pub mod oracle;
pub mod params;
pub mod real;
pub mod scenario;
pub mod signal;
pub mod source;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use lpc::{CoeffTrack, ShiftedCoeffTrack};
pub use real::Real;
pub use signal::Signal;
pub use tape::{Op, Tape, Var};
pub use tensor::Tensor;

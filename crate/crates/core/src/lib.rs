//! Vocal–echoic keyword spotting: FMCW echo profiles and MFCCs feed two
//! residual CNNs whose posteriors are combined by late fusion, with a
//! synthetic acoustic simulator and a WER evaluation harness.

pub mod audio;
pub mod cli;
pub mod container;
pub mod error;
pub mod eval;
pub mod fmcw;
pub mod fusion;
pub mod mfcc;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};

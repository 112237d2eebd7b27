//! Deterministic split/merge image segmentation engine.
//!
//! The pipeline runs four stages over an 8-bit image:
//!
//! 1. [`watershed`] — flood the edge-energy map ([`edgemap`]) into primitive
//!    segments.
//! 2. [`coevolve`] — iterate interaction weights between primitive segments
//!    until similar ones mature into labeled zones.
//! 3. [`assign`] — attach every leftover segment to a zone by iterated
//!    deportation/immigration.
//! 4. [`merge`] — fuse similar adjacent zones with a (1,1+1) genetic
//!    algorithm over a binary edge chromosome.
//!
//! [`bench`] scores a segmentation against ground-truth boundary maps with
//! boundary precision/recall/F. Everything is deterministic under a fixed
//! [`PipelineConfig::seed`]; the only randomness is the [`rng::SplitMix64`]
//! stream consumed by stages 3 and 4.

pub mod assign;
pub mod bench;
pub mod config;
pub mod coevolve;
pub mod edgemap;
mod error;
pub mod image;
pub mod merge;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod watershed;

pub use config::PipelineConfig;
pub use error::{Error, Result};
pub use image::{ImageBuffer, LabelMap};
pub use pipeline::{run_pipeline, run_pipeline_full, PipelineRun, RunReport};

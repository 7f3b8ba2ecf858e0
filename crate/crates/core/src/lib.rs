//! Uncertainty quantification for generative language model outputs.
//!
//! The crate scores pre-generated model responses ([`GenerationRecord`]) with
//! information-based, sample-diversity, density-based, reflexive and
//! claim-level estimators, maps raw uncertainty to bounded confidence
//! ([`calibrate`]), and evaluates scores with prediction-rejection and
//! ranking metrics ([`metrics`]).
//!
//! Everything here is pure computation over in-memory values and builds
//! without `std` (an allocator is required). File formats, the remote NLI
//! client and the batch harness live in the `uqbench` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod calibrate;
pub mod catalog;
pub mod claim;
pub mod density;
pub mod diversity;
mod error;
pub mod info;
pub mod linalg;
pub mod math;
pub mod metrics;
pub mod record;
pub mod similarity;
pub mod text;

pub use calibrate::{CalibrationModel, NormalizerKind};
pub use catalog::{Level, Method, UncertaintyScore};
pub use error::{Error, Result};
pub use record::{CalibrationPair, ClaimLabel, ClaimSpan, GenerationRecord, RecordError, SampleResponse, TokenStep};
pub use similarity::{NliProbs, NliProvider, ProviderError, SimilarityMatrix, TextSimilarity};

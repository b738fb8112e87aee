//! Intrinsic light field decomposition.
//!
//! Splits a 4D light field `L(x,y,u,v)` into an angularly coherent
//! reflectance layer `R` and a single-channel shading layer `S` with
//! `L = R * S`. The pipeline runs a global 4D TV-L1 filter, derives albedo
//! and occlusion cues from the filtered volume, solves a per-view quadratic
//! Retinex energy, and finishes with a global coherence pass.

pub mod color;
pub mod cues;
pub mod error;
pub mod field;
pub mod pipeline;
pub mod retinex;
pub mod synth;
pub mod tv;
pub mod util;

pub use error::{LfError, Result};
pub use field::{EpiSlice, LightField, LogView, ScalarLightField, ViewImage};
pub use pipeline::{DecompositionResult, PipelineConfig};

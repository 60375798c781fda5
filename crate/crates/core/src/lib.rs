//! Video color harmonization with neighbor-fitted 3D lookup tables.
//!
//! Each frame is harmonized by a pluggable per-frame model, then refined by
//! a color table fitted to the (composite, harmonized) pairs of its
//! neighboring frames. Around that sit metrics, a flow-based temporal loss,
//! dataset synthesis and file formats.

pub mod dataset;
pub mod error;
pub mod frame;
pub mod io;
pub mod lut;
pub mod lutopt;
pub mod metrics;
pub mod pipeline;
pub mod synthetic;
pub mod temporal;

pub use error::{Error, Result};
pub use frame::{FlowField, Frame, Mask, PixelPair, Rgb, VideoSample};
pub use lut::{apply_lut, fit_lut_heuristic, invalid_ratio, ApplyResult, Lut3D};
pub use pipeline::{harmonize_video, FusionPolicy, Harmonizer, PipelineConfig};

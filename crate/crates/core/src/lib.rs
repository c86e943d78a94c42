//! Virtual try-on at toy scale: garment pre-alignment, flow warping, parsing and limb-aware fusion.
//!
//! The pipeline runs in three cascaded stages:
//!
//! 1. **Clothing warping** ([`pipeline::TryOnModel::run_mcw`]): the in-shop
//!    garment is pre-aligned to the person's clothing region in location and
//!    height ([`prealign`]), then a five-level pyramid of sub-flows is predicted
//!    and merged by a convolutional GRU into one appearance flow ([`flow`]).
//! 2. **Parsing estimation** ([`pipeline::TryOnModel::run_hpe`]): an
//!    encoder–decoder with squeeze-excitation predicts the 7-class parsing map of
//!    the person wearing the new garment.
//! 3. **Texture fusion** ([`pipeline::TryOnModel::run_ltf`]): a coarse try-on
//!    image is produced, then refined using patches of the person's arm pixels.
//!
//! Every objective used to train such a system lives in [`losses`], with
//! analytic gradients checked against finite differences.
//!
//! Networks are seeded toy-width stand-ins ([`nn`]); no pretrained weights are
//! involved. See the `examples/` directory for one runnable program per
//! capability.

pub mod cli;
pub mod error;
pub mod fixtures;
pub mod flow;
pub mod io;
pub mod losses;
pub mod nn;
pub mod person;
pub mod pipeline;
pub mod prealign;
pub mod tensor;

pub use error::{Error, Result};
pub use flow::{AppearanceFlow, FlowPyramid, PyramidMode};
pub use person::{Keypoint, KeypointMap, LimbMap, ParsingMap};
pub use pipeline::{Mode, PipelineConfig, TryOnBundle, TryOnInputs, TryOnModel};
pub use prealign::{PreAlignResult, Rect};
pub use tensor::{BinaryMask, ImageTensor, PatchSet};

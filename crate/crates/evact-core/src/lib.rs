//! Event-camera action understanding at desk scale.
//!
//! The crate has three layers:
//! - [`event`]: the event-stream data model, EVT1/CSV I/O, and a seeded
//!   synthetic scene generator;
//! - [`rep`]: frame representations — the adaptive binary slicer driven by
//!   a count-image difference rate, plus fixed-count / fixed-duration /
//!   voxel baselines and frame rendering;
//! - [`nn`], [`crue`], [`train`]: a small dense-tensor engine with reverse-mode
//!   gradients, the text-guided fusion + Gaussian uncertainty module built on
//!   it, and the end-to-end toy trainer / evaluator / retriever.

pub mod crue;
pub mod error;
pub mod event;
pub mod nn;
pub mod rep;
pub mod train;

pub use error::{EvactError, Result};
pub use event::{Event, EventStream, Polarity, StreamSlice};
pub use nn::Tensor;

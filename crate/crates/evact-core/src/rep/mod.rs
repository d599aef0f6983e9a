//! Frame representations: adaptive binary slicing plus fixed-count,
//! fixed-duration, and voxel baselines, and frame rendering/export.

mod afe;
mod baselines;
mod count;
mod frames;

pub use afe::{afe_slice, AfeConfig, AfeNode, AfePreset, AfeTree, TerminationReason};
pub use baselines::{fixed_count_slice, fixed_duration_slice, voxel_slice};
pub use count::{count_image, difference_rate, CountImage};
pub use frames::{
    read_frames, render_frames, write_frames, write_pgm, Boundary, Frame, FrameStack, SliceMethod,
};

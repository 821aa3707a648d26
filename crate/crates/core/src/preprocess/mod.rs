//! Raw recordings to fixed-length, normalized stance samples.

mod events;
mod filter;
mod footstep;
mod normalize;
mod pipeline;
mod segment;
mod spline;
mod sync;
mod types;

pub use events::{detect_gait_events, DEFAULT_THRESHOLD_FRACTION};
pub use filter::{butterworth_lowpass, butterworth_lowpass_with, Biquad, FilterPhase};
pub use footstep::{
    nearest_frame, standardize_footstep, standardize_footstep_to, CANVAS_H, CANVAS_W, FOOTSTEP_FRAMES,
};
pub use normalize::{channel_scales, denormalize_targets, normalize_joined, normalize_targets, GRAVITY};
pub use pipeline::{process_trial, PlateStream, PreprocessConfig, RawTrial, TrialOutput};
pub use segment::{segment_stances, Segmentation, DEFAULT_STANCE_LEN};
pub use spline::{resample_stance, NaturalCubicSpline, MIN_SEGMENT_LEN};
pub use sync::{rescale_events, synchronize_streams};
pub use types::{
    FootSide, GaitEvents, PressureSequence, StanceSample, SubjectMeta, CHANNEL_LABELS, GRF_V, NUM_CHANNELS,
};

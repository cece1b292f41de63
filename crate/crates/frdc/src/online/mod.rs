//! Encode-time enhancement: single-frame and sliding-window latent
//! rate-distortion descent with keep-best rounding, plus GOP orchestration
//! over the real bitstream.

mod optimize;
mod sequence;

pub use optimize::{
    lr_schedule, optimize_single_frame, optimize_window, window_loss, window_schedule, OptConfig,
    OptOutcome, OptStats, WindowConfig,
};
pub use sequence::{
    decode_sequence, encode_sequence, EncodedSequence, FrameStats, GopConfig, OptMode,
};

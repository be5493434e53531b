//! Closed-loop refinement of lossy image codecs.
//!
//! The loop feeds the residual between the once-decoded image and the
//! re-encoded iterate back into the iterate, so repeated passes through the
//! same codec move the reconstruction toward a fixed point of the codec.

pub mod bridge;
pub mod codec;
pub mod engine;
pub mod error;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod taylor;

pub use codec::{Bitstream, Codec, CodecDescriptor};
pub use engine::{run_cic, run_pipeline, InitMode, LoopConfig, LoopResult, SelectMode, Termination};
pub use error::{CicError, Result};
pub use image::Image;

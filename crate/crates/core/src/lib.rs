//! Sharp-to-blur teacher/student distillation for blur-robust detection of
//! AI-generated images.
//!
//! A frozen patch encoder feeds two head stacks. The teacher is trained on
//! sharp views with a focal loss and then frozen; the student sees
//! synthetically blurred views of the same images and is trained to match
//! the teacher's features and logits while keeping an ordinal structure
//! over blur severity.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod blur;
pub mod commands;
pub mod data;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod heads;
pub mod image;
pub mod label;
pub mod losses;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
pub use label::Label;

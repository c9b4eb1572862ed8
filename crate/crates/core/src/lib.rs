//! Sensory-bounded second-order perspective taking for two embodied agents.
//!
//! Agent A observes agent B through an egocentric camera and binaural
//! microphones; the engine predicts where B believes A is. Inference is
//! gated on whether A falls inside B's visual frustum: when it does, the
//! visual evidence is rotated into B's frame; when it does not, B's belief
//! is reconstructed from spatial audio, A's ego-motion, and persisted
//! orientation evidence.
//!
//! Modules, bottom-up: [`geometry`], [`scene`], [`audio`], [`evidence`],
//! [`engine`], [`stage2`], [`baselines`], [`bench`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod baselines;
pub mod bench;
pub mod engine;
pub mod evidence;
pub mod geometry;
pub mod scene;
pub mod seeding;
pub mod stage2;

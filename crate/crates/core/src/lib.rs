//! Synthetic blood-cell video generation, competence-based curriculum
//! scheduling, multi-view prediction aggregation and a small CNN trainer
//! to tie them together.

pub mod augment;
pub mod cli;
pub mod curriculum;
pub mod error;
pub mod labelnoise;
pub mod multiview;
pub mod rng;
pub mod synthcells;
pub mod trainer;

pub use error::{Error, Result};

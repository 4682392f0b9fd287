//! Non-neural machinery for solving ARC grid puzzles with a sequence model:
//! grids and tasks, token encoding, augmentation, cellular-automata task
//! generation, prefix-graph decoding against a pluggable likelihood oracle,
//! symbolic candidate filtering and symmetry-aggregated scoring.

pub mod augment;
mod float_serde;
pub mod automata;
pub mod encoding;
pub mod grid;
pub mod pipeline;
pub mod search;
pub mod select;
pub mod task;

pub use grid::{Color, ColorPermutation, ColorSet, Grid, Offset, D4};
pub use task::{GridPair, Submission, Task};

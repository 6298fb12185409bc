//! Polycube packing puzzles: geometry, exact-cover solving, generation,
//! an interactive episode environment and evaluation tooling.

pub mod assembly;
pub mod cover;
pub mod env;
pub mod eval;
pub mod gen;
pub mod palette;
pub mod puzzle;
pub mod render;
pub mod voxel;

pub use cover::{solve, SolveResult, SolveStatus};
pub use puzzle::{Difficulty, PuzzleInstance};
pub use voxel::{BoxDims, Coord, Rotation, Shape, Signature};

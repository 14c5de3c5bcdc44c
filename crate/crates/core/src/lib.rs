pub mod geometry;
pub mod mesh;
pub mod sbb;
pub mod kernels;
pub mod test_cases;
pub mod treecode;
pub mod solver;
pub mod diagnostics;
pub mod config;
pub mod output;
pub mod runner;

pub mod cluster;
pub mod eigen;
pub mod geometry;
pub mod grid;
pub mod jet;
pub mod kernel;
pub mod linalg;
pub mod magnetic;
pub mod symbol;
pub mod toeplitz;

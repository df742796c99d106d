pub mod csvd;
pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod geweke;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod sampler;
pub mod simulation;
pub mod special;
pub mod stiefel;
pub mod study;

pub mod expm;
pub mod hops;
pub mod walk;
pub mod fit;
pub mod stats;
pub mod barrier;
pub mod sonic;

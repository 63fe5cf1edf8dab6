pub mod coeffex;
pub mod problem;
pub mod rng;

pub mod linalg;
pub mod rng;
pub mod sequences;
pub mod transforms;
pub mod risk;
pub mod lp;
pub mod problems;
pub mod experiments;

pub mod baselines;
pub mod bench;
pub mod cli;
pub mod conic;
pub mod fk;
pub mod matrix;
pub mod report;
pub mod tightness;

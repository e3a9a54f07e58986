pub mod branching;
pub mod cli;
pub mod kernel;
pub mod model;
pub mod quadrature;
pub mod simulate;
pub mod spectrum;
pub mod stats;

pub mod data;
pub mod exec;
pub mod harness;
pub mod interaction;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod sparse;
pub mod store;

pub use exec::Exec;

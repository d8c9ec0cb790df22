pub mod analysis;
pub mod engine;
pub mod error;
pub mod essential;
pub mod experiments;
pub mod lattice;
pub mod models;
pub mod observables;
pub mod replicas;

pub use error::{Error, Result};

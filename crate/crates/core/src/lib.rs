//! A shared-nothing parallel query engine whose plans can contain
//! transducers: stateful, user-programmable operators that run once per
//! segment, either in-process or as a subprocess speaking a row-group pipe
//! protocol, with a bulk-synchronous-parallel runtime for iterative work.

pub mod bsp;
pub mod builtins;
pub mod datamodel;
pub mod engine;
pub mod error;
pub mod sqlfront;
pub mod transducer;

pub use error::{Error, Result};

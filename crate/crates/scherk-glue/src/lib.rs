//! Doubly periodic Scherk surfaces and their gluing into periodic minimal
//! surfaces by opening nodes.

pub mod analyzer;
pub mod config;
pub mod error;
pub mod forms;
pub mod mesh;
pub mod noded;
pub mod quad;
pub mod scherk;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};

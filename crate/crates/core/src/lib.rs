pub mod assembly;
pub mod config;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod output;
pub mod scheme;
pub mod sparse;
pub mod verify;

pub use error::{Error, Result};

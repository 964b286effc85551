pub mod certify;
pub mod error;
pub mod gen;
pub mod lattice;
pub mod maximize;
pub mod model;
mod par;
pub mod project;
pub mod report;
pub mod simulate;

pub use error::{Error, Result};

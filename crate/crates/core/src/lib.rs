pub mod cli;
pub mod error;
pub mod field;
pub mod groups;
pub mod hypergeom;
pub mod params;
pub mod protocol;
pub mod shamir;
pub mod sim;

pub use error::{Error, Result};

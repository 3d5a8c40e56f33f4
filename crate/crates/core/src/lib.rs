pub mod dataio;
pub mod diffcore;
pub mod error;
pub mod evalmetrics;
pub mod geomlayers;
pub mod model;
pub mod shapespace;

pub use error::{Error, Result};

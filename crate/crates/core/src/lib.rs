pub mod audio;
pub mod autodiff;
pub mod control;
pub mod curation;
pub mod error;
pub mod flame;
pub mod io;
pub mod metrics;
pub mod model;
pub mod synthetic;

pub use error::{Error, Result};

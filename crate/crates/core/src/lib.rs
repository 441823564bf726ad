pub mod data;
pub mod error;
pub mod evaluation;
pub mod federation;
pub mod personalization;
pub mod run;
pub mod model;
pub mod seed;

pub use error::{Error, Result};
pub use model::{Architecture, Model};

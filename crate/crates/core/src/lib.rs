pub mod config;
pub mod error;
pub mod geom;
pub mod hull;
pub mod io;
pub mod joint;
pub mod metrics;
pub mod phantom;
pub mod profiles;
pub mod render;
pub mod segment;
pub mod workflow;

pub use error::{Error, Result};

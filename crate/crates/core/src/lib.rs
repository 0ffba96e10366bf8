//! Event-based semantic segmentation at desk scale: event simulation from
//! frame pairs, dense event representations, RGB+event fusion networks,
//! losses and segmentation metrics.

mod error;
pub mod experiment;
pub mod dataset;
pub mod events;
pub mod image;
pub mod labels;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod raster;
pub mod report;
pub mod synthetic;
pub mod train;
pub mod repr;

pub use error::{Error, Result};

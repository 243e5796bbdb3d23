//! Hour-of-day music recommendation from one listener's scrobble history.
//!
//! The crate covers the whole path from raw playbacks to a ranked list:
//!
//! * [`ingestion`] pulls scrobbles and tags from Last.fm and audio features
//!   from Spotify (or reads the same data from JSON-lines fixtures).
//! * [`dataset`] turns playbacks into hourly "moment" rows: normalized tag
//!   strengths plus mean audio features.
//! * [`models`] fits regressors from tag strengths to one audio feature.
//! * [`pipeline`] runs the four recommendation phases for an hour of day.
//! * [`simulator`] generates synthetic listeners with known structure.
//! * [`service`] exposes the pipeline over HTTP.

pub mod dataset;
pub mod error;
pub mod ingestion;
pub mod models;
pub mod pipeline;
pub mod service;
pub mod simulator;
pub mod types;

pub use error::{Error, Result};

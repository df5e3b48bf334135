//! Digitization of hand-drawn flowsheet graph symbols.
//!
//! Heart-rate circles and blood-pressure arrows are turned into calibrated
//! integer time series, either from per-symbol segmentation masks or from the
//! raw scan by template matching, and the results are scored against ground
//! truth with detection, error and hypothesis-test statistics.

pub mod config;
pub mod draw;
pub mod error;
pub mod evaluation;
pub mod extraction;
pub mod formats;
pub mod geometry;
pub mod morphology;
pub mod raster;
pub mod stats;
pub mod synth;
pub mod template;

pub use error::{Error, Result};
pub use geometry::{pixel_to_value, value_to_pixel, GraphGeometry, Symbol, TimeSeries};
pub use raster::{binarize, crop, zero_pad, BinaryMask, GrayImage, PadInfo, Raster};

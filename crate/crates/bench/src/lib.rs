//! Fixtures shared by the benchmarks.

use flowsheet_core::config::RunConfig;
use flowsheet_core::synth::{DatasetManifest, Rendering};

pub const SHIPPED_CONFIG: &str = include_str!("../../../config/synthetic.toml");

pub fn shipped_config() -> RunConfig {
    RunConfig::from_toml(SHIPPED_CONFIG, "config/synthetic.toml").expect("shipped config parses")
}

/// First image of the shipped synthetic suite.
pub fn sample_rendering(cfg: &RunConfig) -> Rendering {
    let manifest = DatasetManifest::plan(1, &cfg.geometry, &cfg.synth.style, &cfg.synth.record)
        .expect("valid plan");
    manifest
        .render_entry(&manifest.images[0])
        .expect("renders")
        .1
}

//! Run configuration, loaded from TOML. Every section is optional and falls
//! back to its defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::{Corrections, ExtractionConfig};
use crate::formats::read_text;
use crate::geometry::GraphGeometry;
use crate::synth::{RecordParams, RenderStyle};
use crate::template::{builtin_pack, load_pack, Template, TemplateParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub images: usize,
    pub style: RenderStyle,
    pub record: RecordParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            images: 32,
            style: RenderStyle::default(),
            record: RecordParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GraphGeometry,
    pub extraction: ExtractionConfig,
    pub templates: TemplateParams,
    pub template_corrections: Corrections,
    /// Template pack directory used instead of the generated templates;
    /// relative paths resolve against the config file's directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template_pack: Option<PathBuf>,
    pub synth: SynthConfig,
    /// Worker threads; unset uses every core.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: GraphGeometry::default(),
            extraction: ExtractionConfig::default(),
            templates: TemplateParams::default(),
            template_corrections: Corrections::TEMPLATE_DEFAULT,
            template_pack: None,
            synth: SynthConfig::default(),
            jobs: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, source: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let offset = e.span().map_or(0, |s| s.start);
            Error::Parse {
                source_name: source.to_string(),
                offset,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads `path`; a relative `template_pack` is rebased onto the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&read_text(path)?, &path.display().to_string())?;
        if let (Some(pack), Some(dir)) = (&cfg.template_pack, path.parent()) {
            if pack.is_relative() {
                cfg.template_pack = Some(dir.join(pack));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.extraction.validate(&self.geometry)?;
        self.synth.style.validate()?;
        self.synth.record.validate(&self.geometry)?;
        let t = &self.templates.thresholds;
        for v in [t.heart_rate, t.diastolic_bp, t.systolic_bp] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "template threshold {v} outside [-1, 1]"
                )));
            }
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidParameter("jobs must be at least 1".into()));
        }
        Ok(())
    }

    /// The template pack when one is configured, otherwise the generated templates.
    pub fn load_templates(&self) -> Result<Vec<Template>> {
        match &self.template_pack {
            Some(dir) => load_pack(dir),
            None => builtin_pack(&self.templates),
        }
    }
}

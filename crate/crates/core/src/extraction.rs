//! Segmentation-mask post-processing into calibrated time series, and the
//! reverse direction: building ground-truth masks from symbol annotations.
//!
//! Heart rate uses connected-component centroids of a cleaned mask. Blood
//! pressures are read by sampling columns at alternating +16/+17 px steps and
//! scanning each column for the first foreground pixel, bottom-up for systolic
//! and top-down for diastolic.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{read_text, write_atomic};
use crate::geometry::{row_to_reading, GraphGeometry, Symbol, TimeSeries};
use crate::morphology::{
    disk_offsets, opening_disk, region_props, remove_small_objects, Connectivity,
};
use crate::raster::BinaryMask;

/// Additive corrections in output units, applied after calibration and
/// before rounding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corrections {
    pub heart_rate: f64,
    pub diastolic_bp: f64,
    pub systolic_bp: f64,
}

impl Corrections {
    pub const ZERO: Corrections = Corrections {
        heart_rate: 0.0,
        diastolic_bp: 0.0,
        systolic_bp: 0.0,
    };

    /// Mask edge to arrow tip offsets of network-predicted masks.
    pub const MASK_DEFAULT: Corrections = Corrections {
        heart_rate: 0.0,
        diastolic_bp: -4.0,
        systolic_bp: 4.0,
    };

    /// Top-down match selection bias of the template pipeline.
    pub const TEMPLATE_DEFAULT: Corrections = Corrections {
        heart_rate: 0.0,
        diastolic_bp: -2.60,
        systolic_bp: -2.60,
    };

    pub fn get(&self, symbol: Symbol) -> f64 {
        match symbol {
            Symbol::HeartRate => self.heart_rate,
            Symbol::DiastolicBp => self.diastolic_bp,
            Symbol::SystolicBp => self.systolic_bp,
        }
    }
}

impl Default for Corrections {
    fn default() -> Self {
        Self::MASK_DEFAULT
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub hr_min_object_px: usize,
    pub hr_opening_radius: usize,
    pub bp_min_object_px: usize,
    /// Column increments cycled through while sampling BP columns.
    pub bp_column_steps: Vec<usize>,
    /// Consecutive blank samples after a detection that end the BP scan; 0 disables.
    pub bp_stop_after_blank: usize,
    pub corrections: Corrections,
    /// Sampled BP columns are widened to `col +/- halfwidth`.
    pub column_window_halfwidth: usize,
    pub connectivity: Connectivity,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            hr_min_object_px: 12,
            hr_opening_radius: 2,
            bp_min_object_px: 12,
            bp_column_steps: vec![16, 17],
            bp_stop_after_blank: 10,
            corrections: Corrections::MASK_DEFAULT,
            column_window_halfwidth: 1,
            connectivity: Connectivity::Eight,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self, geom: &GraphGeometry) -> Result<()> {
        if self.bp_column_steps.is_empty() || self.bp_column_steps.contains(&0) {
            return Err(Error::InvalidParameter(
                "bp_column_steps must be a non-empty list of positive increments".into(),
            ));
        }
        let mean =
            self.bp_column_steps.iter().sum::<usize>() as f64 / self.bp_column_steps.len() as f64;
        if (mean - geom.slot_spacing_px).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "bp_column_steps average {mean} px but slots are {} px apart",
                geom.slot_spacing_px
            )));
        }
        Ok(())
    }
}

/// Non-fatal observations made while extracting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    /// Two heart-rate regions rounded to the same slot; the one nearer the gridline was kept.
    SlotCollision {
        slot: usize,
        kept_row: f64,
        kept_col: f64,
        dropped_row: f64,
        dropped_col: f64,
    },
    /// A region whose centroid maps to no slot.
    OutsideSlots {
        centroid_row: f64,
        centroid_col: f64,
    },
    /// The BP scan ended after too many consecutive blank samples.
    StopRule {
        symbol: Symbol,
        last_detection_slot: usize,
        stopped_at_slot: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Extraction {
    pub series: TimeSeries,
    pub diagnostics: Vec<Diagnostic>,
}

fn check_mask_dims(mask: &BinaryMask, geom: &GraphGeometry) -> Result<()> {
    if mask.height() != geom.image_height_px || mask.width() != geom.image_width_px {
        return Err(Error::DimensionMismatch(format!(
            "mask is {}x{} but the graph geometry is {}x{}",
            mask.height(),
            mask.width(),
            geom.image_height_px,
            geom.image_width_px
        )));
    }
    Ok(())
}

/// Heart-rate post-processing: size filter, disk opening, centroids, slot
/// assignment and calibration.
pub fn extract_heart_rate(
    mask: &BinaryMask,
    geom: &GraphGeometry,
    cfg: &ExtractionConfig,
) -> Result<Extraction> {
    check_mask_dims(mask, geom)?;
    let cleaned = remove_small_objects(mask, cfg.hr_min_object_px, cfg.connectivity);
    let cleaned = if cfg.hr_opening_radius > 0 {
        opening_disk(&cleaned, cfg.hr_opening_radius)
    } else {
        cleaned
    };
    let regions = region_props(&cleaned, cfg.connectivity);

    let mut diagnostics = Vec::new();
    // (centroid_row, centroid_col) chosen per slot
    let mut chosen: Vec<Option<(f64, f64)>> = vec![None; geom.slot_count];
    for region in &regions {
        let (row, col) = (region.centroid_row, region.centroid_col);
        let Some(slot) = geom.nearest_slot(col) else {
            diagnostics.push(Diagnostic::OutsideSlots {
                centroid_row: row,
                centroid_col: col,
            });
            continue;
        };
        match chosen[slot] {
            None => chosen[slot] = Some((row, col)),
            Some((prev_row, prev_col)) => {
                let gridline = geom.slot_column(slot);
                let key = |r: f64, c: f64| ((c - gridline).abs(), r);
                let (kept, dropped) = if key(row, col) < key(prev_row, prev_col) {
                    ((row, col), (prev_row, prev_col))
                } else {
                    ((prev_row, prev_col), (row, col))
                };
                chosen[slot] = Some(kept);
                diagnostics.push(Diagnostic::SlotCollision {
                    slot,
                    kept_row: kept.0,
                    kept_col: kept.1,
                    dropped_row: dropped.0,
                    dropped_col: dropped.1,
                });
            }
        }
    }

    let correction = cfg.corrections.heart_rate;
    let slots = chosen
        .into_iter()
        .map(|c| c.map(|(row, _)| row_to_reading(row, geom, correction)))
        .collect();
    Ok(Extraction {
        series: TimeSeries::from_slots(Symbol::HeartRate, geom.slot_minutes, slots),
        diagnostics,
    })
}

/// Columns sampled by the BP scan, one per slot, starting at the time origin.
pub fn bp_sample_columns(geom: &GraphGeometry, steps: &[usize]) -> Vec<usize> {
    let mut cols = Vec::with_capacity(geom.slot_count);
    let mut col = geom.time_origin_col;
    for k in 0..geom.slot_count {
        cols.push(col);
        col += steps[k % steps.len()];
    }
    cols
}

/// Blood-pressure post-processing by alternating-interval column scans.
pub fn extract_bp(
    mask: &BinaryMask,
    geom: &GraphGeometry,
    cfg: &ExtractionConfig,
    kind: Symbol,
) -> Result<Extraction> {
    if !kind.is_bp() {
        return Err(Error::InvalidParameter(format!(
            "{kind} is not a blood-pressure symbol"
        )));
    }
    check_mask_dims(mask, geom)?;
    cfg.validate(geom)?;
    let cleaned = remove_small_objects(mask, cfg.bp_min_object_px, cfg.connectivity);
    let correction = cfg.corrections.get(kind);
    let (w, h) = (cleaned.width(), cleaned.height());

    let mut series = TimeSeries::blank(kind, geom);
    let mut diagnostics = Vec::new();
    let mut last_detection: Option<usize> = None;
    let mut blank_run = 0usize;

    for (slot, center) in bp_sample_columns(geom, &cfg.bp_column_steps)
        .into_iter()
        .enumerate()
    {
        let lo = center.saturating_sub(cfg.column_window_halfwidth);
        let hi = (center + cfg.column_window_halfwidth).min(w.saturating_sub(1));
        let stop_row = if lo > hi || center >= w + cfg.column_window_halfwidth {
            None
        } else {
            let hit = |r: usize| (lo..=hi).any(|c| cleaned.get(r, c));
            match kind {
                Symbol::SystolicBp => (0..h).rev().find(|&r| hit(r)),
                _ => (0..h).find(|&r| hit(r)),
            }
        };
        match stop_row {
            Some(row) => {
                series.slots[slot] = Some(row_to_reading(row as f64, geom, correction));
                last_detection = Some(slot);
                blank_run = 0;
            }
            None => {
                if let Some(last) = last_detection {
                    blank_run += 1;
                    if cfg.bp_stop_after_blank > 0 && blank_run >= cfg.bp_stop_after_blank {
                        diagnostics.push(Diagnostic::StopRule {
                            symbol: kind,
                            last_detection_slot: last,
                            stopped_at_slot: slot,
                        });
                        break;
                    }
                }
            }
        }
    }
    Ok(Extraction {
        series,
        diagnostics,
    })
}

/// All three series from the three single-symbol masks.
pub fn extract_all(
    hr: &BinaryMask,
    dbp: &BinaryMask,
    sbp: &BinaryMask,
    geom: &GraphGeometry,
    cfg: &ExtractionConfig,
) -> Result<[Extraction; 3]> {
    Ok([
        extract_heart_rate(hr, geom, cfg)?,
        extract_bp(dbp, geom, cfg, Symbol::DiastolicBp)?,
        extract_bp(sbp, geom, cfg, Symbol::SystolicBp)?,
    ])
}

// --- annotations ---------------------------------------------------------------

/// Radius of the disk drawn around each annotated heart-rate center.
pub const HR_ANNOTATION_RADIUS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnnotationShape {
    /// Inclusive rectangle around a BP arrow.
    Rect {
        top: usize,
        left: usize,
        bottom: usize,
        right: usize,
    },
    /// Center of a heart-rate circle.
    Point { row: usize, col: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub symbol: Symbol,
    #[serde(flatten)]
    pub shape: AnnotationShape,
}

impl Annotation {
    pub fn point(row: usize, col: usize) -> Self {
        Self {
            symbol: Symbol::HeartRate,
            shape: AnnotationShape::Point { row, col },
        }
    }

    pub fn rect(symbol: Symbol, top: usize, left: usize, bottom: usize, right: usize) -> Self {
        Self {
            symbol,
            shape: AnnotationShape::Rect {
                top,
                left,
                bottom,
                right,
            },
        }
    }

    fn validate(&self, index: usize, geom: &GraphGeometry) -> Result<()> {
        let (h, w) = (geom.image_height_px, geom.image_width_px);
        let bad = |why: String| {
            Error::Validation(format!("annotation #{index} ({}): {why}", self.symbol))
        };
        match (self.symbol, self.shape) {
            (Symbol::HeartRate, AnnotationShape::Point { row, col }) => {
                if row >= h || col >= w {
                    return Err(bad(format!(
                        "point ({row}, {col}) outside the {h}x{w} graph"
                    )));
                }
            }
            (
                sym,
                AnnotationShape::Rect {
                    top,
                    left,
                    bottom,
                    right,
                },
            ) if sym.is_bp() => {
                if top > bottom || left > right {
                    return Err(bad(format!(
                        "inverted rectangle ({top}, {left})-({bottom}, {right})"
                    )));
                }
                if bottom >= h || right >= w {
                    return Err(bad(format!(
                        "rectangle ({top}, {left})-({bottom}, {right}) outside the {h}x{w} graph"
                    )));
                }
            }
            (Symbol::HeartRate, _) => return Err(bad("heart rate needs a center point".into())),
            _ => return Err(bad("blood pressure needs a rectangle".into())),
        }
        Ok(())
    }
}

/// Ground-truth masks `(hr, dbp, sbp)`: radius-3 disks at heart-rate centers,
/// filled rectangles for the blood pressures.
pub fn annotations_to_masks(
    annotations: &[Annotation],
    geom: &GraphGeometry,
) -> Result<(BinaryMask, BinaryMask, BinaryMask)> {
    let (h, w) = (geom.image_height_px, geom.image_width_px);
    let mut hr = BinaryMask::empty(w, h)?;
    let mut dbp = BinaryMask::empty(w, h)?;
    let mut sbp = BinaryMask::empty(w, h)?;
    let disk = disk_offsets(HR_ANNOTATION_RADIUS);
    for (i, ann) in annotations.iter().enumerate() {
        ann.validate(i, geom)?;
        match ann.shape {
            AnnotationShape::Point { row, col } => {
                for &(dr, dc) in &disk {
                    let (r, c) = (row as isize + dr, col as isize + dc);
                    if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
                        hr.set(r as usize, c as usize, true);
                    }
                }
            }
            AnnotationShape::Rect {
                top,
                left,
                bottom,
                right,
            } => {
                let target = if ann.symbol == Symbol::DiastolicBp {
                    &mut dbp
                } else {
                    &mut sbp
                };
                for r in top..=bottom {
                    for c in left..=right {
                        target.set(r, c, true);
                    }
                }
            }
        }
    }
    Ok((hr, dbp, sbp))
}

/// One JSON object per line.
pub fn encode_annotations(annotations: &[Annotation]) -> String {
    let mut out = String::new();
    for a in annotations {
        out.push_str(&serde_json::to_string(a).expect("annotation serializes"));
        out.push('\n');
    }
    out
}

pub fn decode_annotations(text: &str, source: &str) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    let mut offset = 0usize;
    for (lineno, line) in text.split_inclusive('\n').enumerate() {
        let trimmed = line.trim();
        if !trimmed.is_empty() {
            let ann = serde_json::from_str::<Annotation>(trimmed).map_err(|e| Error::Parse {
                source_name: source.to_string(),
                offset,
                message: format!("record on line {}: {e}", lineno + 1),
            })?;
            out.push(ann);
        }
        offset += line.len();
    }
    Ok(out)
}

pub fn load_annotations(path: &Path) -> Result<Vec<Annotation>> {
    decode_annotations(&read_text(path)?, &path.display().to_string())
}

pub fn save_annotations(annotations: &[Annotation], path: &Path) -> Result<()> {
    write_atomic(path, encode_annotations(annotations).as_bytes())
}

//! Flowsheet graph coordinate system and the pixel/value calibration.
//!
//! Rows count down from the top of the raster and columns count right from
//! the left edge. Calibration works in "pixel height from the image bottom",
//! `p = image_height_px - row`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three hand-drawn symbol kinds on the vitals graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symbol {
    HeartRate,
    DiastolicBp,
    SystolicBp,
}

impl Symbol {
    pub const ALL: [Symbol; 3] = [Symbol::HeartRate, Symbol::DiastolicBp, Symbol::SystolicBp];

    /// File-name tag used throughout the on-disk layouts (`hr`, `dbp`, `sbp`).
    pub fn short_name(self) -> &'static str {
        match self {
            Symbol::HeartRate => "hr",
            Symbol::DiastolicBp => "dbp",
            Symbol::SystolicBp => "sbp",
        }
    }

    pub fn long_name(self) -> &'static str {
        match self {
            Symbol::HeartRate => "heart_rate",
            Symbol::DiastolicBp => "diastolic_bp",
            Symbol::SystolicBp => "systolic_bp",
        }
    }

    pub fn is_bp(self) -> bool {
        !matches!(self, Symbol::HeartRate)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.long_name())
    }
}

impl FromStr for Symbol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Symbol::ALL
            .into_iter()
            .find(|sym| sym.short_name() == s || sym.long_name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown symbol `{s}`")))
    }
}

/// Calibration constants of the flowsheet graph raster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphGeometry {
    pub image_height_px: usize,
    pub image_width_px: usize,
    /// Height of the irregular 0-30 bottom row, factored out of the linear scale.
    pub bottom_row_px: usize,
    pub value_at_first_gridline: f64,
    pub value_at_top: f64,
    pub slot_spacing_px: f64,
    pub slot_minutes: u32,
    pub slot_count: usize,
    /// Pixel column of the first time gridline.
    pub time_origin_col: usize,
}

impl Default for GraphGeometry {
    fn default() -> Self {
        Self {
            image_height_px: 164,
            image_width_px: 990,
            bottom_row_px: 13,
            value_at_first_gridline: 30.0,
            value_at_top: 210.0,
            slot_spacing_px: 16.5,
            slot_minutes: 5,
            slot_count: 59,
            time_origin_col: 0,
        }
    }
}

impl GraphGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.image_height_px == 0 || self.image_width_px == 0 {
            return Err(Error::InvalidParameter(
                "geometry image dimensions must be positive".into(),
            ));
        }
        if self.bottom_row_px == 0 || self.bottom_row_px >= self.image_height_px {
            return Err(Error::InvalidParameter(format!(
                "bottom_row_px {} must lie in (0, {})",
                self.bottom_row_px, self.image_height_px
            )));
        }
        if self.value_at_first_gridline.partial_cmp(&self.value_at_top)
            != Some(std::cmp::Ordering::Less)
        {
            return Err(Error::InvalidParameter(
                "value_at_first_gridline must be below value_at_top".into(),
            ));
        }
        if !(self.slot_spacing_px > 0.0 && self.slot_spacing_px.is_finite()) {
            return Err(Error::InvalidParameter(
                "slot_spacing_px must be positive".into(),
            ));
        }
        if self.slot_count == 0 {
            return Err(Error::InvalidParameter(
                "slot_count must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Physiological units per pixel of height (180/151 for the default graph).
    pub fn units_per_px(&self) -> f64 {
        (self.value_at_top - self.value_at_first_gridline)
            / (self.image_height_px - self.bottom_row_px) as f64
    }

    /// Ideal (real-valued) column of a slot's gridline.
    pub fn slot_column(&self, slot: usize) -> f64 {
        self.time_origin_col as f64 + slot as f64 * self.slot_spacing_px
    }

    /// Nearest slot for a column, or `None` when it falls outside `[0, slot_count)`.
    pub fn nearest_slot(&self, col: f64) -> Option<usize> {
        let slot = ((col - self.time_origin_col as f64) / self.slot_spacing_px).round();
        (slot >= 0.0 && slot < self.slot_count as f64).then_some(slot as usize)
    }

    /// Pixel height from the bottom for a raster row.
    pub fn height_of_row(&self, row: f64) -> f64 {
        self.image_height_px as f64 - row
    }

    pub fn row_of_height(&self, p: f64) -> f64 {
        self.image_height_px as f64 - p
    }
}

/// Linear pixel-height to value calibration, plus an additive correction in
/// output units. No rounding happens here; out-of-range heights extrapolate.
pub fn pixel_to_value(p: f64, geom: &GraphGeometry, correction: f64) -> f64 {
    (p - geom.bottom_row_px as f64) / (geom.image_height_px - geom.bottom_row_px) as f64
        * (geom.value_at_top - geom.value_at_first_gridline)
        + geom.value_at_first_gridline
        + correction
}

/// Exact inverse of [`pixel_to_value`] with zero correction.
pub fn value_to_pixel(v: f64, geom: &GraphGeometry) -> f64 {
    (v - geom.value_at_first_gridline) / (geom.value_at_top - geom.value_at_first_gridline)
        * (geom.image_height_px - geom.bottom_row_px) as f64
        + geom.bottom_row_px as f64
}

/// Converts a raster row into an integer reading: height from bottom, calibration,
/// correction, then round-to-nearest.
pub fn row_to_reading(row: f64, geom: &GraphGeometry, correction: f64) -> i32 {
    pixel_to_value(geom.height_of_row(row), geom, correction).round() as i32
}

/// One symbol's readings over the fixed 5-minute slots; `None` is a blank slot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub symbol: Symbol,
    pub slot_minutes: u32,
    pub slots: Vec<Option<i32>>,
}

impl TimeSeries {
    pub fn blank(symbol: Symbol, geom: &GraphGeometry) -> Self {
        Self {
            symbol,
            slot_minutes: geom.slot_minutes,
            slots: vec![None; geom.slot_count],
        }
    }

    pub fn from_slots(symbol: Symbol, slot_minutes: u32, slots: Vec<Option<i32>>) -> Self {
        Self {
            symbol,
            slot_minutes,
            slots,
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn present_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn time_of(&self, slot: usize) -> u32 {
        slot as u32 * self.slot_minutes
    }

    /// Iterator over `(slot, value)` for present slots.
    pub fn present(&self) -> impl Iterator<Item = (usize, i32)> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn calibration_boundaries() {
        let g = GraphGeometry::default();
        assert!(close(pixel_to_value(13.0, &g, 0.0), 30.0, 1e-12));
        assert!(close(pixel_to_value(164.0, &g, 0.0), 210.0, 1e-12));
        assert!(close(pixel_to_value(88.5, &g, 0.0), 120.0, 1e-12));
        // (100/151)*180 + 30 + 4
        assert!(close(pixel_to_value(113.0, &g, 4.0), 153.2053, 1e-4));
    }

    #[test]
    fn inverse_calibration() {
        let g = GraphGeometry::default();
        assert!(close(value_to_pixel(30.0, &g), 13.0, 1e-12));
        assert!(close(value_to_pixel(210.0, &g), 164.0, 1e-12));
        assert!(close(value_to_pixel(120.0, &g), 88.5, 1e-12));
    }

    #[test]
    fn slope_per_pixel() {
        let g = GraphGeometry::default();
        for p in [0.0, 13.0, 50.5, 163.0] {
            let step = pixel_to_value(p + 1.0, &g, 0.0) - pixel_to_value(p, &g, 0.0);
            assert!(close(step, 180.0 / 151.0, 1e-12));
        }
        assert!(close(g.units_per_px(), 1.192_052_980_132_45, 1e-12));
    }

    #[test]
    fn below_bottom_row_extrapolates() {
        let g = GraphGeometry::default();
        assert!(pixel_to_value(0.0, &g, 0.0) < 30.0);
    }

    #[test]
    fn geometry_validation() {
        assert!(GraphGeometry::default().validate().is_ok());
        let bad = GraphGeometry {
            bottom_row_px: 164,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = GraphGeometry {
            value_at_top: 30.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = GraphGeometry {
            slot_count: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn nearest_slot_bounds() {
        let g = GraphGeometry::default();
        assert_eq!(g.nearest_slot(33.0), Some(2));
        assert_eq!(g.nearest_slot(-8.0), Some(0));
        assert_eq!(g.nearest_slot(-9.0), None);
        assert_eq!(g.nearest_slot(58.0 * 16.5 + 8.0), Some(58));
        assert_eq!(g.nearest_slot(59.0 * 16.5), None);
    }

    #[test]
    fn symbol_names_round_trip() {
        for s in Symbol::ALL {
            assert_eq!(s.short_name().parse::<Symbol>().unwrap(), s);
            assert_eq!(s.long_name().parse::<Symbol>().unwrap(), s);
        }
        assert!("spo2".parse::<Symbol>().is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn round_trip_across_range(v in 0.0f64..=250.0) {
                let g = GraphGeometry::default();
                let back = pixel_to_value(value_to_pixel(v, &g), &g, 0.0);
                prop_assert!((back - v).abs() <= 1e-9);
            }

            #[test]
            fn strictly_increasing(p in -50.0f64..250.0, dp in 1e-6f64..10.0) {
                let g = GraphGeometry::default();
                prop_assert!(pixel_to_value(p + dp, &g, 0.0) > pixel_to_value(p, &g, 0.0));
            }
        }
    }
}

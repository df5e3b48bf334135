//! Synthetic flowsheets: random vital-sign records rendered as hand-drawn
//! style graph rasters, with ideal truth masks and truth series.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::draw::{draw_arrow, stroke_circle, ArrowShape, Point};
use crate::error::{Error, Result};
use crate::extraction::{annotations_to_masks, Annotation};
use crate::formats::{read_text, save_mask, save_raster, save_series, write_atomic};
use crate::geometry::{value_to_pixel, GraphGeometry, Symbol, TimeSeries};
use crate::raster::{BinaryMask, GrayImage};

const RECORD_STREAM: u64 = 0;
const RENDER_STREAM: u64 = 1;
const DATASET_STREAM: u64 = 2;

const HR_RANGE: (i32, i32) = (40, 180);
const DBP_RANGE: (i32, i32) = (40, 110);
const SBP_RANGE: (i32, i32) = (80, 200);
const PULSE_PRESSURE: (i32, i32) = (40, 70);
/// Range of the heart rate's relative position between diastolic and systolic.
const HR_POSITION: (f64, f64) = (0.35, 0.65);

/// Per-slot readings of one synthetic surgery; every vector has the graph's slot count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurgeryRecord {
    pub duration_slots: usize,
    pub heart_rate: Vec<Option<i32>>,
    pub diastolic_bp: Vec<Option<i32>>,
    pub systolic_bp: Vec<Option<i32>>,
}

impl SurgeryRecord {
    pub fn empty(geom: &GraphGeometry) -> Self {
        Self {
            duration_slots: 0,
            heart_rate: vec![None; geom.slot_count],
            diastolic_bp: vec![None; geom.slot_count],
            systolic_bp: vec![None; geom.slot_count],
        }
    }

    pub fn slots(&self, symbol: Symbol) -> &[Option<i32>] {
        match symbol {
            Symbol::HeartRate => &self.heart_rate,
            Symbol::DiastolicBp => &self.diastolic_bp,
            Symbol::SystolicBp => &self.systolic_bp,
        }
    }

    pub fn series(&self, symbol: Symbol, geom: &GraphGeometry) -> TimeSeries {
        TimeSeries::from_slots(symbol, geom.slot_minutes, self.slots(symbol).to_vec())
    }

    pub fn validate(&self, geom: &GraphGeometry) -> Result<()> {
        for symbol in Symbol::ALL {
            let slots = self.slots(symbol);
            if slots.len() != geom.slot_count {
                return Err(Error::Validation(format!(
                    "{symbol} has {} slots, expected {}",
                    slots.len(),
                    geom.slot_count
                )));
            }
            for (i, v) in slots.iter().enumerate() {
                if let Some(v) = *v {
                    let v = f64::from(v);
                    if v < geom.value_at_first_gridline || v > geom.value_at_top {
                        return Err(Error::Validation(format!(
                            "{symbol} value {v} at slot {i} outside the renderable range [{}, {}]",
                            geom.value_at_first_gridline, geom.value_at_top
                        )));
                    }
                }
            }
        }
        for (i, (d, s)) in self.diastolic_bp.iter().zip(&self.systolic_bp).enumerate() {
            if let (Some(d), Some(s)) = (d, s) {
                if s < d {
                    return Err(Error::Validation(format!(
                        "systolic {s} below diastolic {d} at slot {i}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Shape of generated records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecordParams {
    /// Inclusive range of surgery lengths, in slots.
    pub duration_slots: [usize; 2],
    /// Probability that a slot inside the surgery is left blank.
    pub blank_fraction: f64,
    /// Longest run of consecutive blanks inside the surgery.
    pub max_blank_run: usize,
}

impl Default for RecordParams {
    fn default() -> Self {
        Self {
            duration_slots: [16, 32],
            blank_fraction: 0.1,
            max_blank_run: 3,
        }
    }
}

impl RecordParams {
    pub fn validate(&self, geom: &GraphGeometry) -> Result<()> {
        let [lo, hi] = self.duration_slots;
        if lo == 0 || lo > hi || hi > geom.slot_count {
            return Err(Error::InvalidParameter(format!(
                "duration range [{lo}, {hi}] must lie within [1, {}]",
                geom.slot_count
            )));
        }
        if !(0.0..1.0).contains(&self.blank_fraction) {
            return Err(Error::InvalidParameter(format!(
                "blank_fraction {} must lie in [0, 1)",
                self.blank_fraction
            )));
        }
        Ok(())
    }
}

fn walk(rng: &mut ChaCha8Rng, value: &mut f64, sd: f64, range: (i32, i32)) {
    let step = Normal::new(0.0, sd).expect("positive sd").sample(rng);
    *value = (*value + step).clamp(f64::from(range.0), f64::from(range.1));
}

fn blank_pattern(rng: &mut ChaCha8Rng, duration: usize, params: &RecordParams) -> Vec<bool> {
    let mut run = 0;
    (0..duration)
        .map(|_| {
            let blank = run < params.max_blank_run && rng.random_bool(params.blank_fraction);
            run = if blank { run + 1 } else { 0 };
            blank
        })
        .collect()
}

/// Bounded random-walk vitals for `duration_slots` slots; later slots are blank.
/// Systolic exceeds diastolic by a pulse pressure of 40 to 70, and the heart
/// rate sits in the middle band between the two so the drawn symbols do not touch.
pub fn random_record(
    seed: u64,
    duration_slots: usize,
    geom: &GraphGeometry,
    params: &RecordParams,
) -> Result<SurgeryRecord> {
    if duration_slots == 0 || duration_slots > geom.slot_count {
        return Err(Error::InvalidParameter(format!(
            "duration {duration_slots} must lie in [1, {}]",
            geom.slot_count
        )));
    }
    params.validate(geom)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(RECORD_STREAM);

    let mut record = SurgeryRecord::empty(geom);
    record.duration_slots = duration_slots;
    let hr_blank = blank_pattern(&mut rng, duration_slots, params);
    let bp_blank = blank_pattern(&mut rng, duration_slots, params);

    let mut hr_pos = rng.random_range(HR_POSITION.0..HR_POSITION.1);
    let mut dbp = rng.random_range(55.0..90.0);
    let mut pp = rng.random_range(40.0..60.0);
    for slot in 0..duration_slots {
        let step = Normal::new(0.0, 0.05)
            .expect("positive sd")
            .sample(&mut rng);
        hr_pos = (hr_pos + step).clamp(HR_POSITION.0, HR_POSITION.1);
        walk(&mut rng, &mut dbp, 3.0, DBP_RANGE);
        walk(&mut rng, &mut pp, 3.0, PULSE_PRESSURE);
        let d = dbp.round() as i32;
        let s = (d + pp.round() as i32).clamp(SBP_RANGE.0, SBP_RANGE.1);
        let h = ((f64::from(d) + hr_pos * f64::from(s - d)).round() as i32)
            .clamp(HR_RANGE.0, HR_RANGE.1);
        if !hr_blank[slot] {
            record.heart_rate[slot] = Some(h);
        }
        if !bp_blank[slot] {
            record.diastolic_bp[slot] = Some(d);
            record.systolic_bp[slot] = Some(s);
        }
    }
    record.validate(geom)?;
    Ok(record)
}

/// Drawing variability. Every `[lo, hi]` pair is a uniform jitter range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderStyle {
    pub seed: u64,
    pub circle_radius_px: [f64; 2],
    pub arrow_angle_deg: [f64; 2],
    pub arrow_head_len_px: [f64; 2],
    pub arrow_head_half_angle_deg: [f64; 2],
    pub arrow_shaft_len_px: [f64; 2],
    pub stroke_width_px: [f64; 2],
    /// Ink gray level; lower is darker.
    pub stroke_intensity: [f64; 2],
    /// Maximum horizontal displacement of a drawn symbol from its gridline.
    pub position_jitter_px: f64,
    pub background: u8,
    pub gridline_intensity: u8,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise_sigma: f64,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            seed: 0,
            circle_radius_px: [3.0, 5.0],
            arrow_angle_deg: [-5.0, 5.0],
            arrow_head_len_px: [6.5, 8.5],
            arrow_head_half_angle_deg: [28.0, 34.0],
            arrow_shaft_len_px: [3.0, 7.0],
            stroke_width_px: [1.2, 2.0],
            stroke_intensity: [20.0, 90.0],
            position_jitter_px: 0.5,
            background: 250,
            gridline_intensity: 205,
            noise_sigma: 6.0,
        }
    }
}

impl RenderStyle {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("circle_radius_px", self.circle_radius_px, 0.5),
            ("arrow_angle_deg", self.arrow_angle_deg, -45.0),
            ("arrow_head_len_px", self.arrow_head_len_px, 1.0),
            (
                "arrow_head_half_angle_deg",
                self.arrow_head_half_angle_deg,
                5.0,
            ),
            ("arrow_shaft_len_px", self.arrow_shaft_len_px, 0.0),
            ("stroke_width_px", self.stroke_width_px, 0.5),
            ("stroke_intensity", self.stroke_intensity, 0.0),
        ];
        for (name, [lo, hi], min) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= min) {
                return Err(Error::InvalidParameter(format!(
                    "{name} range [{lo}, {hi}] must be ordered and at least {min}"
                )));
            }
        }
        if self.arrow_angle_deg[1] > 45.0 || self.arrow_head_half_angle_deg[1] > 80.0 {
            return Err(Error::InvalidParameter("arrow angles too wide".into()));
        }
        if self.stroke_intensity[1] > 255.0 {
            return Err(Error::InvalidParameter(
                "stroke_intensity must not exceed 255".into(),
            ));
        }
        if !(0.0..=0.5).contains(&self.position_jitter_px) {
            return Err(Error::InvalidParameter(format!(
                "position_jitter_px {} must lie in [0, 0.5]",
                self.position_jitter_px
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(
                "noise_sigma must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rendering {
    pub image: GrayImage,
    /// Ideal symbol positions the truth masks were built from.
    pub annotations: Vec<Annotation>,
    /// Truth masks in `(hr, dbp, sbp)` order.
    pub masks: [BinaryMask; 3],
    pub series: [TimeSeries; 3],
}

/// Raster row of a reading.
pub fn value_row(value: i32, geom: &GraphGeometry) -> f64 {
    geom.row_of_height(value_to_pixel(f64::from(value), geom))
}

fn draw_grid(img: &mut GrayImage, geom: &GraphGeometry, intensity: u8) {
    let (h, w) = (img.height(), img.width());
    for slot in 0..geom.slot_count {
        let col = geom.slot_column(slot).round() as usize;
        if col < w {
            for r in 0..h {
                img.set(r, col, img.get(r, col).min(intensity));
            }
        }
    }
    let step = 10.0;
    let mut v = geom.value_at_first_gridline;
    while v <= geom.value_at_top + 1e-9 {
        let row = geom.row_of_height(value_to_pixel(v, geom)).round();
        if row >= 0.0 && (row as usize) < h {
            let row = row as usize;
            for c in 0..w {
                img.set(row, c, img.get(row, c).min(intensity));
            }
        }
        v += step;
    }
}

fn clamp_index(x: f64, len: usize) -> usize {
    x.round().clamp(0.0, (len - 1) as f64) as usize
}

fn bounding_rect(
    segments: &[(Point, Point)],
    tip_row: f64,
    geom: &GraphGeometry,
    symbol: Symbol,
) -> Annotation {
    let (h, w) = (geom.image_height_px, geom.image_width_px);
    let pts = segments.iter().flat_map(|&(a, b)| [a, b]);
    let (mut r0, mut c0, mut r1, mut c1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for (r, c) in pts {
        r0 = r0.min(r);
        c0 = c0.min(c);
        r1 = r1.max(r);
        c1 = c1.max(c);
    }
    // the tip edge sits exactly on the tip row
    if symbol == Symbol::DiastolicBp {
        r0 = tip_row;
    } else {
        r1 = tip_row;
    }
    Annotation::rect(
        symbol,
        clamp_index(r0, h),
        clamp_index(c0, w),
        clamp_index(r1, h),
        clamp_index(c1, w),
    )
}

/// Draws `record` on a gridded graph raster. Truth annotations use the ideal
/// positions; the drawn symbols carry the style's jitter.
pub fn render_flowsheet(
    record: &SurgeryRecord,
    geom: &GraphGeometry,
    style: &RenderStyle,
) -> Result<Rendering> {
    geom.validate()?;
    style.validate()?;
    record.validate(geom)?;
    let mut rng = ChaCha8Rng::seed_from_u64(style.seed);
    rng.set_stream(RENDER_STREAM);

    let (h, w) = (geom.image_height_px, geom.image_width_px);
    let mut img = GrayImage::filled(w, h, style.background)?;
    draw_grid(&mut img, geom, style.gridline_intensity);

    let jitter = style.position_jitter_px;
    let mut annotations = Vec::new();
    for slot in 0..geom.slot_count {
        let col = geom.slot_column(slot);
        if let Some(v) = record.heart_rate[slot] {
            let row = value_row(v, geom);
            let radius = uniform(&mut rng, style.circle_radius_px);
            let width = uniform(&mut rng, style.stroke_width_px);
            let ink = uniform(&mut rng, style.stroke_intensity).round() as u8;
            let center = (row, col + uniform(&mut rng, [-jitter, jitter]));
            stroke_circle(&mut img, center, radius, width, ink);
            annotations.push(Annotation::point(clamp_index(row, h), clamp_index(col, w)));
        }
        for symbol in [Symbol::DiastolicBp, Symbol::SystolicBp] {
            let Some(v) = record.slots(symbol)[slot] else {
                continue;
            };
            let row = value_row(v, geom);
            let shape = ArrowShape {
                angle_deg: uniform(&mut rng, style.arrow_angle_deg),
                head_len: uniform(&mut rng, style.arrow_head_len_px),
                head_half_angle_deg: uniform(&mut rng, style.arrow_head_half_angle_deg),
                shaft_len: uniform(&mut rng, style.arrow_shaft_len_px),
            };
            let width = uniform(&mut rng, style.stroke_width_px);
            let ink = uniform(&mut rng, style.stroke_intensity).round() as u8;
            let tip = (row, col + uniform(&mut rng, [-jitter, jitter]));
            let points_up = symbol == Symbol::DiastolicBp;
            draw_arrow(&mut img, &shape, tip, points_up, width, ink);
            let ideal = shape.segments((row, col), points_up);
            annotations.push(bounding_rect(&ideal, row, geom, symbol));
        }
    }

    if style.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, style.noise_sigma).expect("finite sigma");
        for p in img.pixels_mut() {
            *p = (f64::from(*p) + noise.sample(&mut rng))
                .round()
                .clamp(0.0, 255.0) as u8;
        }
    }

    let (hr, dbp, sbp) = annotations_to_masks(&annotations, geom)?;
    Ok(Rendering {
        image: img,
        annotations,
        masks: [hr, dbp, sbp],
        series: Symbol::ALL.map(|s| record.series(s, geom)),
    })
}

// --- datasets ------------------------------------------------------------------

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolPaths {
    pub hr: String,
    pub dbp: String,
    pub sbp: String,
}

impl SymbolPaths {
    fn new(dir: &str, id: &str, ext: &str) -> Self {
        let p = |s: Symbol| format!("{dir}/{id}_{}.{ext}", s.short_name());
        Self {
            hr: p(Symbol::HeartRate),
            dbp: p(Symbol::DiastolicBp),
            sbp: p(Symbol::SystolicBp),
        }
    }

    pub fn get(&self, symbol: Symbol) -> &str {
        match symbol {
            Symbol::HeartRate => &self.hr,
            Symbol::DiastolicBp => &self.dbp,
            Symbol::SystolicBp => &self.sbp,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub id: String,
    pub seed: u64,
    pub duration_slots: usize,
    /// Paths relative to the dataset directory.
    pub image: String,
    pub masks: SymbolPaths,
    pub truth: SymbolPaths,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub geometry: GraphGeometry,
    pub style: RenderStyle,
    pub record: RecordParams,
    pub images: Vec<DatasetEntry>,
}

impl DatasetManifest {
    /// Plans `n` images; per-image seeds and durations derive from `style.seed`.
    pub fn plan(
        n: usize,
        geom: &GraphGeometry,
        style: &RenderStyle,
        record: &RecordParams,
    ) -> Result<Self> {
        geom.validate()?;
        style.validate()?;
        record.validate(geom)?;
        let mut rng = ChaCha8Rng::seed_from_u64(style.seed);
        rng.set_stream(DATASET_STREAM);
        let [lo, hi] = record.duration_slots;
        let images = (0..n)
            .map(|i| {
                let id = format!("{i:03}");
                DatasetEntry {
                    seed: rng.random(),
                    duration_slots: rng.random_range(lo..=hi),
                    image: format!("images/{id}.pgm"),
                    masks: SymbolPaths::new("masks", &id, "pgm"),
                    truth: SymbolPaths::new("truth", &id, "csv"),
                    id,
                }
            })
            .collect();
        Ok(Self {
            version: MANIFEST_VERSION,
            geometry: geom.clone(),
            style: style.clone(),
            record: record.clone(),
            images,
        })
    }

    pub fn encode(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn decode(text: &str, source: &str) -> Result<Self> {
        let m: Self =
            serde_json::from_str(text).map_err(|e| Error::format(source, e.to_string()))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::format(
                source,
                format!(
                    "unsupported manifest version {}, expected {MANIFEST_VERSION}",
                    m.version
                ),
            ));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&read_text(path)?, &path.display().to_string())
    }

    /// Record and rendering of one entry, as a pure function of the manifest.
    pub fn render_entry(&self, entry: &DatasetEntry) -> Result<(SurgeryRecord, Rendering)> {
        let record = random_record(
            entry.seed,
            entry.duration_slots,
            &self.geometry,
            &self.record,
        )?;
        let style = RenderStyle {
            seed: entry.seed,
            ..self.style.clone()
        };
        let rendering = render_flowsheet(&record, &self.geometry, &style)?;
        Ok((record, rendering))
    }
}

/// Writes every image, mask and truth series listed in `manifest`, then the
/// manifest itself.
pub fn write_dataset(manifest: &DatasetManifest, out_dir: &Path) -> Result<()> {
    manifest.images.par_iter().try_for_each(|entry| {
        let (_, r) = manifest.render_entry(entry)?;
        log::debug!("rendered image {} (seed {})", entry.id, entry.seed);
        save_raster(&r.image, &out_dir.join(&entry.image))?;
        for (i, symbol) in Symbol::ALL.into_iter().enumerate() {
            save_mask(&r.masks[i], &out_dir.join(entry.masks.get(symbol)))?;
            save_series(&r.series[i], &out_dir.join(entry.truth.get(symbol)))?;
        }
        Ok::<_, Error>(())
    })?;
    write_atomic(&out_dir.join(MANIFEST_FILE), manifest.encode().as_bytes())
}

pub fn generate_dataset(
    n: usize,
    geom: &GraphGeometry,
    style: &RenderStyle,
    record: &RecordParams,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let manifest = DatasetManifest::plan(n, geom, style, record)?;
    write_dataset(&manifest, out_dir)?;
    Ok(manifest)
}

/// Geometry whose first gridline sits far enough from the left edge for a
/// slot-0 symbol to be drawn whole.
pub fn synthetic_geometry() -> GraphGeometry {
    GraphGeometry {
        time_origin_col: 8,
        ..GraphGeometry::default()
    }
}

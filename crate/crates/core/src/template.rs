//! Template-matching baseline: zero-mean normalized cross-correlation (ZNCC)
//! of small symbol exemplars over the graph raster, per-template threshold
//! gating, and top-down per-slot match selection.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::draw::{draw_arrow, stroke_circle, ArrowShape};
use crate::error::{Error, Result};
use crate::formats::{load_raster, read_text, save_raster, write_atomic};
use crate::geometry::{row_to_reading, GraphGeometry, Symbol, TimeSeries};
use crate::raster::GrayImage;

/// Matches closer than this many columns to a selected match are discarded.
pub const SUPPRESSION_PX: f64 = 16.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Template {
    pub name: String,
    pub symbol: Symbol,
    pub threshold: f64,
    pub bitmap: GrayImage,
}

impl Template {
    pub fn new(
        name: impl Into<String>,
        symbol: Symbol,
        threshold: f64,
        bitmap: GrayImage,
    ) -> Result<Self> {
        let name = name.into();
        if !(-1.0..=1.0).contains(&threshold) {
            return Err(Error::InvalidParameter(format!(
                "template `{name}` threshold {threshold} outside [-1, 1]"
            )));
        }
        let first = bitmap.pixels()[0];
        if bitmap.pixels().iter().all(|&p| p == first) {
            return Err(Error::InvalidParameter(format!(
                "template `{name}` has zero intensity variance"
            )));
        }
        Ok(Self {
            name,
            symbol,
            threshold,
            bitmap,
        })
    }
}

/// Reference ZNCC of two equally sized real-valued patches. Returns 0 when
/// either patch is constant.
pub fn zncc_score(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut num, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    (num / (va * vb).sqrt()).clamp(-1.0, 1.0)
}

/// Scores over every window position; entry `(r, c)` is the window whose
/// top-left pixel is `(r, c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ZnccMap {
    pub rows: usize,
    pub cols: usize,
    pub template_height: usize,
    pub template_width: usize,
    pub scores: Vec<f64>,
}

impl ZnccMap {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.cols + col]
    }

    /// Raster coordinates of the center pixel of window `(row, col)`.
    pub fn center_of(&self, row: usize, col: usize) -> (usize, usize) {
        (
            row + self.template_height / 2,
            col + self.template_width / 2,
        )
    }
}

/// Summed-area tables of darkness (`255 - v`) and its square.
struct Integrals {
    width: usize,
    sum: Vec<u64>,
    sum_sq: Vec<u64>,
}

impl Integrals {
    fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width(), img.height());
        let stride = w + 1;
        let mut sum = vec![0u64; stride * (h + 1)];
        let mut sum_sq = vec![0u64; stride * (h + 1)];
        for r in 0..h {
            let (mut row_s, mut row_q) = (0u64, 0u64);
            for c in 0..w {
                let d = u64::from(255 - img.get(r, c));
                row_s += d;
                row_q += d * d;
                let i = (r + 1) * stride + c + 1;
                sum[i] = sum[i - stride] + row_s;
                sum_sq[i] = sum_sq[i - stride] + row_q;
            }
        }
        Self {
            width: stride,
            sum,
            sum_sq,
        }
    }

    fn window(&self, table: &[u64], r: usize, c: usize, h: usize, w: usize) -> u64 {
        let s = self.width;
        table[(r + h) * s + c + w] + table[r * s + c]
            - table[r * s + c + w]
            - table[(r + h) * s + c]
    }
}

/// ZNCC between `template` and every co-located window of `image`.
///
/// Computed on darkness values so only the template's inked pixels enter the
/// cross term; window means and variances come from summed-area tables.
/// Windows with zero variance score 0.
pub fn zncc_map(image: &GrayImage, template: &Template) -> Result<ZnccMap> {
    let (th, tw) = (template.bitmap.height(), template.bitmap.width());
    if th >= image.height() || tw >= image.width() {
        return Err(Error::InvalidParameter(format!(
            "template `{}` ({th}x{tw}) must be smaller than the image ({}x{})",
            template.name,
            image.height(),
            image.width()
        )));
    }
    let n = (th * tw) as u64;
    let dark_t: Vec<u64> = template
        .bitmap
        .pixels()
        .iter()
        .map(|&p| u64::from(255 - p))
        .collect();
    let sum_t: u64 = dark_t.iter().sum();
    let sum_t_sq: u64 = dark_t.iter().map(|d| d * d).sum();
    // n * sum((T - mean)^2)
    let var_t = (n * sum_t_sq - sum_t * sum_t) as f64;
    if var_t <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "template `{}` has zero intensity variance",
            template.name
        )));
    }
    let sparse: Vec<(usize, u64)> = dark_t
        .iter()
        .enumerate()
        .filter(|(_, &d)| d != 0)
        .map(|(i, &d)| ((i / tw) * image.width() + i % tw, d))
        .collect();

    let integrals = Integrals::new(image);
    let dark_img: Vec<u64> = image.pixels().iter().map(|&p| u64::from(255 - p)).collect();
    let rows = image.height() - th + 1;
    let cols = image.width() - tw + 1;
    let iw = image.width();

    let scores: Vec<f64> = (0..rows)
        .into_par_iter()
        .flat_map_iter(|r| {
            let integrals = &integrals;
            let sparse = &sparse;
            let dark_img = &dark_img;
            (0..cols).map(move |c| {
                let sum_w = integrals.window(&integrals.sum, r, c, th, tw);
                let sum_w_sq = integrals.window(&integrals.sum_sq, r, c, th, tw);
                let var_w = n * sum_w_sq - sum_w * sum_w;
                if var_w == 0 {
                    return 0.0;
                }
                let base = r * iw + c;
                let cross: u64 = sparse
                    .iter()
                    .map(|&(off, d)| d * dark_img[base + off])
                    .sum();
                // n^2 * covariance
                let num = n as f64 * cross as f64 - sum_t as f64 * sum_w as f64;
                (num / (var_t * var_w as f64).sqrt()).clamp(-1.0, 1.0)
            })
        })
        .collect();

    Ok(ZnccMap {
        rows,
        cols,
        template_height: th,
        template_width: tw,
        scores,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Match {
    /// Center pixel of the matched window.
    pub row: usize,
    pub col: usize,
    pub score: f64,
    pub template: String,
    pub symbol: Symbol,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub matches: Vec<Match>,
}

impl MatchSet {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }
}

/// Every window position whose score reaches its template's threshold,
/// in template order then raster order.
pub fn find_matches(image: &GrayImage, templates: &[Template]) -> Result<MatchSet> {
    if templates.is_empty() {
        return Err(Error::InvalidParameter("no templates to match".into()));
    }
    let per_template: Vec<Vec<Match>> = templates
        .par_iter()
        .map(|t| {
            let map = zncc_map(image, t)?;
            let mut out = Vec::new();
            for r in 0..map.rows {
                for c in 0..map.cols {
                    let score = map.get(r, c);
                    if score >= t.threshold {
                        let (row, col) = map.center_of(r, c);
                        out.push(Match {
                            row,
                            col,
                            score,
                            template: t.name.clone(),
                            symbol: t.symbol,
                        });
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let matches: Vec<Match> = per_template.into_iter().flatten().collect();
    log::debug!(
        "{} templates produced {} matches",
        templates.len(),
        matches.len()
    );
    Ok(MatchSet { matches })
}

/// One selected match per slot: the topmost of the slot's surviving matches.
/// After each selection, matches within [`SUPPRESSION_PX`] columns of it are
/// discarded. Slots are visited left to right.
pub fn select_matches<'a>(
    matches: &'a MatchSet,
    geom: &GraphGeometry,
    symbol: Symbol,
) -> Vec<Option<&'a Match>> {
    let mut by_slot: Vec<Vec<&Match>> = vec![Vec::new(); geom.slot_count];
    for m in matches.matches.iter().filter(|m| m.symbol == symbol) {
        if let Some(slot) = geom.nearest_slot(m.col as f64) {
            by_slot[slot].push(m);
        }
    }
    let mut suppressed_cols: Vec<usize> = Vec::new();
    let mut selected = vec![None; geom.slot_count];
    for (slot, candidates) in by_slot.iter().enumerate() {
        let gridline = geom.slot_column(slot);
        let best = candidates
            .iter()
            .filter(|m| {
                suppressed_cols
                    .iter()
                    .all(|&c| (m.col as f64 - c as f64).abs() >= SUPPRESSION_PX)
            })
            .min_by(|a, b| {
                a.row
                    .cmp(&b.row)
                    .then_with(|| {
                        let da = (a.col as f64 - gridline).abs();
                        let db = (b.col as f64 - gridline).abs();
                        da.total_cmp(&db)
                    })
                    .then_with(|| b.score.total_cmp(&a.score))
                    .then_with(|| a.col.cmp(&b.col))
            });
        if let Some(m) = best {
            suppressed_cols.push(m.col);
            selected[slot] = Some(*m);
        }
    }
    selected
}

/// Converts a match set into one symbol's series.
pub fn tm_extract(
    matches: &MatchSet,
    geom: &GraphGeometry,
    symbol: Symbol,
    correction: f64,
) -> TimeSeries {
    let slots = select_matches(matches, geom, symbol)
        .into_iter()
        .map(|m| m.map(|m| row_to_reading(m.row as f64, geom, correction)))
        .collect();
    TimeSeries::from_slots(symbol, geom.slot_minutes, slots)
}

// --- built-in templates ------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    pub heart_rate: f64,
    pub diastolic_bp: f64,
    pub systolic_bp: f64,
}

impl Thresholds {
    pub fn get(&self, symbol: Symbol) -> f64 {
        match symbol {
            Symbol::HeartRate => self.heart_rate,
            Symbol::DiastolicBp => self.diastolic_bp,
            Symbol::SystolicBp => self.systolic_bp,
        }
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            heart_rate: 0.13,
            diastolic_bp: 0.16,
            systolic_bp: 0.18,
        }
    }
}

/// Generation parameters for the procedural template families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplateParams {
    pub stroke_px: f64,
    pub ink: u8,
    pub paper: u8,
    pub circle_radii: Vec<f64>,
    /// Shapes for both BP families; systolic templates are the mirrored arrows.
    pub arrows: Vec<ArrowShape>,
    /// Per-family thresholds, used for every template of the family.
    pub thresholds: Thresholds,
}

impl Default for TemplateParams {
    fn default() -> Self {
        let arrow = |angle_deg, head_len, head_half_angle_deg, shaft_len| ArrowShape {
            angle_deg,
            head_len,
            head_half_angle_deg,
            shaft_len,
        };
        Self {
            stroke_px: 1.5,
            ink: 40,
            paper: 255,
            circle_radii: vec![3.0, 3.5, 4.0, 4.5, 5.0],
            arrows: vec![
                arrow(0.0, 7.5, 31.0, 5.0),
                arrow(-4.0, 7.5, 31.0, 5.0),
                arrow(4.0, 7.5, 31.0, 5.0),
                arrow(0.0, 6.5, 29.0, 5.0),
                arrow(0.0, 8.5, 33.0, 5.0),
                arrow(-2.0, 7.0, 30.0, 5.0),
                arrow(2.0, 8.0, 32.0, 5.0),
            ],
            thresholds: Thresholds::default(),
        }
    }
}

fn odd_side(extent: f64) -> usize {
    2 * extent.ceil() as usize + 1
}

/// Procedurally drawn templates for one symbol family. Heart-rate templates
/// are circle outlines centered in the bitmap; arrow templates are filled
/// arrowheads with a shaft, tip at the bitmap center so the match center is
/// the reading point.
pub fn builtin_templates(symbol: Symbol, params: &TemplateParams) -> Result<Vec<Template>> {
    let threshold = params.thresholds.get(symbol);
    let margin = params.stroke_px / 2.0 + 1.0;
    match symbol {
        Symbol::HeartRate => params
            .circle_radii
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let side = odd_side(r + margin);
                let mut bmp = GrayImage::filled(side, side, params.paper)?;
                let center = (side / 2) as f64;
                stroke_circle(&mut bmp, (center, center), r, params.stroke_px, params.ink);
                Template::new(format!("hr_{i}_r{r}"), symbol, threshold, bmp)
            })
            .collect(),
        Symbol::DiastolicBp | Symbol::SystolicBp => params
            .arrows
            .iter()
            .enumerate()
            .map(|(i, shape)| {
                let reach = shape.head_len.max(shape.shaft_len);
                let side = odd_side(reach + margin);
                let mut bmp = GrayImage::filled(side, side, params.paper)?;
                let center = (side / 2) as f64;
                let points_up = symbol == Symbol::DiastolicBp;
                draw_arrow(
                    &mut bmp,
                    shape,
                    (center, center),
                    points_up,
                    params.stroke_px,
                    params.ink,
                );
                Template::new(
                    format!("{}_{i}_a{}", symbol.short_name(), shape.angle_deg),
                    symbol,
                    threshold,
                    bmp,
                )
            })
            .collect(),
    }
}

pub fn builtin_pack(params: &TemplateParams) -> Result<Vec<Template>> {
    let mut all = Vec::new();
    for s in Symbol::ALL {
        all.extend(builtin_templates(s, params)?);
    }
    Ok(all)
}

// --- template packs on disk -----------------------------------------------------------

pub const PACK_MANIFEST: &str = "manifest.toml";
pub const PACK_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackEntry {
    pub name: String,
    pub symbol: Symbol,
    pub threshold: f64,
    /// Raster file, relative to the pack directory.
    pub file: String,
}

/// `manifest.toml` of a template pack directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackManifest {
    pub version: u32,
    #[serde(rename = "template", default)]
    pub templates: Vec<PackEntry>,
}

pub fn save_pack(templates: &[Template], dir: &Path) -> Result<()> {
    let mut manifest = PackManifest {
        version: PACK_VERSION,
        templates: Vec::new(),
    };
    for t in templates {
        let file = format!("{}.pgm", t.name);
        save_raster(&t.bitmap, &dir.join(&file))?;
        manifest.templates.push(PackEntry {
            name: t.name.clone(),
            symbol: t.symbol,
            threshold: t.threshold,
            file,
        });
    }
    let text = toml::to_string(&manifest).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    write_atomic(&dir.join(PACK_MANIFEST), text.as_bytes())
}

pub fn load_pack(dir: &Path) -> Result<Vec<Template>> {
    let manifest_path: PathBuf = dir.join(PACK_MANIFEST);
    let text = read_text(&manifest_path)?;
    let source = manifest_path.display().to_string();
    let manifest: PackManifest =
        toml::from_str(&text).map_err(|e| Error::format(source.clone(), e.to_string()))?;
    if manifest.version != PACK_VERSION {
        return Err(Error::format(
            source,
            format!(
                "unsupported pack version {}, expected {PACK_VERSION}",
                manifest.version
            ),
        ));
    }
    if manifest.templates.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "{source}: template pack is empty"
        )));
    }
    manifest
        .templates
        .into_iter()
        .map(|e| {
            let bitmap = load_raster(&dir.join(&e.file))?;
            Template::new(e.name, e.symbol, e.threshold, bitmap)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring_template() -> Template {
        let mut bmp = GrayImage::filled(9, 9, 255).unwrap();
        stroke_circle(&mut bmp, (4.0, 4.0), 3.0, 1.5, 30);
        Template::new("ring", Symbol::HeartRate, 0.13, bmp).unwrap()
    }

    fn paste(img: &mut GrayImage, patch: &GrayImage, top: usize, left: usize) {
        for r in 0..patch.height() {
            for c in 0..patch.width() {
                img.set(top + r, left + c, patch.get(r, c));
            }
        }
    }

    fn window(img: &GrayImage, r: usize, c: usize, h: usize, w: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(h * w);
        for rr in r..r + h {
            for cc in c..c + w {
                out.push(f64::from(img.get(rr, cc)));
            }
        }
        out
    }

    #[test]
    fn perfect_and_inverted_matches() {
        let t = ring_template();
        let mut img = GrayImage::filled(40, 30, 255).unwrap();
        paste(&mut img, &t.bitmap, 5, 7);
        let inverted =
            GrayImage::new(9, 9, t.bitmap.pixels().iter().map(|&p| 255 - p).collect()).unwrap();
        paste(&mut img, &inverted, 15, 25);
        let map = zncc_map(&img, &t).unwrap();
        assert!((map.get(5, 7) - 1.0).abs() < 1e-12);
        assert!((map.get(15, 25) + 1.0).abs() < 1e-12);
        assert_eq!(map.center_of(5, 7), (9, 11));
        // all-white window
        assert_eq!(map.get(0, 30), 0.0);
    }

    #[test]
    fn constant_template_rejected() {
        let bmp = GrayImage::filled(5, 5, 200).unwrap();
        assert!(Template::new("flat", Symbol::HeartRate, 0.1, bmp).is_err());
        let t = ring_template();
        let small = GrayImage::filled(9, 9, 255).unwrap();
        assert!(zncc_map(&small, &t).is_err());
    }

    #[test]
    fn fast_map_equals_reference_score() {
        let t = ring_template();
        let mut state = 12345u64;
        let pixels = (0..30 * 25)
            .map(|_| {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                (state >> 56) as u8
            })
            .collect();
        let img = GrayImage::new(30, 25, pixels).unwrap();
        let map = zncc_map(&img, &t).unwrap();
        let tpl: Vec<f64> = t.bitmap.pixels().iter().map(|&p| f64::from(p)).collect();
        for r in 0..map.rows {
            for c in 0..map.cols {
                let want = zncc_score(&tpl, &window(&img, r, c, 9, 9));
                assert!((map.get(r, c) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn find_matches_on_exact_copy_and_blank() {
        let t = ring_template();
        let mut img = GrayImage::filled(60, 40, 255).unwrap();
        paste(&mut img, &t.bitmap, 10, 20);
        let set = find_matches(&img, std::slice::from_ref(&t)).unwrap();
        assert!(set
            .matches
            .iter()
            .any(|m| (m.row, m.col) == (14, 24) && m.score > 0.999));
        assert!(set.matches.iter().all(|m| m.score >= 0.13));

        let blank = GrayImage::filled(60, 40, 255).unwrap();
        assert!(find_matches(&blank, &[t]).unwrap().is_empty());
        assert!(find_matches(&blank, &[]).is_err());
    }

    fn m(row: usize, col: usize, symbol: Symbol) -> Match {
        Match {
            row,
            col,
            score: 0.5,
            template: "t".into(),
            symbol,
        }
    }

    #[test]
    fn tm_extract_examples() {
        let g = GraphGeometry::default();
        let set = MatchSet {
            matches: vec![m(75, 33, Symbol::HeartRate)],
        };
        let s = tm_extract(&set, &g, Symbol::HeartRate, 0.0);
        // p = 89 -> (76/151)*180 + 30 = 120.6
        assert_eq!(s.slots[2], Some(121));
        assert_eq!(s.present_count(), 1);

        let set = MatchSet {
            matches: vec![m(90, 33, Symbol::HeartRate), m(50, 34, Symbol::HeartRate)],
        };
        let s = tm_extract(&set, &g, Symbol::HeartRate, 0.0);
        assert_eq!(s.slots[2], Some(row_to_reading(50.0, &g, 0.0)));

        let s = tm_extract(&MatchSet::default(), &g, Symbol::SystolicBp, -2.6);
        assert_eq!(s.present_count(), 0);
    }

    #[test]
    fn tm_extract_filters_symbol_and_suppresses() {
        let g = GraphGeometry::default();
        let set = MatchSet {
            matches: vec![
                m(40, 33, Symbol::SystolicBp),
                m(80, 33, Symbol::HeartRate),
                // slot 3 candidate within 16 columns of the slot-2 pick
                m(30, 44, Symbol::HeartRate),
                m(60, 50, Symbol::HeartRate),
            ],
        };
        let selected = select_matches(&set, &g, Symbol::HeartRate);
        assert_eq!(selected[2].map(|m| m.row), Some(80));
        assert_eq!(selected[3].map(|m| (m.row, m.col)), Some((60, 50)));
    }

    #[test]
    fn builtin_families() {
        let params = TemplateParams::default();
        let hr = builtin_templates(Symbol::HeartRate, &params).unwrap();
        assert_eq!(hr.len(), 5);
        assert!(hr.iter().all(|t| t.threshold == 0.13));
        let dbp = builtin_templates(Symbol::DiastolicBp, &params).unwrap();
        let sbp = builtin_templates(Symbol::SystolicBp, &params).unwrap();
        assert_eq!(dbp.len(), 7);
        assert_eq!(sbp.len(), 7);
        let mean = |ts: &[Template]| ts.iter().map(|t| t.threshold).sum::<f64>() / ts.len() as f64;
        assert!((mean(&dbp) - 0.16).abs() < 1e-12);
        assert!((mean(&sbp) - 0.18).abs() < 1e-12);
        for t in hr.iter().chain(&dbp).chain(&sbp) {
            assert!(t.bitmap.width() % 2 == 1 && t.bitmap.height() % 2 == 1);
            let first = t.bitmap.pixels()[0];
            assert!(t.bitmap.pixels().iter().any(|&p| p != first));
        }
        // arrow tips sit on the bitmap center
        for t in dbp.iter().chain(&sbp) {
            let c = t.bitmap.width() / 2;
            assert!(t.bitmap.get(c, c) < 128, "{}", t.name);
        }
    }

    #[test]
    fn pack_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pack = builtin_pack(&TemplateParams::default()).unwrap();
        save_pack(&pack, dir.path()).unwrap();
        let manifest = std::fs::read(dir.path().join(PACK_MANIFEST)).unwrap();
        let loaded = load_pack(dir.path()).unwrap();
        assert_eq!(loaded, pack);
        save_pack(&loaded, dir.path()).unwrap();
        assert_eq!(
            std::fs::read(dir.path().join(PACK_MANIFEST)).unwrap(),
            manifest
        );
    }

    #[test]
    fn missing_or_empty_pack() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_pack(dir.path()), Err(Error::Io { .. })));
        std::fs::write(dir.path().join(PACK_MANIFEST), "version = 1\n").unwrap();
        assert!(load_pack(dir.path()).is_err());
        std::fs::write(dir.path().join(PACK_MANIFEST), "version = 9\n").unwrap();
        assert!(matches!(load_pack(dir.path()), Err(Error::Format { .. })));
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(100))]

            #[test]
            fn zncc_bounded_and_affine_invariant(
                a in proptest::collection::vec(0u8..=127, 25),
                b in proptest::collection::vec(0u8..=127, 25),
                scale in 0.01f64..50.0,
                shift in -500.0f64..500.0,
                int_scale in 1u8..=2,
                int_shift in 0u8..=1,
            ) {
                let fa: Vec<f64> = a.iter().map(|&x| f64::from(x)).collect();
                let fb: Vec<f64> = b.iter().map(|&x| f64::from(x)).collect();
                let s = zncc_score(&fa, &fb);
                prop_assert!((-1.0..=1.0).contains(&s));

                let fb2: Vec<f64> = fb.iter().map(|x| scale * x + shift).collect();
                prop_assert!((zncc_score(&fa, &fb2) - s).abs() <= 1e-9);

                // integer-exact transform through the raster path
                let flat = fa.iter().all(|&x| x == fa[0]);
                prop_assume!(!flat);
                let tpl = Template::new("t", Symbol::HeartRate, 0.0, GrayImage::new(5, 5, a.clone()).unwrap()).unwrap();
                let mut img = GrayImage::filled(7, 6, 0).unwrap();
                let mut img2 = GrayImage::filled(7, 6, 0).unwrap();
                for r in 0..5 {
                    for c in 0..5 {
                        let v = b[r * 5 + c];
                        img.set(r, c, v);
                        img2.set(r, c, v * int_scale + int_shift);
                    }
                }
                let m1 = zncc_map(&img, &tpl).unwrap();
                let m2 = zncc_map(&img2, &tpl).unwrap();
                prop_assert!((m1.get(0, 0) - s).abs() <= 1e-9);
                prop_assert!((m2.get(0, 0) - s).abs() <= 1e-9);
                for v in &m1.scores {
                    prop_assert!((-1.0..=1.0).contains(v));
                }
            }
        }
    }
}

//! Anti-aliased stroke rendering shared by the template generator and the
//! synthetic flowsheet renderer.

use serde::{Deserialize, Serialize};

use crate::raster::GrayImage;

pub type Point = (f64, f64); // (row, col)

/// Coverage of a stroke of `width` at centerline distance `d`; ramps linearly
/// over one pixel at the stroke edge.
fn stroke_coverage(d: f64, width: f64) -> f64 {
    (width / 2.0 + 0.5 - d).clamp(0.0, 1.0)
}

/// Blends `ink` into every pixel of the padded bounds by `coverage`, only ever darkening.
fn paint(
    img: &mut GrayImage,
    bounds: (f64, f64, f64, f64),
    pad: f64,
    ink: u8,
    coverage: impl Fn(f64, f64) -> f64,
) {
    let (r0, c0, r1, c1) = bounds;
    let rmin = (r0 - pad).floor().max(0.0) as usize;
    let cmin = (c0 - pad).floor().max(0.0) as usize;
    let rmax = ((r1 + pad).ceil() as isize).min(img.height() as isize - 1);
    let cmax = ((c1 + pad).ceil() as isize).min(img.width() as isize - 1);
    if rmax < 0 || cmax < 0 {
        return;
    }
    for r in rmin..=rmax as usize {
        for c in cmin..=cmax as usize {
            let coverage = coverage(r as f64, c as f64);
            if coverage <= 0.0 {
                continue;
            }
            let cur = f64::from(img.get(r, c));
            let blended = cur * (1.0 - coverage) + f64::from(ink) * coverage;
            if blended < cur {
                img.set(r, c, blended.round() as u8);
            }
        }
    }
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dr, dc) = (b.0 - a.0, b.1 - a.1);
    let len2 = dr * dr + dc * dc;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dr + (p.1 - a.1) * dc) / len2).clamp(0.0, 1.0)
    };
    let (qr, qc) = (a.0 + t * dr, a.1 + t * dc);
    ((p.0 - qr).powi(2) + (p.1 - qc).powi(2)).sqrt()
}

fn bounds_of(points: impl IntoIterator<Item = Point>) -> (f64, f64, f64, f64) {
    let mut bounds = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in points {
        bounds.0 = bounds.0.min(p.0);
        bounds.1 = bounds.1.min(p.1);
        bounds.2 = bounds.2.max(p.0);
        bounds.3 = bounds.3.max(p.1);
    }
    bounds
}

fn polyline_distance(p: Point, segments: &[(Point, Point)]) -> f64 {
    segments
        .iter()
        .map(|&(a, b)| segment_distance(p, a, b))
        .fold(f64::INFINITY, f64::min)
}

/// Signed distance to a triangle's boundary, negative inside.
fn triangle_signed_distance(p: Point, tri: &[Point; 3]) -> f64 {
    let cross = |a: Point, b: Point| (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    let s = [
        cross(tri[0], tri[1]),
        cross(tri[1], tri[2]),
        cross(tri[2], tri[0]),
    ];
    let inside = s.iter().all(|&x| x >= 0.0) || s.iter().all(|&x| x <= 0.0);
    let d = (0..3)
        .map(|i| segment_distance(p, tri[i], tri[(i + 1) % 3]))
        .fold(f64::INFINITY, f64::min);
    if inside {
        -d
    } else {
        d
    }
}

pub fn stroke_polyline(img: &mut GrayImage, segments: &[(Point, Point)], width: f64, ink: u8) {
    if segments.is_empty() {
        return;
    }
    let bounds = bounds_of(segments.iter().flat_map(|&(a, b)| [a, b]));
    paint(img, bounds, width / 2.0 + 1.0, ink, |r, c| {
        stroke_coverage(polyline_distance((r, c), segments), width)
    });
}

pub fn stroke_circle(img: &mut GrayImage, center: Point, radius: f64, width: f64, ink: u8) {
    let bounds = (
        center.0 - radius,
        center.1 - radius,
        center.0 + radius,
        center.1 + radius,
    );
    paint(img, bounds, width / 2.0 + 1.0, ink, |r, c| {
        let d = (((r - center.0).powi(2) + (c - center.1).powi(2)).sqrt() - radius).abs();
        stroke_coverage(d, width)
    });
}

/// Draws an arrow with a filled head: the head triangle is filled and
/// outlined, the shaft is stroked.
pub fn draw_arrow(
    img: &mut GrayImage,
    shape: &ArrowShape,
    tip: Point,
    points_up: bool,
    width: f64,
    ink: u8,
) {
    let segs = shape.segments(tip, points_up);
    let head = shape.head(tip, points_up);
    let bounds = bounds_of(segs.iter().flat_map(|&(a, b)| [a, b]));
    paint(img, bounds, width / 2.0 + 1.0, ink, |r, c| {
        let fill = (0.5 - triangle_signed_distance((r, c), &head)).clamp(0.0, 1.0);
        let edges = [(head[1], head[2]), segs[0], segs[1], segs[2]];
        fill.max(stroke_coverage(polyline_distance((r, c), &edges), width))
    });
}

/// Arrow geometry: a head opening away from the tip plus a shaft.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrowShape {
    /// Rotation about the tip, degrees, positive = clockwise on the raster.
    pub angle_deg: f64,
    pub head_len: f64,
    /// Angle between each head arm and the shaft, degrees.
    pub head_half_angle_deg: f64,
    pub shaft_len: f64,
}

impl ArrowShape {
    /// Centerline segments of the arrow with its tip at `tip`. `points_up`
    /// arrows have the tip on top and the body below it.
    pub fn segments(&self, tip: Point, points_up: bool) -> Vec<(Point, Point)> {
        let body = if points_up { 1.0 } else { -1.0 };
        let rot = self.angle_deg.to_radians();
        let half = self.head_half_angle_deg.to_radians();
        // direction from tip into the body, as (row, col), rotated by `a`
        let dir = |a: f64| (body * a.cos(), -body * a.sin());
        let end = |a: f64, len: f64| {
            let (dr, dc) = dir(a);
            (tip.0 + dr * len, tip.1 + dc * len)
        };
        vec![
            (tip, end(rot - half, self.head_len)),
            (tip, end(rot + half, self.head_len)),
            (tip, end(rot, self.shaft_len)),
        ]
    }

    /// Head triangle `[tip, arm end, arm end]`.
    pub fn head(&self, tip: Point, points_up: bool) -> [Point; 3] {
        let segs = self.segments(tip, points_up);
        [tip, segs[0].1, segs[1].1]
    }

    /// Extent of the unrotated arrow below (or above) the tip, and its half width.
    pub fn extent(&self) -> (f64, f64) {
        let half = self.head_half_angle_deg.to_radians();
        let length = self.shaft_len.max(self.head_len * half.cos());
        (length, self.head_len * half.sin())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_stroke_darkens_ring_only() {
        let mut img = GrayImage::filled(21, 21, 255).unwrap();
        stroke_circle(&mut img, (10.0, 10.0), 5.0, 1.0, 0);
        assert_eq!(img.get(10, 10), 255);
        assert_eq!(img.get(5, 10), 0);
        assert_eq!(img.get(10, 15), 0);
        assert_eq!(img.get(0, 0), 255);
    }

    #[test]
    fn arrow_tip_is_extreme_point() {
        let shape = ArrowShape {
            angle_deg: 0.0,
            head_len: 6.0,
            head_half_angle_deg: 30.0,
            shaft_len: 9.0,
        };
        let up = shape.segments((10.0, 10.0), true);
        for (a, b) in &up {
            assert!(a.0 >= 10.0 - 1e-12 && b.0 >= 10.0 - 1e-12);
        }
        let down = shape.segments((10.0, 10.0), false);
        for (a, b) in &down {
            assert!(a.0 <= 10.0 + 1e-12 && b.0 <= 10.0 + 1e-12);
        }
        let (len, half_w) = shape.extent();
        assert!((len - 9.0).abs() < 1e-12);
        assert!((half_w - 3.0).abs() < 1e-12);
    }

    #[test]
    fn filled_arrow_head() {
        let shape = ArrowShape {
            angle_deg: 0.0,
            head_len: 8.0,
            head_half_angle_deg: 30.0,
            shaft_len: 12.0,
        };
        let mut img = GrayImage::filled(30, 30, 255).unwrap();
        draw_arrow(&mut img, &shape, (5.0, 15.0), true, 1.0, 0);
        // inside the head, off the shaft
        assert_eq!(img.get(11, 13), 0);
        assert_eq!(img.get(11, 17), 0);
        // beside the shaft below the head
        assert_eq!(img.get(16, 15), 0);
        assert_eq!(img.get(16, 12), 255);
        // nothing above the tip
        assert!((0..4).all(|r| (0..30).all(|c| img.get(r, c) == 255)));
        assert!(triangle_signed_distance((10.0, 15.0), &shape.head((5.0, 15.0), true)) < 0.0);
    }

    #[test]
    fn painting_clips_at_border() {
        let mut img = GrayImage::filled(5, 5, 255).unwrap();
        stroke_circle(&mut img, (0.0, 0.0), 3.0, 1.5, 0);
        stroke_polyline(&mut img, &[((-10.0, -10.0), (-5.0, -5.0))], 1.0, 0);
        assert!(img.pixels().iter().any(|&p| p < 255));
    }
}

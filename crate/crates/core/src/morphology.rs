//! Binary mask cleaning: connected components, small-object removal, disk
//! opening and region properties.

use serde::{Deserialize, Serialize};

use crate::raster::BinaryMask;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (0, -1), (0, 1), (1, 0)],
            Connectivity::Eight => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }
}

/// Inclusive pixel bounds of a region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_row: usize,
    pub min_col: usize,
    pub max_row: usize,
    pub max_col: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub label: u32,
    pub area: usize,
    pub centroid_row: f64,
    pub centroid_col: f64,
    pub bbox: BoundingBox,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledRegions {
    pub width: usize,
    pub height: usize,
    /// Row-major labels, 0 = background, `k >= 1` = component id.
    pub labels: Vec<u32>,
    pub regions: Vec<Region>,
}

impl LabeledRegions {
    pub fn label_at(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }
}

/// Labels foreground components. Labels are assigned `1..=K` in raster-scan
/// order of each component's first pixel, so regions come out sorted by label.
pub fn label_components(mask: &BinaryMask, connectivity: Connectivity) -> LabeledRegions {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut labels = vec![0u32; w * h];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !bits[start] || labels[start] != 0 {
            continue;
        }
        let label = regions.len() as u32 + 1;
        labels[start] = label;
        stack.push(start);
        let (mut area, mut sum_r, mut sum_c) = (0usize, 0u64, 0u64);
        let mut bbox = BoundingBox {
            min_row: start / w,
            min_col: start % w,
            max_row: start / w,
            max_col: start % w,
        };
        while let Some(idx) = stack.pop() {
            let (r, c) = (idx / w, idx % w);
            area += 1;
            sum_r += r as u64;
            sum_c += c as u64;
            bbox.min_row = bbox.min_row.min(r);
            bbox.max_row = bbox.max_row.max(r);
            bbox.min_col = bbox.min_col.min(c);
            bbox.max_col = bbox.max_col.max(c);
            for &(dr, dc) in connectivity.offsets() {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr as usize >= h || nc as usize >= w {
                    continue;
                }
                let n = nr as usize * w + nc as usize;
                if bits[n] && labels[n] == 0 {
                    labels[n] = label;
                    stack.push(n);
                }
            }
        }
        regions.push(Region {
            label,
            area,
            centroid_row: sum_r as f64 / area as f64,
            centroid_col: sum_c as f64 / area as f64,
            bbox,
        });
    }
    LabeledRegions {
        width: w,
        height: h,
        labels,
        regions,
    }
}

/// Erases every component with fewer than `min_size` pixels.
pub fn remove_small_objects(
    mask: &BinaryMask,
    min_size: usize,
    connectivity: Connectivity,
) -> BinaryMask {
    let labeled = label_components(mask, connectivity);
    let keep: Vec<bool> = std::iter::once(false)
        .chain(labeled.regions.iter().map(|r| r.area >= min_size))
        .collect();
    let bits = labeled.labels.iter().map(|&l| keep[l as usize]).collect();
    BinaryMask::new(mask.width(), mask.height(), bits).expect("dimensions preserved")
}

/// Offsets of the discrete Euclidean disk `dr^2 + dc^2 <= radius^2`.
pub fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let r2 = r * r;
    let mut out = Vec::new();
    for dr in -r..=r {
        for dc in -r..=r {
            if dr * dr + dc * dc <= r2 {
                out.push((dr, dc));
            }
        }
    }
    out
}

/// Erosion by a structuring element; off-raster counts as background.
pub fn erode(mask: &BinaryMask, element: &[(isize, isize)]) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut bits = vec![false; w * h];
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            bits[r * w + c] = element
                .iter()
                .all(|&(dr, dc)| mask.get_signed(r as isize + dr, c as isize + dc));
        }
    }
    BinaryMask::new(w, h, bits).expect("dimensions preserved")
}

/// Dilation by a structuring element (reflected, so asymmetric elements work).
pub fn dilate(mask: &BinaryMask, element: &[(isize, isize)]) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let mut bits = vec![false; w * h];
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            for &(dr, dc) in element {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr >= 0 && nc >= 0 && (nr as usize) < h && (nc as usize) < w {
                    bits[nr as usize * w + nc as usize] = true;
                }
            }
        }
    }
    BinaryMask::new(w, h, bits).expect("dimensions preserved")
}

pub fn dilate_disk(mask: &BinaryMask, radius: usize) -> BinaryMask {
    dilate(mask, &disk_offsets(radius))
}

/// Morphological opening (erosion then dilation) by a Euclidean disk.
pub fn opening_disk(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let element = disk_offsets(radius);
    dilate(&erode(mask, &element), &element)
}

/// One record per connected component, ordered by label.
pub fn region_props(mask: &BinaryMask, connectivity: Connectivity) -> Vec<Region> {
    label_components(mask, connectivity).regions
}

use serde::{Deserialize, Serialize};

use super::BoundingBox;
use crate::{Error, Result};

/// Dense binary image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    height: u32,
    width: u32,
    data: Vec<bool>,
}

impl Bitmap {
    pub fn new(height: u32, width: u32) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "bitmap dimensions must be positive, got {height}x{width}"
            )));
        }
        Ok(Self {
            height,
            width,
            data: vec![false; height as usize * width as usize],
        })
    }

    /// Builds a bitmap from row-major pixels.
    pub fn from_rows(height: u32, width: u32, data: Vec<bool>) -> Result<Self> {
        let mut bitmap = Self::new(height, width)?;
        if data.len() != bitmap.data.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} pixels, got {}",
                bitmap.data.len(),
                data.len()
            )));
        }
        bitmap.data = data;
        Ok(bitmap)
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn get(&self, row: u32, col: u32) -> bool {
        self.data[row as usize * self.width as usize + col as usize]
    }

    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        self.data[row as usize * self.width as usize + col as usize] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }
}

/// Binary instance mask stored as COCO uncompressed RLE.
///
/// Runs are column-major and alternate background/foreground starting with
/// background. Only the first run may be zero; the runs sum to
/// `height * width`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RleJson", into = "RleJson")]
pub struct InstanceMask {
    height: u32,
    width: u32,
    runs: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct RleJson {
    size: [u32; 2],
    counts: Vec<u32>,
}

impl TryFrom<RleJson> for InstanceMask {
    type Error = Error;

    fn try_from(v: RleJson) -> Result<Self> {
        InstanceMask::from_runs(v.size[0], v.size[1], v.counts)
    }
}

impl From<InstanceMask> for RleJson {
    fn from(m: InstanceMask) -> Self {
        RleJson {
            size: [m.height, m.width],
            counts: m.runs,
        }
    }
}

impl InstanceMask {
    /// Validates a run list; this is the decode-error path for external RLE.
    pub fn from_runs(height: u32, width: u32, runs: Vec<u32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidRle(format!(
                "size must be positive, got {height}x{width}"
            )));
        }
        let total: u64 = runs.iter().map(|&r| r as u64).sum();
        let expected = height as u64 * width as u64;
        if total != expected {
            return Err(Error::InvalidRle(format!(
                "runs sum to {total}, expected {height}x{width} = {expected}"
            )));
        }
        if let Some(i) = runs.iter().skip(1).position(|&r| r == 0) {
            return Err(Error::InvalidRle(format!("zero-length run at index {}", i + 1)));
        }
        Ok(Self {
            height,
            width,
            runs,
        })
    }

    pub fn empty(height: u32, width: u32) -> Result<Self> {
        Self::from_intervals(height, width, std::iter::empty())
    }

    /// Builds a mask from sorted, non-overlapping half-open foreground
    /// ranges of column-major linear indices. Adjacent ranges are merged.
    pub(crate) fn from_intervals(
        height: u32,
        width: u32,
        intervals: impl IntoIterator<Item = (u64, u64)>,
    ) -> Result<Self> {
        let total = height as u64 * width as u64;
        if total == 0 {
            return Err(Error::InvalidArgument("mask dimensions must be positive".into()));
        }
        let mut runs = Vec::new();
        let mut cursor = 0u64;
        let mut open: Option<(u64, u64)> = None;
        let flush = |(s, e): (u64, u64), cursor: &mut u64, runs: &mut Vec<u32>| {
            runs.push((s - *cursor) as u32);
            runs.push((e - s) as u32);
            *cursor = e;
        };
        for (s, e) in intervals {
            debug_assert!(s <= e && e <= total);
            if s == e {
                continue;
            }
            match open {
                Some((os, oe)) if s <= oe => open = Some((os, oe.max(e))),
                Some(prev) => {
                    flush(prev, &mut cursor, &mut runs);
                    open = Some((s, e));
                }
                None => open = Some((s, e)),
            }
        }
        if let Some(prev) = open {
            flush(prev, &mut cursor, &mut runs);
        }
        if cursor < total {
            runs.push((total - cursor) as u32);
        }
        if runs.is_empty() {
            runs.push(0);
        }
        Ok(Self {
            height,
            width,
            runs,
        })
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    /// Foreground ranges as half-open column-major index intervals.
    pub fn intervals(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.runs.iter().enumerate().filter_map(move |(i, &r)| {
            let start = pos;
            pos += r as u64;
            (i % 2 == 1 && r > 0).then_some((start, pos))
        })
    }

    pub fn area(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).map(|&r| r as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::ShapeMismatch(
                self.height,
                self.width,
                other.height,
                other.width,
            ));
        }
        Ok(())
    }

    pub fn intersection_area(&self, other: &Self) -> Result<u64> {
        self.check_shape(other)?;
        let a: Vec<_> = self.intervals().collect();
        let b: Vec<_> = other.intervals().collect();
        let (mut i, mut j, mut acc) = (0, 0, 0u64);
        while i < a.len() && j < b.len() {
            let lo = a[i].0.max(b[j].0);
            let hi = a[i].1.min(b[j].1);
            if hi > lo {
                acc += hi - lo;
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Ok(acc)
    }

    /// Tight pixel bounding box of the foreground, `None` when empty.
    pub fn tight_box(&self) -> Option<BoundingBox> {
        let h = self.height as u64;
        let (mut r0, mut c0, mut r1, mut c1) = (u64::MAX, u64::MAX, 0u64, 0u64);
        for (s, e) in self.intervals() {
            // An interval may wrap across columns.
            let (cs, ce) = (s / h, (e - 1) / h);
            c0 = c0.min(cs);
            c1 = c1.max(ce);
            if cs == ce {
                r0 = r0.min(s % h);
                r1 = r1.max((e - 1) % h);
            } else {
                // first column runs to the bottom row, last starts at row 0
                r0 = 0;
                r1 = h - 1;
            }
        }
        if c0 == u64::MAX {
            return None;
        }
        BoundingBox::new(c0 as f64, r0 as f64, (c1 + 1) as f64, (r1 + 1) as f64).ok()
    }

    /// Pixels covered by at least `min_count` of the masks.
    fn coverage_at_least(masks: &[InstanceMask], min_count: usize) -> Result<InstanceMask> {
        let first = masks.first().ok_or(Error::Empty("mask list"))?;
        let mut events: Vec<(u64, i32)> = Vec::new();
        for m in masks {
            first.check_shape(m)?;
            for (s, e) in m.intervals() {
                events.push((s, 1));
                events.push((e, -1));
            }
        }
        events.sort_unstable();
        let mut out = Vec::new();
        let mut depth = 0i64;
        let mut start = None;
        let mut k = 0;
        while k < events.len() {
            let pos = events[k].0;
            while k < events.len() && events[k].0 == pos {
                depth += events[k].1 as i64;
                k += 1;
            }
            let on = depth >= min_count as i64;
            match (on, start) {
                (true, None) => start = Some(pos),
                (false, Some(s)) => {
                    out.push((s, pos));
                    start = None;
                }
                _ => {}
            }
        }
        InstanceMask::from_intervals(first.height, first.width, out)
    }
}

pub fn rle_encode(bitmap: &Bitmap) -> InstanceMask {
    let (h, w) = (bitmap.height, bitmap.width);
    let mut intervals = Vec::new();
    let mut start = None;
    for col in 0..w {
        for row in 0..h {
            let idx = col as u64 * h as u64 + row as u64;
            match (bitmap.get(row, col), start) {
                (true, None) => start = Some(idx),
                (false, Some(s)) => {
                    intervals.push((s, idx));
                    start = None;
                }
                _ => {}
            }
        }
    }
    if let Some(s) = start {
        intervals.push((s, h as u64 * w as u64));
    }
    InstanceMask::from_intervals(h, w, intervals).expect("bitmap dimensions are positive")
}

pub fn rle_decode(mask: &InstanceMask) -> Bitmap {
    let mut bitmap = Bitmap::new(mask.height, mask.width).expect("mask dimensions are positive");
    let h = mask.height as u64;
    for (s, e) in mask.intervals() {
        for idx in s..e {
            bitmap.set((idx % h) as u32, (idx / h) as u32, true);
        }
    }
    bitmap
}

/// Foreground intersection over union. Two empty masks agree perfectly (1.0).
pub fn mask_iou(a: &InstanceMask, b: &InstanceMask) -> Result<f64> {
    let inter = a.intersection_area(b)?;
    let union = a.area() + b.area() - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Dice similarity `2|a∩b| / (|a| + |b|)`. Two empty masks give 1.0.
pub fn dice(a: &InstanceMask, b: &InstanceMask) -> Result<f64> {
    let inter = a.intersection_area(b)?;
    let total = a.area() + b.area();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Per-pixel majority vote; a pixel set in exactly half the masks is kept.
pub fn mean_mask(masks: &[InstanceMask]) -> Result<InstanceMask> {
    let k = masks.len();
    InstanceMask::coverage_at_least(masks, k.div_ceil(2).max(1))
}

pub fn union_masks(masks: &[InstanceMask]) -> Result<InstanceMask> {
    InstanceMask::coverage_at_least(masks, 1)
}

/// Rasterizes the ellipse inscribed in `bbox` on a `height` × `width` grid,
/// sampling pixel centres. Never returns an empty mask for a box that
/// intersects the grid: tiny ellipses fall back to the pixel holding the
/// centre.
pub fn ellipse_mask(bbox: &BoundingBox, height: u32, width: u32) -> Result<InstanceMask> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument("mask dimensions must be positive".into()));
    }
    let (cx, cy) = bbox.center();
    let (a, b) = (bbox.width() / 2.0, bbox.height() / 2.0);
    let h = height as u64;
    let col_lo = (bbox.x1() - 0.5).ceil().max(0.0) as i64;
    let col_hi = ((bbox.x2() - 0.5).floor() as i64).min(width as i64 - 1);
    let mut intervals = Vec::new();
    for col in col_lo..=col_hi {
        let t = (col as f64 + 0.5 - cx) / a;
        if t.abs() > 1.0 {
            continue;
        }
        let dy = b * (1.0 - t * t).sqrt();
        let r_lo = ((cy - dy - 0.5).ceil() as i64).max(0);
        let r_hi = ((cy + dy - 0.5).floor() as i64).min(height as i64 - 1);
        if r_lo <= r_hi {
            let base = col as u64 * h;
            intervals.push((base + r_lo as u64, base + r_hi as u64 + 1));
        }
    }
    if intervals.is_empty() {
        let col = (cx.floor() as i64).clamp(0, width as i64 - 1) as u64;
        let row = (cy.floor() as i64).clamp(0, height as i64 - 1) as u64;
        intervals.push((col * h + row, col * h + row + 1));
    }
    InstanceMask::from_intervals(height, width, intervals)
}

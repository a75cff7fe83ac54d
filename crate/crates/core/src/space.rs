//! Discrete `(x, y, scale)` search space, window enumeration and box geometry.
//!
//! Windows are addressed by top-left grid indices in the zoomed image of
//! their scale. Scale `s` zooms the image out by `scale_factor^s`, so a
//! window at a higher scale covers a larger region of the original image.
//! Geometry leaves the grid through [`SearchSpace::to_box`], which yields a
//! center-based box in original-image pixels.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpaceError {
    #[error("stride must be at least 1")]
    ZeroStride,
    #[error("template dimensions must be positive, got {0}x{1}")]
    EmptyTemplate(u32, u32),
    #[error("scale_factor must be finite and > 1, got {0}")]
    BadScaleFactor(f64),
    #[error("scale_count must be at least 1")]
    NoScales,
}

/// A candidate window. `x` and `y` are grid indices (column, row) at the
/// space's stride in the zoomed grid of scale `s`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Window {
    pub x: u32,
    pub y: u32,
    pub s: u32,
}

impl Window {
    pub const fn new(x: u32, y: u32, s: u32) -> Self {
        Self { x, y, s }
    }
}

/// Axis-aligned box in original-image pixels, center based.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { cx, cy, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    fn x_range(&self) -> (f64, f64) {
        (self.cx - 0.5 * self.w, self.cx + 0.5 * self.w)
    }

    fn y_range(&self) -> (f64, f64) {
        (self.cy - 0.5 * self.h, self.cy + 0.5 * self.h)
    }
}

/// Intersection over union. Symmetric, in `[0, 1]`, `1` for identical boxes.
pub fn overlap(a: &BBox, b: &BBox) -> f64 {
    let (ax0, ax1) = a.x_range();
    let (bx0, bx1) = b.x_range();
    let (ay0, ay1) = a.y_range();
    let (by0, by1) = b.y_range();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// The user-facing description of a search space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceParams {
    pub image_w: u32,
    pub image_h: u32,
    pub template_w: u32,
    pub template_h: u32,
    pub stride: u32,
    pub scale_factor: f64,
    pub scale_count: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Level {
    zoom: f64,
    cols: u32,
    rows: u32,
    offset: u64,
}

/// Immutable search space with per-scale grid dimensions precomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    params: SpaceParams,
    levels: Vec<Level>,
    total: u64,
}

impl SearchSpace {
    pub fn new(params: SpaceParams) -> Result<Self, SpaceError> {
        if params.stride == 0 {
            return Err(SpaceError::ZeroStride);
        }
        if params.template_w == 0 || params.template_h == 0 {
            return Err(SpaceError::EmptyTemplate(params.template_w, params.template_h));
        }
        if !(params.scale_factor.is_finite() && params.scale_factor > 1.0) {
            return Err(SpaceError::BadScaleFactor(params.scale_factor));
        }
        if params.scale_count == 0 {
            return Err(SpaceError::NoScales);
        }

        let mut levels = Vec::with_capacity(params.scale_count as usize);
        let mut offset = 0u64;
        for s in 0..params.scale_count {
            let zoom = params.scale_factor.powi(s as i32);
            let zw = (params.image_w as f64 / zoom).floor() as u32;
            let zh = (params.image_h as f64 / zoom).floor() as u32;
            let cols = grid_len(zw, params.template_w, params.stride);
            let rows = grid_len(zh, params.template_h, params.stride);
            levels.push(Level { zoom, cols, rows, offset });
            offset += cols as u64 * rows as u64;
        }
        Ok(Self { params, levels, total: offset })
    }

    pub fn params(&self) -> &SpaceParams {
        &self.params
    }

    /// Total number of windows `N` over all scales.
    pub fn window_count(&self) -> u64 {
        self.total
    }

    pub fn scale_count(&self) -> u32 {
        self.params.scale_count
    }

    pub fn stride(&self) -> u32 {
        self.params.stride
    }

    pub fn scale_factor(&self) -> f64 {
        self.params.scale_factor
    }

    pub fn template(&self) -> (u32, u32) {
        (self.params.template_w, self.params.template_h)
    }

    /// Zoom-out factor of scale `s`.
    pub fn zoom(&self, s: u32) -> f64 {
        self.levels[s as usize].zoom
    }

    /// Grid columns and rows at scale `s`.
    pub fn grid(&self, s: u32) -> (u32, u32) {
        let l = &self.levels[s as usize];
        (l.cols, l.rows)
    }

    /// Number of windows at scale `s` (the single-scale count `M`).
    pub fn scale_window_count(&self, s: u32) -> u64 {
        let (c, r) = self.grid(s);
        c as u64 * r as u64
    }

    pub fn contains(&self, w: Window) -> bool {
        match self.levels.get(w.s as usize) {
            Some(l) => w.x < l.cols && w.y < l.rows,
            None => false,
        }
    }

    /// Position of `w` in enumeration order.
    pub fn index_of(&self, w: Window) -> u64 {
        let l = &self.levels[w.s as usize];
        l.offset + w.y as u64 * l.cols as u64 + w.x as u64
    }

    /// Inverse of [`index_of`](Self::index_of). `index` must be below `N`.
    pub fn window_at(&self, index: u64) -> Window {
        debug_assert!(index < self.total);
        let s = self.levels.partition_point(|l| l.offset <= index) - 1;
        let l = &self.levels[s];
        let local = index - l.offset;
        let cols = l.cols as u64;
        Window::new((local % cols) as u32, (local / cols) as u32, s as u32)
    }

    /// Every window, scale by scale from small to large, each scale row by
    /// row from top to bottom, each row left to right.
    pub fn enumerate_all(&self) -> impl Iterator<Item = Window> + '_ {
        self.levels.iter().enumerate().flat_map(|(s, l)| {
            (0..l.rows).flat_map(move |y| (0..l.cols).map(move |x| Window::new(x, y, s as u32)))
        })
    }

    pub fn to_box(&self, w: Window) -> BBox {
        let zoom = self.zoom(w.s);
        let (tw, th) = (self.params.template_w as f64, self.params.template_h as f64);
        let stride = self.params.stride as f64;
        BBox {
            cx: (w.x as f64 * stride + 0.5 * tw) * zoom,
            cy: (w.y as f64 * stride + 0.5 * th) * zoom,
            w: tw * zoom,
            h: th * zoom,
        }
    }

    /// Grid position at scale `s` whose box center is nearest to the
    /// original-image point `(cx, cy)`. Not clamped; may lie off the grid.
    pub fn locate(&self, cx: f64, cy: f64, s: u32) -> (i64, i64) {
        let zoom = self.zoom(s);
        let stride = self.params.stride as f64;
        let x = (cx / zoom - 0.5 * self.params.template_w as f64) / stride;
        let y = (cy / zoom - 0.5 * self.params.template_h as f64) / stride;
        (x.round() as i64, y.round() as i64)
    }
}

fn grid_len(extent: u32, template: u32, stride: u32) -> u32 {
    if extent < template {
        0
    } else {
        (extent - template) / stride + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space(iw: u32, ih: u32, tw: u32, th: u32, stride: u32, f: f64, n: u32) -> SearchSpace {
        SearchSpace::new(SpaceParams {
            image_w: iw,
            image_h: ih,
            template_w: tw,
            template_h: th,
            stride,
            scale_factor: f,
            scale_count: n,
        })
        .unwrap()
    }

    #[test]
    fn exact_tiling_gives_four_windows() {
        let sp = space(16, 16, 8, 8, 8, 1.2, 1);
        assert_eq!(sp.window_count(), 4);
        let all: Vec<_> = sp.enumerate_all().collect();
        assert_eq!(
            all,
            vec![Window::new(0, 0, 0), Window::new(1, 0, 0), Window::new(0, 1, 0), Window::new(1, 1, 0)]
        );
    }

    #[test]
    fn template_larger_than_image_has_no_windows() {
        let sp = space(10, 10, 16, 16, 1, 1.1, 4);
        assert_eq!(sp.window_count(), 0);
        assert_eq!(sp.enumerate_all().count(), 0);
    }

    #[test]
    fn hand_counted_pyramid() {
        // 40x30 image, 8x8 template, stride 4, factor 2:
        // s0: 40x30 -> 9 x 6; s1: 20x15 -> 4 x 2; s2: 10x7 -> 1 x 0.
        let sp = space(40, 30, 8, 8, 4, 2.0, 3);
        assert_eq!(sp.grid(0), (9, 6));
        assert_eq!(sp.grid(1), (4, 2));
        assert_eq!(sp.grid(2), (1, 0));
        assert_eq!(sp.window_count(), 62);
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = SpaceParams {
            image_w: 10,
            image_h: 10,
            template_w: 2,
            template_h: 2,
            stride: 0,
            scale_factor: 1.1,
            scale_count: 1,
        };
        assert_eq!(SearchSpace::new(p.clone()), Err(SpaceError::ZeroStride));
        p.stride = 1;
        p.scale_factor = 1.0;
        assert!(matches!(SearchSpace::new(p.clone()), Err(SpaceError::BadScaleFactor(_))));
        p.scale_factor = 1.1;
        p.scale_count = 0;
        assert_eq!(SearchSpace::new(p), Err(SpaceError::NoScales));
    }

    #[test]
    fn box_at_identity_scale_is_template_sized() {
        let sp = space(200, 200, 128, 64, 8, 1.05, 2);
        let b = sp.to_box(Window::new(0, 0, 0));
        assert_eq!((b.w, b.h), (128.0, 64.0));
        let b1 = sp.to_box(Window::new(0, 0, 1));
        assert!((b1.w - 134.4).abs() < 1e-9);
        assert!((b1.h - 67.2).abs() < 1e-9);
    }

    #[test]
    fn box_center_round_trips_over_small_space() {
        let sp = space(20, 20, 4, 6, 1, 1.25, 3);
        for w in sp.enumerate_all() {
            let b = sp.to_box(w);
            let zoom = sp.zoom(w.s);
            let fx = (b.cx / zoom - 2.0) / 1.0;
            let fy = (b.cy / zoom - 3.0) / 1.0;
            assert!((fx - w.x as f64).abs() <= 0.5);
            assert!((fy - w.y as f64).abs() <= 0.5);
            let (lx, ly) = sp.locate(b.cx, b.cy, w.s);
            assert_eq!((lx, ly), (w.x as i64, w.y as i64));
        }
    }

    #[test]
    fn overlap_examples() {
        let a = BBox::new(5.0, 5.0, 10.0, 10.0);
        assert_eq!(overlap(&a, &a), 1.0);
        let far = BBox::new(50.0, 5.0, 10.0, 10.0);
        assert_eq!(overlap(&a, &far), 0.0);
        let shifted = BBox::new(10.0, 5.0, 10.0, 10.0);
        assert!((overlap(&a, &shifted) - 1.0 / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn enumeration_matches_count_and_index(
            iw in 1u32..80, ih in 1u32..80, tw in 1u32..20, th in 1u32..20,
            stride in 1u32..5, f in 1.05f64..2.0, n in 1u32..5,
        ) {
            let sp = space(iw, ih, tw, th, stride, f, n);
            let all: Vec<_> = sp.enumerate_all().collect();
            prop_assert_eq!(all.len() as u64, sp.window_count());
            for (i, w) in all.iter().enumerate() {
                prop_assert!(sp.contains(*w));
                prop_assert_eq!(sp.index_of(*w), i as u64);
                prop_assert_eq!(sp.window_at(i as u64), *w);
            }
            let mut sorted = all.clone();
            sorted.sort();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), all.len());
        }

        #[test]
        fn overlap_symmetric_and_bounded(
            a in (-50.0f64..50.0, -50.0f64..50.0, 0.1f64..40.0, 0.1f64..40.0),
            b in (-50.0f64..50.0, -50.0f64..50.0, 0.1f64..40.0, 0.1f64..40.0),
        ) {
            let a = BBox::new(a.0, a.1, a.2, a.3);
            let b = BBox::new(b.0, b.1, b.2, b.3);
            let ab = overlap(&a, &b);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab, overlap(&b, &a));
        }
    }
}

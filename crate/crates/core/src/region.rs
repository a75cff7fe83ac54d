//! Regions of rejection and acceptance.
//!
//! Marks are kept as one pair of bitgrids per scale, so membership is a
//! single word lookup. A cell is owned by whichever mark reaches it first.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{SearchSpace, Window};

#[derive(Debug, Error, PartialEq)]
pub enum RegionError {
    #[error("rejection marking requires f < t_l ({t_low}), got {f}")]
    NotRejection { f: f64, t_low: f64 },
    #[error("acceptance marking requires f >= t_h ({t_high}), got {f}")]
    NotAcceptance { f: f64, t_high: f64 },
    #[error("window {0:?} lies outside the search space")]
    OutsideSpace(Window),
    #[error("invalid radius table: {0}")]
    BadTable(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Free,
    Rejected,
    Accepted,
}

/// One response interval `[lower, next lower)` with its radius ratios
/// relative to the object width and height.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiusInterval {
    pub lower: f64,
    pub rx: f64,
    pub ry: f64,
}

/// Response-dependent rejection radii. Only the first `active_intervals`
/// intervals mark a region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadiusTable {
    pub intervals: Vec<RadiusInterval>,
    pub active_intervals: usize,
}

impl RadiusTable {
    /// HOG+SVM pedestrian table: nine response intervals, the first four
    /// active.
    pub fn pedestrian() -> Self {
        let rows = [
            (f64::NEG_INFINITY, 0.22),
            (-4.0, 0.18),
            (-3.5, 0.16),
            (-3.0, 0.12),
            (-2.5, 0.10),
            (-2.0, 0.06),
            (-1.5, 0.06),
            (-1.0, 0.02),
            (-0.5, 0.02),
        ];
        Self {
            intervals: rows.iter().map(|&(lower, r)| RadiusInterval { lower, rx: r, ry: r }).collect(),
            active_intervals: 4,
        }
    }

    /// Ten-stage cascade face table, indexed by `f = j / 10`, the first two
    /// values active.
    pub fn face() -> Self {
        let ratios = [0.100, 0.090, 0.060, 0.050, 0.050, 0.040, 0.040, 0.030, 0.040, 0.030];
        Self {
            intervals: ratios
                .iter()
                .enumerate()
                .map(|(j, &r)| RadiusInterval { lower: j as f64 / 10.0, rx: r, ry: r })
                .collect(),
            active_intervals: 2,
        }
    }

    /// Bounds must increase strictly; ratios must be nonnegative and must
    /// not increase across the active intervals.
    pub fn validate(&self) -> Result<(), RegionError> {
        if self.intervals.is_empty() {
            return Err(RegionError::BadTable("no intervals".into()));
        }
        if self.active_intervals > self.intervals.len() {
            return Err(RegionError::BadTable(format!(
                "active_intervals {} exceeds interval count {}",
                self.active_intervals,
                self.intervals.len()
            )));
        }
        for pair in self.intervals.windows(2) {
            if !(pair[0].lower < pair[1].lower) {
                return Err(RegionError::BadTable(format!(
                    "bounds must increase strictly ({} then {})",
                    pair[0].lower, pair[1].lower
                )));
            }
        }
        if let Some(iv) = self.intervals.iter().find(|iv| !(iv.rx >= 0.0 && iv.ry >= 0.0)) {
            return Err(RegionError::BadTable(format!("negative ratio at bound {}", iv.lower)));
        }
        for pair in self.intervals[..self.active_intervals].windows(2) {
            if pair[1].rx > pair[0].rx || pair[1].ry > pair[0].ry {
                return Err(RegionError::BadTable(format!(
                    "ratios increase from bound {} to {}",
                    pair[0].lower, pair[1].lower
                )));
            }
        }
        Ok(())
    }

    /// Interval containing `f`, lower bound inclusive.
    pub fn interval_of(&self, f: f64) -> Option<usize> {
        let idx = self.intervals.partition_point(|iv| iv.lower <= f);
        idx.checked_sub(1)
    }

    /// Active interval index and pixel radii for response `f`, or `None`
    /// when `f` falls outside the active intervals.
    pub fn lookup(&self, f: f64, obj_w: u32, obj_h: u32) -> Option<(usize, u32, u32)> {
        let i = self.interval_of(f).filter(|&i| i < self.active_intervals)?;
        let iv = &self.intervals[i];
        Some((i, floor_px(iv.rx * obj_w as f64), floor_px(iv.ry * obj_h as f64)))
    }

    pub fn radius_lookup(&self, f: f64, obj_w: u32, obj_h: u32) -> Option<(u32, u32)> {
        self.lookup(f, obj_w, obj_h).map(|(_, rx, ry)| (rx, ry))
    }
}

// Ratios like 0.06 are not exact in binary; keep products that should land
// on an integer from flooring one below it.
fn floor_px(v: f64) -> u32 {
    (v + 1e-9).floor().max(0.0) as u32
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceRatios {
    pub rx: f64,
    pub ry: f64,
}

impl AcceptanceRatios {
    pub fn pedestrian() -> Self {
        Self { rx: 0.16, ry: 0.16 }
    }

    pub fn face() -> Self {
        Self { rx: 0.1, ry: 0.1 }
    }

    pub fn radii(&self, obj_w: u32, obj_h: u32) -> (u32, u32) {
        (floor_px(self.rx * obj_w as f64), floor_px(self.ry * obj_h as f64))
    }
}

/// How far a rejection region reaches across scales.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RejectionSpan {
    /// Same number of scale steps for every interval.
    Fixed { steps: u32 },
    /// `steps - interval` scale steps, never negative.
    IntervalComplement { steps: u32 },
}

impl RejectionSpan {
    pub fn steps(&self, interval: usize) -> u32 {
        match *self {
            RejectionSpan::Fixed { steps } => steps,
            RejectionSpan::IntervalComplement { steps } => steps.saturating_sub(interval as u32),
        }
    }
}

/// Cross-scale extent of regions: at `delta` scale steps away the pixel
/// radii shrink by `shrink^delta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalePropagation {
    pub rejection_span: RejectionSpan,
    pub acceptance_span: u32,
    pub shrink: f64,
}

impl ScalePropagation {
    pub fn pedestrian() -> Self {
        Self { rejection_span: RejectionSpan::IntervalComplement { steps: 3 }, acceptance_span: 3, shrink: 0.8 }
    }

    pub fn face() -> Self {
        Self { rejection_span: RejectionSpan::Fixed { steps: 1 }, acceptance_span: 1, shrink: 0.5 }
    }

    /// Marks stay on the window's own scale.
    pub fn single_scale() -> Self {
        Self { rejection_span: RejectionSpan::Fixed { steps: 0 }, acceptance_span: 0, shrink: 1.0 }
    }
}

/// Everything the book needs to turn a scored window into marks.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionRules {
    pub t_low: f64,
    pub t_high: f64,
    pub rejection: RadiusTable,
    pub acceptance: AcceptanceRatios,
    pub propagation: ScalePropagation,
}

#[derive(Clone, Debug)]
struct ScaleGrids {
    cols: u32,
    rows: u32,
    words_per_row: usize,
    rejected: Vec<u64>,
    accepted: Vec<u64>,
}

impl ScaleGrids {
    fn new(cols: u32, rows: u32) -> Self {
        let words_per_row = (cols as usize).div_ceil(64);
        let len = words_per_row * rows as usize;
        Self { cols, rows, words_per_row, rejected: vec![0; len], accepted: vec![0; len] }
    }

    fn bit(&self, x: u32, y: u32) -> (usize, u64) {
        (y as usize * self.words_per_row + (x / 64) as usize, 1u64 << (x % 64))
    }

    /// Claims every free cell in the inclusive rectangle for `kind`.
    fn claim(&mut self, kind: RegionKind, x0: u32, x1: u32, y0: u32, y1: u32) -> u64 {
        let mut claimed = 0u64;
        for y in y0..=y1 {
            let row = y as usize * self.words_per_row;
            let (w0, w1) = ((x0 / 64) as usize, (x1 / 64) as usize);
            for wi in w0..=w1 {
                let lo = if wi == w0 { x0 % 64 } else { 0 };
                let hi = if wi == w1 { x1 % 64 } else { 63 };
                let mask = (u64::MAX >> (63 - hi)) & (u64::MAX << lo);
                let i = row + wi;
                let free = mask & !(self.rejected[i] | self.accepted[i]);
                match kind {
                    RegionKind::Rejected => self.rejected[i] |= free,
                    RegionKind::Accepted => self.accepted[i] |= free,
                    RegionKind::Free => unreachable!("free is not a mark"),
                }
                claimed += free.count_ones() as u64;
            }
        }
        claimed
    }
}

/// Per-run record of rejected and accepted windows.
#[derive(Clone, Debug)]
pub struct RegionBook {
    grids: Vec<ScaleGrids>,
    n_rejected: u64,
    n_accepted: u64,
    total: u64,
}

impl RegionBook {
    pub fn new(space: &SearchSpace) -> Self {
        let grids = (0..space.scale_count())
            .map(|s| {
                let (c, r) = space.grid(s);
                ScaleGrids::new(c, r)
            })
            .collect();
        Self { grids, n_rejected: 0, n_accepted: 0, total: space.window_count() }
    }

    pub fn rejected_count(&self) -> u64 {
        self.n_rejected
    }

    pub fn accepted_count(&self) -> u64 {
        self.n_accepted
    }

    pub fn free_count(&self) -> u64 {
        self.total - self.n_rejected - self.n_accepted
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    #[inline]
    pub fn classify_cell(&self, w: Window) -> RegionKind {
        let g = &self.grids[w.s as usize];
        debug_assert!(w.x < g.cols && w.y < g.rows);
        let (i, bit) = g.bit(w.x, w.y);
        if g.rejected[i] & bit != 0 {
            RegionKind::Rejected
        } else if g.accepted[i] & bit != 0 {
            RegionKind::Accepted
        } else {
            RegionKind::Free
        }
    }

    #[inline]
    pub fn is_free(&self, w: Window) -> bool {
        self.classify_cell(w) == RegionKind::Free
    }

    /// Marks the rejection region of `w`. Returns the number of newly
    /// rejected cells, 0 when `f` lies outside the active intervals.
    pub fn mark_rejection(
        &mut self,
        space: &SearchSpace,
        w: Window,
        f: f64,
        rules: &RegionRules,
    ) -> Result<u64, RegionError> {
        if !(f < rules.t_low) {
            return Err(RegionError::NotRejection { f, t_low: rules.t_low });
        }
        if !space.contains(w) {
            return Err(RegionError::OutsideSpace(w));
        }
        let (tw, th) = space.template();
        let Some((interval, rx, ry)) = rules.rejection.lookup(f, tw, th) else {
            return Ok(0);
        };
        let span = rules.propagation.rejection_span.steps(interval);
        Ok(self.mark_region(space, w, RegionKind::Rejected, (rx, ry), span, rules.propagation.shrink))
    }

    /// Marks the acceptance region of `w`. Returns the number of newly
    /// accepted cells.
    pub fn mark_acceptance(
        &mut self,
        space: &SearchSpace,
        w: Window,
        f: f64,
        rules: &RegionRules,
    ) -> Result<u64, RegionError> {
        if !(f >= rules.t_high) {
            return Err(RegionError::NotAcceptance { f, t_high: rules.t_high });
        }
        if !space.contains(w) {
            return Err(RegionError::OutsideSpace(w));
        }
        let (tw, th) = space.template();
        let radii = rules.acceptance.radii(tw, th);
        let span = rules.propagation.acceptance_span;
        Ok(self.mark_region(space, w, RegionKind::Accepted, radii, span, rules.propagation.shrink))
    }

    /// Marks a rectangle of pixel radii `radii` around `w` on its own scale
    /// and, for every scale up to `span` steps away, a rectangle shrunk by
    /// `shrink^delta` around the grid position sharing `w`'s center.
    pub fn mark_region(
        &mut self,
        space: &SearchSpace,
        w: Window,
        kind: RegionKind,
        radii: (u32, u32),
        span: u32,
        shrink: f64,
    ) -> u64 {
        let stride = space.stride();
        let center = space.to_box(w);
        let lo = w.s.saturating_sub(span);
        let hi = (w.s + span).min(space.scale_count() - 1);
        let mut claimed = 0;
        for s in lo..=hi {
            let g = &self.grids[s as usize];
            if g.cols == 0 || g.rows == 0 {
                continue;
            }
            let delta = s.abs_diff(w.s);
            let (cx, cy) = if delta == 0 {
                (w.x as i64, w.y as i64)
            } else {
                space.locate(center.cx, center.cy, s)
            };
            let factor = shrink.powi(delta as i32);
            let rx = (floor_px(radii.0 as f64 * factor) / stride) as i64;
            let ry = (floor_px(radii.1 as f64 * factor) / stride) as i64;
            let x0 = (cx - rx).max(0);
            let x1 = (cx + rx).min(g.cols as i64 - 1);
            let y0 = (cy - ry).max(0);
            let y1 = (cy + ry).min(g.rows as i64 - 1);
            if x0 > x1 || y0 > y1 {
                continue;
            }
            let g = &mut self.grids[s as usize];
            claimed += g.claim(kind, x0 as u32, x1 as u32, y0 as u32, y1 as u32);
        }
        match kind {
            RegionKind::Rejected => self.n_rejected += claimed,
            RegionKind::Accepted => self.n_accepted += claimed,
            RegionKind::Free => {}
        }
        claimed
    }
}

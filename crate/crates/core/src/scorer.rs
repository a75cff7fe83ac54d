//! Classifier-response contract and the built-in synthetic scorers.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{mix64, unit_f64};
use crate::space::{BBox, SearchSpace, Window};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("window {0:?} lies outside the search space")]
    OutsideSpace(Window),
}

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene io: {0}")]
    Io(#[from] std::io::Error),
    #[error("scene json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scene: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub response: f64,
    /// Cascade stages run before a decision; 0 for flat scorers.
    pub stages_evaluated: u32,
}

/// A classifier response `f(w)` over a search space.
pub trait Scorer: Send + Sync {
    fn score(&self, space: &SearchSpace, w: Window) -> Result<ScoreResult, ScoreError>;

    /// Total number of stages, 0 for flat scorers.
    fn stage_count(&self) -> u32 {
        0
    }
}

/// Normalizes responses to weights summing to one.
///
/// A batch with negative responses is first shifted by its minimum so every
/// weight is nonnegative; ordering (and so the argmax) is preserved. A zero
/// shifted sum falls back to uniform weights.
pub fn normalize_weights(responses: &[f64]) -> Vec<f64> {
    let n = responses.len();
    if n == 0 {
        return Vec::new();
    }
    let min = responses.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let sum: f64 = responses.iter().map(|r| r - min).sum();
    if !(sum.is_finite() && sum > 0.0) {
        return vec![1.0 / n as f64; n];
    }
    responses.iter().map(|r| (r - min) / sum).collect()
}

/// An object or object-like region planted in a synthetic scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenePeak {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub peak: f64,
}

/// Synthetic response landscape.
///
/// Each object or distractor contributes
/// `floor + (peak - floor) * exp(-sharpness * d)`, where `d` is the sum of
/// the center offsets normalized by the object's width and height. The scale
/// mismatch, measured in scale steps, adds `scale_sharpness * steps` to the
/// exponent (defaulting to `sharpness`). The response is the maximum
/// contribution, or `floor` with nothing planted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticScene {
    pub image_w: u32,
    pub image_h: u32,
    pub objects: Vec<ScenePeak>,
    #[serde(default)]
    pub distractors: Vec<ScenePeak>,
    pub floor: f64,
    pub sharpness: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_sharpness: Option<f64>,
}

impl SyntheticScene {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.sharpness.is_finite() && self.sharpness > 0.0) {
            return Err(SceneError::Invalid(format!("sharpness must be > 0, got {}", self.sharpness)));
        }
        if let Some(k) = self.scale_sharpness {
            if !(k.is_finite() && k >= 0.0) {
                return Err(SceneError::Invalid(format!("scale_sharpness must be >= 0, got {k}")));
            }
        }
        if !self.floor.is_finite() {
            return Err(SceneError::Invalid("floor must be finite".into()));
        }
        for p in self.objects.iter().chain(&self.distractors) {
            if !(p.bbox.w > 0.0 && p.bbox.h > 0.0) {
                return Err(SceneError::Invalid(format!("box {:?} has non-positive size", p.bbox)));
            }
            if !p.peak.is_finite() {
                return Err(SceneError::Invalid("peak must be finite".into()));
            }
        }
        Ok(())
    }

    /// Checks the scene against a detector's thresholds: objects reach
    /// `t_high`, distractors fall in `[t_low, t_high)`, the floor is below
    /// `t_low`.
    pub fn validate_thresholds(&self, t_low: f64, t_high: f64) -> Result<(), SceneError> {
        if self.floor >= t_low {
            return Err(SceneError::Invalid(format!("floor {} is not below t_l {}", self.floor, t_low)));
        }
        if let Some(o) = self.objects.iter().find(|o| o.peak < t_high) {
            return Err(SceneError::Invalid(format!("object peak {} is below t_h {}", o.peak, t_high)));
        }
        if let Some(d) = self.distractors.iter().find(|d| d.peak < t_low || d.peak >= t_high) {
            return Err(SceneError::Invalid(format!(
                "distractor peak {} is outside [t_l, t_h) = [{}, {})",
                d.peak, t_low, t_high
            )));
        }
        Ok(())
    }

    pub fn ground_truth(&self) -> Vec<BBox> {
        self.objects.iter().map(|o| o.bbox).collect()
    }

    pub fn load(path: &Path) -> Result<Vec<SyntheticScene>, SceneError> {
        let text = std::fs::read_to_string(path)?;
        let scenes: Vec<SyntheticScene> = serde_json::from_str(&text)?;
        for s in &scenes {
            s.validate()?;
        }
        Ok(scenes)
    }

    pub fn save(scenes: &[SyntheticScene], path: &Path) -> Result<(), SceneError> {
        let text = serde_json::to_string_pretty(scenes)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Falloff of `peak` at window box `b`, in `[0, 1]`.
    fn falloff(&self, space: &SearchSpace, b: &BBox, p: &ScenePeak) -> f64 {
        let dx = (b.cx - p.bbox.cx).abs() / p.bbox.w;
        let dy = (b.cy - p.bbox.cy).abs() / p.bbox.h;
        let ratio = (b.w * b.h / (p.bbox.w * p.bbox.h)).sqrt();
        let ds = ratio.ln().abs() / space.scale_factor().ln();
        (-self.sharpness * (dx + dy) - self.scale_sharpness.unwrap_or(self.sharpness) * ds).exp()
    }

    /// Response without bounds checking the window.
    pub fn response(&self, space: &SearchSpace, w: Window) -> f64 {
        let b = space.to_box(w);
        self.objects
            .iter()
            .chain(&self.distractors)
            .map(|p| self.floor + (p.peak - self.floor) * self.falloff(space, &b, p))
            .fold(self.floor, f64::max)
    }

    /// Landscape rescaled so the strongest object center maps to 1 and
    /// the floor to 0.
    fn closeness(&self, space: &SearchSpace, w: Window) -> f64 {
        let reference = if self.objects.is_empty() { &self.distractors } else { &self.objects };
        let top = reference.iter().map(|p| p.peak).fold(f64::NEG_INFINITY, f64::max);
        if !(top > self.floor) {
            return 0.0;
        }
        let b = space.to_box(w);
        self.objects
            .iter()
            .chain(&self.distractors)
            .map(|p| ((p.peak - self.floor) / (top - self.floor)).clamp(0.0, 1.0) * self.falloff(space, &b, p))
            .fold(0.0, f64::max)
    }
}

impl Scorer for SyntheticScene {
    fn score(&self, space: &SearchSpace, w: Window) -> Result<ScoreResult, ScoreError> {
        if !space.contains(w) {
            return Err(ScoreError::OutsideSpace(w));
        }
        Ok(ScoreResult { response: self.response(space, w), stages_evaluated: 0 })
    }
}

/// Stage-pass behavior of the emulated cascade.
///
/// A window with landscape closeness `v` passes every stage independently
/// with probability `pass_floor + (1 - pass_floor) * v^pass_exponent`. The
/// per-stage coin flips are a fixed hash of `(seed, window, stage)`, so
/// scoring is deterministic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeProfile {
    pub stages: u32,
    #[serde(default = "default_pass_floor")]
    pub pass_floor: f64,
    #[serde(default = "default_pass_exponent")]
    pub pass_exponent: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_pass_floor() -> f64 {
    0.2
}

fn default_pass_exponent() -> f64 {
    0.5
}

impl CascadeProfile {
    pub fn new(stages: u32) -> Self {
        Self { stages, pass_floor: default_pass_floor(), pass_exponent: default_pass_exponent(), seed: 0 }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.stages == 0 {
            return Err("cascade stages must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.pass_floor) {
            return Err(format!("pass_floor must be in [0, 1], got {}", self.pass_floor));
        }
        if !(self.pass_exponent.is_finite() && self.pass_exponent > 0.0) {
            return Err(format!("pass_exponent must be > 0, got {}", self.pass_exponent));
        }
        Ok(())
    }

    fn pass_probability(&self, closeness: f64) -> f64 {
        self.pass_floor + (1.0 - self.pass_floor) * closeness.clamp(0.0, 1.0).powf(self.pass_exponent)
    }
}

/// Cascade emulator over a synthetic scene: `f(w) = j_w / L`, where `j_w`
/// counts the leading stages the window passes.
#[derive(Clone, Debug, PartialEq)]
pub struct CascadeScorer {
    pub scene: SyntheticScene,
    pub profile: CascadeProfile,
}

impl CascadeScorer {
    pub fn new(scene: SyntheticScene, profile: CascadeProfile) -> Self {
        Self { scene, profile }
    }

    pub fn cascade_response(&self, space: &SearchSpace, w: Window) -> ScoreResult {
        let stages = self.profile.stages;
        let p = self.profile.pass_probability(self.scene.closeness(space, w));
        let key = mix64(self.profile.seed ^ mix64(((w.s as u64) << 48) ^ ((w.y as u64) << 24) ^ w.x as u64));
        let passed = (0..stages)
            .take_while(|&j| unit_f64(mix64(key ^ mix64(j as u64 + 1))) < p)
            .count() as u32;
        ScoreResult {
            response: passed as f64 / stages as f64,
            stages_evaluated: (passed + 1).min(stages),
        }
    }
}

impl Scorer for CascadeScorer {
    fn score(&self, space: &SearchSpace, w: Window) -> Result<ScoreResult, ScoreError> {
        if !space.contains(w) {
            return Err(ScoreError::OutsideSpace(w));
        }
        Ok(self.cascade_response(space, w))
    }

    fn stage_count(&self) -> u32 {
        self.profile.stages
    }
}

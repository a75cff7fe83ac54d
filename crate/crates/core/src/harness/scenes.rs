use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, seeded, Rng};
use crate::scorer::{SceneError, ScenePeak, SyntheticScene};
use crate::space::{overlap, BBox};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakRange {
    pub min: f64,
    pub max: f64,
}

impl PeakRange {
    pub fn fixed(v: f64) -> Self {
        Self { min: v, max: v }
    }

    fn draw(&self, rng: &mut Rng) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..self.max)
        } else {
            self.min
        }
    }
}

/// Generator settings. Box heights are log-uniform in
/// `[min_height, max_height]` with width `aspect * height`; centers are
/// uniform over positions keeping the box inside the image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneParams {
    pub image_w: u32,
    pub image_h: u32,
    pub objects: usize,
    pub distractors: usize,
    pub aspect: f64,
    pub min_height: f64,
    pub max_height: f64,
    pub object_peak: PeakRange,
    pub distractor_peak: PeakRange,
    pub floor: f64,
    pub sharpness: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_sharpness: Option<f64>,
    /// Largest IoU allowed between any two planted boxes.
    #[serde(default = "default_max_overlap")]
    pub max_overlap: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_max_overlap() -> f64 {
    0.3
}

fn default_retries() -> u32 {
    1000
}

impl SceneParams {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::Invalid(m));
        if !(self.aspect > 0.0 && self.min_height > 0.0 && self.min_height <= self.max_height) {
            return bad(format!(
                "need aspect > 0 and 0 < min_height <= max_height, got {} / {}..{}",
                self.aspect, self.min_height, self.max_height
            ));
        }
        if self.max_height > self.image_h as f64 || self.aspect * self.max_height > self.image_w as f64 {
            return bad(format!("largest box {}x{} does not fit the image", self.aspect * self.max_height, self.max_height));
        }
        if self.object_peak.min > self.object_peak.max || self.distractor_peak.min > self.distractor_peak.max {
            return bad("peak ranges need min <= max".into());
        }
        if !(0.0..=1.0).contains(&self.max_overlap) {
            return bad(format!("max_overlap must be in [0, 1], got {}", self.max_overlap));
        }
        if self.max_retries == 0 {
            return bad("max_retries must be at least 1".into());
        }
        Ok(())
    }

    fn draw_box(&self, rng: &mut Rng) -> BBox {
        let h = if self.max_height > self.min_height {
            rng.random_range(self.min_height.ln()..self.max_height.ln()).exp()
        } else {
            self.min_height
        };
        let w = self.aspect * h;
        let mut span = |extent: u32, size: f64| {
            let lo = size / 2.0;
            let hi = extent as f64 - size / 2.0;
            if hi > lo {
                rng.random_range(lo..hi)
            } else {
                lo
            }
        };
        let cx = span(self.image_w, w);
        let cy = span(self.image_h, h);
        BBox::new(cx, cy, w, h)
    }
}

fn generate_one(params: &SceneParams, rng: &mut Rng) -> Result<SyntheticScene, SceneError> {
    let mut placed: Vec<BBox> = Vec::new();
    let mut place = |what: &str, k: usize, rng: &mut Rng| -> Result<BBox, SceneError> {
        for _ in 0..params.max_retries {
            let b = params.draw_box(rng);
            if placed.iter().all(|p| overlap(p, &b) <= params.max_overlap) {
                placed.push(b);
                return Ok(b);
            }
        }
        Err(SceneError::Invalid(format!(
            "could not place {what} {k} with IoU <= {} against earlier boxes after {} tries",
            params.max_overlap, params.max_retries
        )))
    };
    let mut objects = Vec::with_capacity(params.objects);
    for k in 0..params.objects {
        let bbox = place("object", k, rng)?;
        objects.push(ScenePeak { bbox, peak: params.object_peak.draw(rng) });
    }
    let mut distractors = Vec::with_capacity(params.distractors);
    for k in 0..params.distractors {
        let bbox = place("distractor", k, rng)?;
        distractors.push(ScenePeak { bbox, peak: params.distractor_peak.draw(rng) });
    }
    let scene = SyntheticScene {
        image_w: params.image_w,
        image_h: params.image_h,
        objects,
        distractors,
        floor: params.floor,
        sharpness: params.sharpness,
        scale_sharpness: params.scale_sharpness,
    };
    scene.validate()?;
    Ok(scene)
}

/// Generates `count` scenes; scene `k` depends only on `master_seed` and `k`.
pub fn generate_scenes(params: &SceneParams, master_seed: u64, count: usize) -> Result<Vec<SyntheticScene>, SceneError> {
    params.validate()?;
    (0..count)
        .map(|k| generate_one(params, &mut seeded(derive_seed(master_seed, &[0x5cee, k as u64]))))
        .collect()
}

//! Experiment configuration files (TOML).
//!
//! See `configs/README.md` for the schema. Parsing rejects unknown keys,
//! and [`ExperimentFile::validate`] names the offending field for every
//! semantic error.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::{DetectorConfig, DetectorError, DetectorKind};
use crate::harness::{generate_scenes, CostModel, DetectorSpec, Experiment, PeakRange, SceneParams, ScorerSpec};
use crate::proposal::{Spread, DEFAULT_MAX_ATTEMPTS};
use crate::region::{AcceptanceRatios, RadiusTable, RegionRules, ScalePropagation};
use crate::scorer::{CascadeProfile, SyntheticScene};
use crate::space::{SearchSpace, SpaceParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: Box<toml::de::Error> },
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid { field: field.into(), reason: reason.to_string() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub trials: usize,
    #[serde(default = "half")]
    pub match_threshold: f64,
    #[serde(default = "half")]
    pub nms_threshold: f64,
    /// Budget grid for `compare` and `sweep`.
    #[serde(default)]
    pub budgets: Vec<usize>,
    pub space: SpaceParams,
    #[serde(default)]
    pub sw: Option<SwGrid>,
    pub scenes: SceneSource,
    #[serde(default)]
    pub scorer: ScorerSection,
    pub params: ParamsSection,
    #[serde(default)]
    pub rejection: Option<RadiusTable>,
    #[serde(default)]
    pub acceptance: Option<AcceptanceRatios>,
    #[serde(default)]
    pub propagation: Option<ScalePropagation>,
    #[serde(default)]
    pub cost: CostModel,
    pub detectors: Vec<DetectorEntry>,
}

fn one() -> usize {
    1
}

fn half() -> f64 {
    0.5
}

/// Coarser grid scanned by sliding-window detectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwGrid {
    pub stride: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum SceneSource {
    Generate {
        count: usize,
        /// Defaults to the experiment seed.
        #[serde(default)]
        seed: Option<u64>,
        objects: usize,
        #[serde(default)]
        distractors: usize,
        /// Box width over height; defaults to the template's.
        #[serde(default)]
        aspect: Option<f64>,
        /// Defaults span the template height over the scale range.
        #[serde(default)]
        min_height: Option<f64>,
        #[serde(default)]
        max_height: Option<f64>,
        object_peak: PeakRange,
        #[serde(default = "default_distractor_peak")]
        distractor_peak: PeakRange,
        floor: f64,
        sharpness: f64,
        #[serde(default)]
        scale_sharpness: Option<f64>,
        #[serde(default = "default_max_overlap")]
        max_overlap: f64,
    },
    File {
        path: PathBuf,
    },
}

fn default_distractor_peak() -> PeakRange {
    PeakRange::fixed(0.0)
}

fn default_max_overlap() -> f64 {
    0.3
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ScorerSection {
    #[default]
    Synthetic,
    Cascade {
        stages: u32,
        #[serde(default)]
        pass_floor: Option<f64>,
        #[serde(default)]
        pass_exponent: Option<f64>,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub t_low: f64,
    pub t_high: f64,
    pub budget: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_stages")]
    pub mpw_stage_count: usize,
    #[serde(default = "default_mpw_gamma")]
    pub mpw_gamma: f64,
    #[serde(default = "default_mpw_alpha")]
    pub mpw_alpha: f64,
    #[serde(default = "half")]
    pub n_c_star_fraction: f64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default)]
    pub spread: Spread,
}

fn default_alpha() -> f64 {
    0.2
}
fn default_gamma() -> f64 {
    0.7
}
fn default_stages() -> usize {
    5
}
fn default_mpw_gamma() -> f64 {
    0.44
}
fn default_mpw_alpha() -> f64 {
    1.0
}
fn default_attempts() -> u32 {
    DEFAULT_MAX_ATTEMPTS
}

/// Per-detector overrides of `[params]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorEntry {
    pub name: String,
    pub kind: DetectorKind,
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub mpw_stage_count: Option<usize>,
    #[serde(default)]
    pub mpw_gamma: Option<f64>,
    #[serde(default)]
    pub mpw_alpha: Option<f64>,
    #[serde(default)]
    pub n_c_star_fraction: Option<f64>,
    #[serde(default)]
    pub max_attempts: Option<u32>,
}

impl ExperimentFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        let mut file: ExperimentFile =
            toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.into(), source: Box::new(e) })?;
        // Scene files are resolved relative to the config file.
        if let SceneSource::File { path: scenes } = &mut file.scenes {
            if scenes.is_relative() {
                if let Some(dir) = path.parent() {
                    *scenes = dir.join(&*scenes);
                }
            }
        }
        file.validate()?;
        Ok(file)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let file: ExperimentFile =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: "<string>".into(), source: Box::new(e) })?;
        file.validate()?;
        Ok(file)
    }

    pub fn space(&self) -> Result<SearchSpace, ConfigError> {
        let space = SearchSpace::new(self.space.clone()).map_err(|e| invalid("space", e))?;
        if space.window_count() == 0 {
            return Err(invalid("space", "template does not fit the image at any scale"));
        }
        Ok(space)
    }

    fn sw_space(&self) -> Result<Option<SearchSpace>, ConfigError> {
        self.sw
            .as_ref()
            .map(|g| {
                let params = SpaceParams { stride: g.stride, ..self.space.clone() };
                SearchSpace::new(params).map_err(|e| invalid("sw.stride", e))
            })
            .transpose()
    }

    fn rules(&self) -> RegionRules {
        RegionRules {
            t_low: self.params.t_low,
            t_high: self.params.t_high,
            rejection: self.rejection.clone().unwrap_or(RadiusTable { intervals: Vec::new(), active_intervals: 0 }),
            acceptance: self.acceptance.unwrap_or(AcceptanceRatios { rx: 0.0, ry: 0.0 }),
            propagation: self.propagation.unwrap_or_else(ScalePropagation::single_scale),
        }
    }

    fn detector_config(&self, d: &DetectorEntry) -> DetectorConfig {
        let p = &self.params;
        DetectorConfig {
            rules: self.rules(),
            alpha: d.alpha.unwrap_or(p.alpha),
            gamma: d.gamma.unwrap_or(p.gamma),
            budget: d.budget.unwrap_or(p.budget),
            mpw_stage_count: d.mpw_stage_count.unwrap_or(p.mpw_stage_count),
            mpw_gamma: d.mpw_gamma.unwrap_or(p.mpw_gamma),
            mpw_alpha: d.mpw_alpha.unwrap_or(p.mpw_alpha),
            n_c_star_fraction: d.n_c_star_fraction.unwrap_or(p.n_c_star_fraction),
            max_attempts: d.max_attempts.unwrap_or(p.max_attempts),
            spread: p.spread,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.space()?;
        self.sw_space()?;
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        for (field, v) in [("match_threshold", self.match_threshold), ("nms_threshold", self.nms_threshold)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid(field, format!("must be in (0, 1), got {v}")));
            }
        }
        if let Some(k) = self.budgets.iter().position(|&b| b == 0) {
            return Err(invalid(format!("budgets[{k}]"), "must be at least 1"));
        }
        if self.detectors.is_empty() {
            return Err(invalid("detectors", "at least one detector is required"));
        }
        if let SceneSource::Generate { count, .. } = &self.scenes {
            if *count == 0 {
                return Err(invalid("scenes.count", "must be at least 1"));
            }
        }
        if let ScorerSection::Cascade { stages, pass_floor, pass_exponent, seed } = &self.scorer {
            self.cascade_profile(*stages, *pass_floor, *pass_exponent, *seed)
                .validate()
                .map_err(|e| invalid("scorer", e))?;
        }
        self.cost.validate().map_err(|e| invalid("cost", e))?;
        let defaults = DetectorEntry {
            name: "params".into(),
            kind: DetectorKind::Mpw,
            budget: None,
            alpha: None,
            gamma: None,
            mpw_stage_count: None,
            mpw_gamma: None,
            mpw_alpha: None,
            n_c_star_fraction: None,
            max_attempts: None,
        };
        if let Err(e) = self.detector_config(&defaults).validate() {
            if !matches!(e, DetectorError::Region(_)) {
                return Err(invalid("params", e));
            }
        }
        let mut names: Vec<&str> = Vec::new();
        for (k, d) in self.detectors.iter().enumerate() {
            let field = |f: &str| format!("detectors[{k}].{f}");
            if d.name.is_empty() {
                return Err(invalid(field("name"), "must not be empty"));
            }
            if names.contains(&d.name.as_str()) {
                return Err(invalid(field("name"), format!("duplicate detector name {:?}", d.name)));
            }
            names.push(&d.name);
            if d.kind.uses_regions() {
                if self.rejection.is_none() {
                    return Err(invalid("rejection", format!("a radius table is required by detector {:?}", d.name)));
                }
                if self.acceptance.is_none() {
                    return Err(invalid("acceptance", format!("acceptance ratios are required by detector {:?}", d.name)));
                }
            }
            if let Err(e) = self.detector_config(d).validate() {
                // Detectors that never mark regions do not need a radius table.
                if !matches!(e, DetectorError::Region(_)) {
                    return Err(invalid(format!("detectors[{k}]"), e));
                }
            }
        }
        if let Some(rej) = &self.rejection {
            rej.validate().map_err(|e| invalid("rejection", e))?;
        }
        if let Some(p) = &self.propagation {
            if !(p.shrink > 0.0 && p.shrink <= 1.0) {
                return Err(invalid("propagation.shrink", format!("must be in (0, 1], got {}", p.shrink)));
            }
        }
        Ok(())
    }

    fn cascade_profile(&self, stages: u32, pass_floor: Option<f64>, pass_exponent: Option<f64>, seed: u64) -> CascadeProfile {
        let mut p = CascadeProfile::new(stages);
        p.pass_floor = pass_floor.unwrap_or(p.pass_floor);
        p.pass_exponent = pass_exponent.unwrap_or(p.pass_exponent);
        p.seed = seed;
        p
    }

    /// Generator settings for `[scenes]`, or `None` for a scene file.
    pub fn scene_params(&self) -> Option<(SceneParams, u64, usize)> {
        match &self.scenes {
            SceneSource::Generate {
                count,
                seed,
                objects,
                distractors,
                aspect,
                min_height,
                max_height,
                object_peak,
                distractor_peak,
                floor,
                sharpness,
                scale_sharpness,
                max_overlap,
            } => {
                let sp = &self.space;
                let top_zoom = sp.scale_factor.powi(sp.scale_count.saturating_sub(1) as i32);
                let params = SceneParams {
                    image_w: sp.image_w,
                    image_h: sp.image_h,
                    objects: *objects,
                    distractors: *distractors,
                    aspect: aspect.unwrap_or(sp.template_w as f64 / sp.template_h as f64),
                    min_height: min_height.unwrap_or(sp.template_h as f64),
                    max_height: max_height.unwrap_or(sp.template_h as f64 * top_zoom),
                    object_peak: *object_peak,
                    distractor_peak: *distractor_peak,
                    floor: *floor,
                    sharpness: *sharpness,
                    scale_sharpness: *scale_sharpness,
                    max_overlap: *max_overlap,
                    max_retries: 1000,
                };
                Some((params, seed.unwrap_or(self.seed), *count))
            }
            SceneSource::File { .. } => None,
        }
    }

    pub fn load_scenes(&self) -> Result<Vec<SyntheticScene>, ConfigError> {
        let scenes = match &self.scenes {
            SceneSource::File { path } => SyntheticScene::load(path).map_err(|e| invalid("scenes.path", e))?,
            SceneSource::Generate { .. } => {
                let (params, seed, count) = self.scene_params().expect("generated scenes");
                generate_scenes(&params, seed, count).map_err(|e| invalid("scenes", e))?
            }
        };
        if scenes.is_empty() {
            return Err(invalid("scenes", "no scenes"));
        }
        for (k, s) in scenes.iter().enumerate() {
            if s.image_w != self.space.image_w || s.image_h != self.space.image_h {
                return Err(invalid(
                    format!("scenes[{k}]"),
                    format!("image {}x{} differs from space {}x{}", s.image_w, s.image_h, self.space.image_w, self.space.image_h),
                ));
            }
            if matches!(self.scorer, ScorerSection::Synthetic) {
                s.validate_thresholds(self.params.t_low, self.params.t_high)
                    .map_err(|e| invalid(format!("scenes[{k}]"), e))?;
            }
        }
        Ok(scenes)
    }

    /// Builds the experiment; `seed` overrides the file's seed.
    pub fn build(&self, seed: Option<u64>) -> Result<Experiment, ConfigError> {
        let mut file = self.clone();
        if let Some(s) = seed {
            file.seed = s;
        }
        let scorer = match &file.scorer {
            ScorerSection::Synthetic => ScorerSpec::Synthetic,
            ScorerSection::Cascade { stages, pass_floor, pass_exponent, seed } => {
                ScorerSpec::Cascade(file.cascade_profile(*stages, *pass_floor, *pass_exponent, *seed))
            }
        };
        Ok(Experiment {
            space: file.space()?,
            sw_space: file.sw_space()?,
            scenes: file.load_scenes()?,
            scorer,
            detectors: file
                .detectors
                .iter()
                .map(|d| DetectorSpec { name: d.name.clone(), kind: d.kind, config: file.detector_config(d) })
                .collect(),
            budgets: Vec::new(),
            trials: file.trials,
            seed: file.seed,
            match_threshold: file.match_threshold,
            nms_threshold: file.nms_threshold,
            cost: file.cost,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
seed = 3
[space]
image_w = 120
image_h = 90
template_w = 12
template_h = 24
stride = 1
scale_factor = 1.1
scale_count = 3

[scenes]
source = "generate"
count = 4
objects = 1
distractors = 1
object_peak = { min = 2.0, max = 2.0 }
distractor_peak = { min = -1.0, max = -1.0 }
floor = -5.0
sharpness = 3.0
scale_sharpness = 0.3

[params]
t_low = -2.0
t_high = 0.0
budget = 100

[rejection]
active_intervals = 1
intervals = [ { lower = -inf, rx = 0.2, ry = 0.2 }, { lower = -3.0, rx = 0.1, ry = 0.1 } ]

[acceptance]
rx = 0.16
ry = 0.16

[[detectors]]
name = "ipw"
kind = "ipw"

[[detectors]]
name = "mpw"
kind = "mpw"
budget = 50
"#;

    #[test]
    fn parses_and_builds() {
        let file = ExperimentFile::parse(BASE).unwrap();
        let exp = file.build(Some(9)).unwrap();
        assert_eq!(exp.seed, 9);
        assert_eq!(exp.scenes.len(), 4);
        assert_eq!(exp.detectors[0].config.budget, 100);
        assert_eq!(exp.detectors[1].config.budget, 50);
        assert_eq!(exp.detectors[0].config.alpha, 0.2);
        assert_eq!(exp.detectors[0].config.rules.rejection.intervals[0].lower, f64::NEG_INFINITY);
    }

    #[test]
    fn missing_radius_table_fails_for_region_detectors() {
        let text = BASE.replace("[rejection]\nactive_intervals = 1\n", "[unused]\nactive_intervals = 1\n");
        let err = toml::from_str::<ExperimentFile>(&text);
        assert!(err.is_err());
        let start = BASE.find("[rejection]").unwrap();
        let end = BASE.find("[acceptance]").unwrap();
        let text = format!("{}{}", &BASE[..start], &BASE[end..]);
        let err = ExperimentFile::parse(&text).unwrap_err().to_string();
        assert!(err.contains("`rejection`"), "{err}");
        // Without region detectors the table is optional.
        let mpw_only = text.replace("name = \"ipw\"\nkind = \"ipw\"", "name = \"mpw2\"\nkind = \"mpw\"");
        assert!(ExperimentFile::parse(&mpw_only).is_ok());
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            (BASE.replace("t_low = -2.0", "t_low = 1.0"), "params"),
            (BASE.replace("budget = 50", "alpha = 2.0"), "detectors[1]"),
            (BASE.replace("stride = 1", "stride = 0"), "space"),
            (BASE.replace("name = \"mpw\"", "name = \"ipw\""), "detectors[1].name"),
        ];
        for (text, field) in cases {
            let err = ExperimentFile::parse(&text).unwrap_err().to_string();
            assert!(err.contains(field), "{field}: {err}");
        }
        assert!(matches!(ExperimentFile::parse(&BASE.replace("seed = 3", "seed = 3\nbogus = 1")), Err(ConfigError::Parse { .. })));
    }
}

//! Window-generation strategies: exhaustive sliding windows, multi-stage
//! particle windows, and the incremental and semi-incremental particle
//! window searches. Every strategy emits a [`RunTrace`].

mod incremental;
mod mpw;
mod nms;
mod sw;

pub use incremental::{run_ipw, run_sipw};
pub use mpw::{mpw_budget_schedule, mpw_schedule, run_mpw};
pub use nms::{nms, Detection};
pub use sw::run_sw;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::proposal::{ProposalError, Spread, DEFAULT_MAX_ATTEMPTS};
use crate::region::{RegionError, RegionRules};
use crate::scorer::ScoreError;
use crate::space::{SearchSpace, Window};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("invalid detector config: {0}")]
    Config(String),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Proposal(#[from] ProposalError),
    #[error("search space has no windows")]
    EmptySpace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Sw,
    Mpw,
    Ipw,
    Sipw,
}

impl DetectorKind {
    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Sw => "sw",
            DetectorKind::Mpw => "mpw",
            DetectorKind::Ipw => "ipw",
            DetectorKind::Sipw => "sipw",
        }
    }

    /// Whether the strategy marks rejection and acceptance regions.
    pub fn uses_regions(self) -> bool {
        matches!(self, DetectorKind::Ipw | DetectorKind::Sipw)
    }
}

/// Parameters shared by all strategies. Thresholds live in `rules`.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectorConfig {
    pub rules: RegionRules,
    /// Scale of the uniform-branch weight.
    pub alpha: f64,
    /// Decay of the semi-incremental rebuild threshold.
    pub gamma: f64,
    /// Particle windows per run (the total over stages for MPW).
    pub budget: usize,
    pub mpw_stage_count: usize,
    /// Decay of the MPW stage sizes.
    pub mpw_gamma: f64,
    /// Weight on the previous stage's Gaussians in MPW; 1 drops the
    /// earlier proposals entirely.
    pub mpw_alpha: f64,
    /// Initial rebuild threshold of the semi-incremental search, as a
    /// fraction of the budget.
    pub n_c_star_fraction: f64,
    pub max_attempts: u32,
    pub spread: Spread,
    pub seed: u64,
}

impl DetectorConfig {
    /// Config with the default algorithm parameters: `alpha = 0.2`,
    /// `gamma = 0.7`, five MPW stages decaying at 0.44, and a rebuild
    /// threshold of half the budget.
    pub fn new(rules: RegionRules, budget: usize, seed: u64) -> Self {
        Self {
            rules,
            alpha: 0.2,
            gamma: 0.7,
            budget,
            mpw_stage_count: 5,
            mpw_gamma: 0.44,
            mpw_alpha: 1.0,
            n_c_star_fraction: 0.5,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            spread: Spread::default(),
            seed,
        }
    }

    /// Initial rebuild threshold in draws.
    pub fn n_c_star_init(&self) -> f64 {
        self.n_c_star_fraction * self.budget as f64
    }

    pub fn t_low(&self) -> f64 {
        self.rules.t_low
    }

    pub fn t_high(&self) -> f64 {
        self.rules.t_high
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: String| Err(DetectorError::Config(m));
        if !(self.rules.t_low < self.rules.t_high) {
            return bad(format!("t_l ({}) must be below t_h ({})", self.rules.t_low, self.rules.t_high));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must be in [0, 1], got {}", self.alpha));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return bad(format!("gamma must be > 0, got {}", self.gamma));
        }
        if !(self.mpw_gamma.is_finite() && self.mpw_gamma >= 0.0) {
            return bad(format!("mpw_gamma must be >= 0, got {}", self.mpw_gamma));
        }
        if !(0.0..=1.0).contains(&self.mpw_alpha) {
            return bad(format!("mpw_alpha must be in [0, 1], got {}", self.mpw_alpha));
        }
        if self.budget == 0 {
            return bad("budget must be at least 1".into());
        }
        if self.mpw_stage_count == 0 {
            return bad("mpw_stage_count must be at least 1".into());
        }
        if !(self.n_c_star_fraction.is_finite() && self.n_c_star_fraction > 0.0) {
            return bad(format!("n_c_star_fraction must be > 0, got {}", self.n_c_star_fraction));
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be at least 1".into());
        }
        if !(self.spread.divisor > 0.0 && self.spread.scale >= 0.0) {
            return bad(format!("invalid gaussian spread {:?}", self.spread));
        }
        self.rules.rejection.validate()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParticleKind {
    #[serde(rename = "RPW")]
    Rejection,
    #[serde(rename = "APW")]
    Acceptance,
    #[serde(rename = "ABPW")]
    Ambiguity,
}

pub fn classify(f: f64, t_low: f64, t_high: f64) -> ParticleKind {
    if f < t_low {
        ParticleKind::Rejection
    } else if f >= t_high {
        ParticleKind::Acceptance
    } else {
        ParticleKind::Ambiguity
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DrawSource {
    Uniform,
    Gaussian,
    /// Exhaustive enumeration.
    Grid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Termination {
    /// The budget (or the grid) was used up.
    Budget,
    /// Every window is rejected or accepted.
    Complete,
    /// Free windows remain but the sampler missed them `max_attempts`
    /// times in a row.
    SamplerExhausted,
}

/// One drawn window. Counters describe the state after the window was
/// processed; `p_uniform` is the uniform-branch weight in force for the
/// next draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub i: usize,
    pub window: Window,
    pub response: f64,
    pub kind: ParticleKind,
    pub source: DrawSource,
    pub n_rejected: u64,
    pub n_accepted: u64,
    pub n_ambiguity: u64,
    pub p_uniform: f64,
    pub stages_evaluated: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub detector: DetectorKind,
    pub total_windows: u64,
    /// Uniform-branch weight before the first draw.
    pub initial_p_uniform: f64,
    pub records: Vec<IterationRecord>,
    /// Windows with `f >= t_h`, with their responses.
    pub positives: Vec<(Window, f64)>,
    pub termination: Termination,
    /// MPW stage sizes actually drawn.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stage_sizes: Vec<usize>,
    /// Iterations after which the semi-incremental mixture was rebuilt.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rebuilds: Vec<usize>,
}

impl RunTrace {
    pub fn windows_used(&self) -> usize {
        self.records.len()
    }

    /// Boxes of the positive windows after non-maximum suppression.
    pub fn detections(&self, space: &SearchSpace, nms_threshold: f64) -> Vec<Detection> {
        let candidates: Vec<Detection> = self
            .positives
            .iter()
            .map(|&(w, f)| Detection { bbox: space.to_box(w), score: f })
            .collect();
        nms(&candidates, nms_threshold)
    }
}

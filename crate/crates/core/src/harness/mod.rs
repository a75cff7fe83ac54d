//! Scene generation, detection scoring, cost accounting and curve
//! extraction, plus the paired multi-detector experiment runner.

mod curves;
mod experiment;
mod metrics;
mod scenes;

pub use curves::{extract_curves, write_curves_csv, CurvePoint};
pub use experiment::{run_experiment, summarize, DetectorSpec, Experiment, RunResult, ScorerSpec, Summary};
pub use metrics::{cost_estimate, evaluate, CostModel, Metrics};
pub use scenes::{generate_scenes, PeakRange, SceneParams};

/// Probability that `n1` uniform draws from `m_total` windows hit at least
/// one of `m` target windows: `1 - (1 - m / M)^N1`.
pub fn hit_probability(m_total: u64, m: u64, n1: u64) -> f64 {
    if m >= m_total {
        return 1.0;
    }
    let miss = (n1 as f64 * (-(m as f64) / m_total as f64).ln_1p()).exp();
    1.0 - miss
}

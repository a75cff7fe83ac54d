use rand::Rng as _;

use super::{classify, DetectorConfig, DetectorError, DetectorKind, DrawSource, IterationRecord, ParticleKind, RunTrace, Termination};
use crate::proposal::{sample_uniform, GaussianMixture};
use crate::rng::{seeded, Rng};
use crate::scorer::Scorer;
use crate::space::{SearchSpace, Window};

/// Stage sizes `N_i = N_1 * exp(-gamma * (i - 1))`, truncated to integers.
pub fn mpw_schedule(n1: usize, gamma: f64, m: usize) -> Vec<usize> {
    (0..m)
        .map(|i| (n1 as f64 * (-gamma * i as f64).exp() + 1e-9).floor() as usize)
        .collect()
}

/// A decaying schedule whose stage sizes sum to exactly `budget`. The
/// rounding remainder goes to the first stage; empty trailing stages are
/// dropped.
pub fn mpw_budget_schedule(budget: usize, gamma: f64, m: usize) -> Vec<usize> {
    if budget == 0 || m == 0 {
        return Vec::new();
    }
    let denom: f64 = (0..m).map(|i| (-gamma * i as f64).exp()).sum();
    let n1 = ((budget as f64 / denom).floor() as usize).max(1);
    let mut stages = mpw_schedule(n1, gamma, m);
    stages.retain(|&n| n > 0);
    let mut total: usize = stages.iter().sum();
    while total > budget {
        let last = stages.last_mut().expect("non-empty schedule");
        let cut = (*last).min(total - budget);
        *last -= cut;
        total -= cut;
        if *last == 0 {
            stages.pop();
        }
    }
    stages[0] += budget - total;
    stages
}

/// Draws from the stage proposal `q_i = alpha * g_{i-1} + (1 - alpha) * q_{i-1}`
/// with `q_1` uniform. A Gaussian draw that keeps missing the grid falls
/// back to the uniform.
fn draw(
    mixtures: &[GaussianMixture],
    alpha: f64,
    space: &SearchSpace,
    rng: &mut Rng,
    max_attempts: u32,
) -> (Window, DrawSource) {
    let mut level = mixtures.len();
    while level > 0 {
        if alpha >= 1.0 || rng.random::<f64>() < alpha {
            if let Some(w) = mixtures[level - 1].sample_full(space, rng, max_attempts) {
                return (w, DrawSource::Gaussian);
            }
            break;
        }
        level -= 1;
    }
    (sample_uniform(space, rng), DrawSource::Uniform)
}

/// Multi-stage particle windows: the first stage samples uniformly, each
/// later stage samples the Gaussian mixture built from the previous stage's
/// particles weighted by their normalized responses.
pub fn run_mpw(space: &SearchSpace, scorer: &dyn Scorer, config: &DetectorConfig) -> Result<RunTrace, DetectorError> {
    config.validate()?;
    if space.window_count() == 0 {
        return Err(DetectorError::EmptySpace);
    }
    let schedule = mpw_budget_schedule(config.budget, config.mpw_gamma, config.mpw_stage_count);
    let alpha = config.mpw_alpha;
    let p_uniform_at = |stage: usize| (1.0 - alpha).powi(stage as i32);
    let mut rng = seeded(config.seed);
    let mut mixtures: Vec<GaussianMixture> = Vec::with_capacity(schedule.len());
    let mut records = Vec::with_capacity(config.budget);
    let mut positives = Vec::new();
    let mut n_ambiguity = 0;
    for (stage, &n) in schedule.iter().enumerate() {
        let mut batch = Vec::with_capacity(n);
        for k in 0..n {
            let (w, source) = draw(&mixtures, alpha, space, &mut rng, config.max_attempts);
            let r = scorer.score(space, w)?;
            let kind = classify(r.response, config.t_low(), config.t_high());
            match kind {
                ParticleKind::Acceptance => positives.push((w, r.response)),
                ParticleKind::Ambiguity => n_ambiguity += 1,
                ParticleKind::Rejection => {}
            }
            let next_stage = if k + 1 < n { stage } else { stage + 1 };
            records.push(IterationRecord {
                i: records.len() + 1,
                window: w,
                response: r.response,
                kind,
                source,
                n_rejected: 0,
                n_accepted: 0,
                n_ambiguity,
                p_uniform: p_uniform_at(next_stage),
                stages_evaluated: r.stages_evaluated,
            });
            batch.push((w, r.response));
        }
        mixtures.push(GaussianMixture::from_particles(space, &batch, config.spread));
    }
    Ok(RunTrace {
        detector: DetectorKind::Mpw,
        total_windows: space.window_count(),
        initial_p_uniform: 1.0,
        records,
        positives,
        termination: Termination::Budget,
        stage_sizes: schedule,
        rebuilds: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::{AcceptanceRatios, RadiusTable, RegionRules, ScalePropagation};
    use crate::scorer::{ScenePeak, SyntheticScene};
    use crate::space::SpaceParams;
    use proptest::prelude::*;

    fn space() -> SearchSpace {
        SearchSpace::new(SpaceParams {
            image_w: 160,
            image_h: 120,
            template_w: 16,
            template_h: 32,
            stride: 1,
            scale_factor: 1.1,
            scale_count: 5,
        })
        .unwrap()
    }

    fn config(budget: usize, seed: u64) -> DetectorConfig {
        let rules = RegionRules {
            t_low: -2.0,
            t_high: 0.0,
            rejection: RadiusTable::pedestrian(),
            acceptance: AcceptanceRatios::pedestrian(),
            propagation: ScalePropagation::pedestrian(),
        };
        DetectorConfig::new(rules, budget, seed)
    }

    #[test]
    fn table_schedule() {
        assert_eq!(mpw_schedule(2000, 0.44, 5), vec![2000, 1288, 829, 534, 344]);
        assert_eq!(mpw_schedule(300, 0.0, 4), vec![300; 4]);
        assert_eq!(mpw_schedule(77, 0.44, 1), vec![77]);
    }

    #[test]
    fn budget_schedule_is_exact() {
        for budget in [1, 2, 3, 5, 17, 100, 384, 1000, 4995] {
            let s = mpw_budget_schedule(budget, 0.44, 5);
            assert_eq!(s.iter().sum::<usize>(), budget, "{s:?}");
            assert!(s.iter().all(|&n| n > 0));
            assert!(s.windows(2).all(|p| p[0] >= p[1]), "{s:?}");
        }
    }

    #[test]
    fn trace_length_is_budget() {
        let sp = space();
        let scene = SyntheticScene {
            image_w: 160,
            image_h: 120,
            objects: vec![ScenePeak { bbox: sp.to_box(Window::new(60, 40, 2)), peak: 2.0 }],
            distractors: vec![],
            floor: -5.0,
            sharpness: 2.5,
            scale_sharpness: Some(0.3),
        };
        let trace = run_mpw(&sp, &scene, &config(500, 1)).unwrap();
        assert_eq!(trace.records.len(), 500);
        assert_eq!(trace.stage_sizes.iter().sum::<usize>(), 500);
        let first = trace.stage_sizes[0];
        assert!(trace.records[..first].iter().all(|r| r.source == DrawSource::Uniform));
        assert!(trace.records[first..].iter().all(|r| r.source == DrawSource::Gaussian));
    }

    #[test]
    fn second_stage_moves_toward_the_object() {
        let sp = space();
        let target = Window::new(70, 40, 2);
        let center = sp.to_box(target);
        let scene = SyntheticScene {
            image_w: 160,
            image_h: 120,
            objects: vec![ScenePeak { bbox: center, peak: 2.0 }],
            distractors: vec![],
            floor: -5.0,
            sharpness: 2.5,
            scale_sharpness: Some(0.3),
        };
        let mut c = config(600, 0);
        c.mpw_stage_count = 2;
        let (mut d1, mut d2) = (0.0, 0.0);
        for seed in 0..100 {
            c.seed = seed;
            let trace = run_mpw(&sp, &scene, &c).unwrap();
            let n1 = trace.stage_sizes[0];
            let mean = |rs: &[IterationRecord]| {
                rs.iter()
                    .map(|r| {
                        let b = sp.to_box(r.window);
                        ((b.cx - center.cx).powi(2) + (b.cy - center.cy).powi(2)).sqrt()
                    })
                    .sum::<f64>()
                    / rs.len() as f64
            };
            d1 += mean(&trace.records[..n1]);
            d2 += mean(&trace.records[n1..]);
        }
        assert!(d2 < d1, "stage 2 mean distance {d2} vs stage 1 {d1}");
    }

    #[test]
    fn blended_proposal_mixes_in_uniform_draws() {
        let sp = space();
        let scene = SyntheticScene {
            image_w: 160,
            image_h: 120,
            objects: vec![],
            distractors: vec![],
            floor: -5.0,
            sharpness: 2.5,
            scale_sharpness: None,
        };
        let mut c = config(400, 3);
        c.mpw_alpha = 0.5;
        let trace = run_mpw(&sp, &scene, &c).unwrap();
        let later = &trace.records[trace.stage_sizes[0]..];
        assert!(later.iter().any(|r| r.source == DrawSource::Uniform));
        assert!(later.iter().any(|r| r.source == DrawSource::Gaussian));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn budget_schedule_sums(budget in 1usize..20000, gamma in 0.0f64..2.0, m in 1usize..8) {
            let s = mpw_budget_schedule(budget, gamma, m);
            prop_assert_eq!(s.iter().sum::<usize>(), budget);
            prop_assert!(s.len() <= m);
        }
    }
}

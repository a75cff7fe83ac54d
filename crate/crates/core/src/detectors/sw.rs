use super::{classify, DetectorConfig, DetectorError, DetectorKind, DrawSource, IterationRecord, ParticleKind, RunTrace, Termination};
use crate::scorer::Scorer;
use crate::space::SearchSpace;

/// Scores every window of `space` in enumeration order.
pub fn run_sw(space: &SearchSpace, scorer: &dyn Scorer, config: &DetectorConfig) -> Result<RunTrace, DetectorError> {
    config.validate()?;
    let mut records = Vec::with_capacity(space.window_count() as usize);
    let mut positives = Vec::new();
    let mut n_ambiguity = 0;
    for (k, w) in space.enumerate_all().enumerate() {
        let r = scorer.score(space, w)?;
        let kind = classify(r.response, config.t_low(), config.t_high());
        match kind {
            ParticleKind::Acceptance => positives.push((w, r.response)),
            ParticleKind::Ambiguity => n_ambiguity += 1,
            ParticleKind::Rejection => {}
        }
        records.push(IterationRecord {
            i: k + 1,
            window: w,
            response: r.response,
            kind,
            source: DrawSource::Grid,
            n_rejected: 0,
            n_accepted: 0,
            n_ambiguity,
            p_uniform: 0.0,
            stages_evaluated: r.stages_evaluated,
        });
    }
    Ok(RunTrace {
        detector: DetectorKind::Sw,
        total_windows: space.window_count(),
        initial_p_uniform: 0.0,
        records,
        positives,
        termination: Termination::Budget,
        stage_sizes: Vec::new(),
        rebuilds: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::region::{AcceptanceRatios, RadiusTable, RegionRules, ScalePropagation};
    use crate::scorer::{ScenePeak, SyntheticScene};
    use crate::space::{SpaceParams, Window};

    fn setup() -> (SearchSpace, DetectorConfig) {
        let space = SearchSpace::new(SpaceParams {
            image_w: 80,
            image_h: 60,
            template_w: 16,
            template_h: 32,
            stride: 4,
            scale_factor: 1.2,
            scale_count: 2,
        })
        .unwrap();
        let rules = RegionRules {
            t_low: -2.0,
            t_high: 0.0,
            rejection: RadiusTable::pedestrian(),
            acceptance: AcceptanceRatios::pedestrian(),
            propagation: ScalePropagation::pedestrian(),
        };
        (space, DetectorConfig::new(rules, 10, 0))
    }

    fn scene(objects: Vec<ScenePeak>) -> SyntheticScene {
        SyntheticScene {
            image_w: 80,
            image_h: 60,
            objects,
            distractors: vec![],
            floor: -5.0,
            sharpness: 2.5,
            scale_sharpness: None,
        }
    }

    #[test]
    fn object_on_grid_is_found() {
        let (space, cfg) = setup();
        let w = Window::new(5, 3, 1);
        let sc = scene(vec![ScenePeak { bbox: space.to_box(w), peak: 2.0 }]);
        let trace = run_sw(&space, &sc, &cfg).unwrap();
        assert_eq!(trace.records.len() as u64, space.window_count());
        assert!(trace.positives.iter().any(|p| p.0 == w));
    }

    #[test]
    fn empty_scene_has_no_positives() {
        let (space, cfg) = setup();
        let trace = run_sw(&space, &scene(vec![]), &cfg).unwrap();
        assert!(trace.positives.is_empty());
        assert_eq!(trace.records.len() as u64, space.window_count());
    }
}

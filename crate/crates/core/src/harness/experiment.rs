use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{cost_estimate, evaluate, CostModel, Metrics};
use crate::detectors::{run_ipw, run_mpw, run_sipw, run_sw, DetectorConfig, DetectorError, DetectorKind, RunTrace, Termination};
use crate::rng::derive_seed;
use crate::scorer::{CascadeProfile, CascadeScorer, Scorer, SyntheticScene};
use crate::space::SearchSpace;

#[derive(Clone, Debug, PartialEq)]
pub enum ScorerSpec {
    Synthetic,
    Cascade(CascadeProfile),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorSpec {
    pub name: String,
    pub kind: DetectorKind,
    pub config: DetectorConfig,
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub space: SearchSpace,
    /// Grid scanned by sliding-window detectors; defaults to `space`.
    pub sw_space: Option<SearchSpace>,
    pub scenes: Vec<SyntheticScene>,
    pub scorer: ScorerSpec,
    pub detectors: Vec<DetectorSpec>,
    /// Budgets to sweep. Empty runs each detector at its own budget.
    pub budgets: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub match_threshold: f64,
    pub nms_threshold: f64,
    pub cost: CostModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub scene: usize,
    pub trial: usize,
    pub detector: String,
    pub kind: DetectorKind,
    pub budget: usize,
    pub seed: u64,
    pub metrics: Metrics,
    pub termination: Termination,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<RunTrace>,
}

/// Aggregate over every scene and trial of one detector at one budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub detector: String,
    pub budget: usize,
    pub runs: usize,
    pub metrics: Metrics,
    /// Standard deviation of the per-run detection rate.
    pub rate_std: f64,
}

impl Experiment {
    /// Seed shared by every detector and budget on one scene and trial.
    pub fn trial_seed(&self, scene: usize, trial: usize) -> u64 {
        derive_seed(self.seed, &[scene as u64, trial as u64])
    }

    fn budgets(&self) -> Vec<Option<usize>> {
        if self.budgets.is_empty() {
            vec![None]
        } else {
            self.budgets.iter().copied().map(Some).collect()
        }
    }

    fn scorer_for(&self, scene: usize) -> Box<dyn Scorer + '_> {
        let s = &self.scenes[scene];
        match &self.scorer {
            ScorerSpec::Synthetic => Box::new(s.clone()),
            ScorerSpec::Cascade(profile) => {
                let mut p = profile.clone();
                p.seed = derive_seed(profile.seed, &[scene as u64]);
                Box::new(CascadeScorer::new(s.clone(), p))
            }
        }
    }

    fn run_one(&self, scene: usize, trial: usize, budget: Option<usize>, det: &DetectorSpec, keep: bool) -> Result<RunResult, DetectorError> {
        let seed = self.trial_seed(scene, trial);
        let mut config = det.config.clone();
        config.seed = seed;
        if let Some(b) = budget {
            config.budget = b;
        }
        let scorer = self.scorer_for(scene);
        let (space, trace) = match det.kind {
            DetectorKind::Sw => {
                let sp = self.sw_space.as_ref().unwrap_or(&self.space);
                (sp, run_sw(sp, scorer.as_ref(), &config)?)
            }
            DetectorKind::Mpw => (&self.space, run_mpw(&self.space, scorer.as_ref(), &config)?),
            DetectorKind::Ipw => (&self.space, run_ipw(&self.space, scorer.as_ref(), &config)?),
            DetectorKind::Sipw => (&self.space, run_sipw(&self.space, scorer.as_ref(), &config)?),
        };
        let detections = trace.detections(space, self.nms_threshold);
        let mut metrics = evaluate(&detections, &self.scenes[scene].ground_truth(), self.match_threshold);
        metrics.windows_used = trace.windows_used() as u64;
        metrics.cost = cost_estimate(&trace, &self.cost);
        Ok(RunResult {
            scene,
            trial,
            detector: det.name.clone(),
            kind: det.kind,
            budget: budget.unwrap_or(if det.kind == DetectorKind::Sw { trace.windows_used() } else { config.budget }),
            seed,
            metrics,
            termination: trace.termination,
            trace: keep.then_some(trace),
        })
    }
}

/// Runs every (scene, trial, budget, detector) combination on a pool of
/// `jobs` threads (0 picks the default). Results come back in that nested
/// order regardless of scheduling.
pub fn run_experiment(exp: &Experiment, keep_traces: bool, jobs: usize) -> Result<Vec<RunResult>, DetectorError> {
    let budgets = exp.budgets();
    let mut tasks = Vec::new();
    for scene in 0..exp.scenes.len() {
        for trial in 0..exp.trials {
            for &b in &budgets {
                for det in &exp.detectors {
                    tasks.push((scene, trial, b, det));
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| DetectorError::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        tasks
            .par_iter()
            .map(|&(scene, trial, b, det)| exp.run_one(scene, trial, b, det, keep_traces))
            .collect()
    })
}

/// Per (detector, budget) aggregates, in first-appearance order.
pub fn summarize(results: &[RunResult]) -> Vec<Summary> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in results {
        let k = (r.detector.clone(), r.budget);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(detector, budget)| {
            let runs: Vec<&RunResult> = results.iter().filter(|r| r.detector == detector && r.budget == budget).collect();
            let metrics = runs.iter().fold(Metrics::default(), |acc, r| acc.merge(&r.metrics));
            let rates: Vec<f64> = runs.iter().map(|r| r.metrics.detection_rate()).collect();
            let mean = rates.iter().sum::<f64>() / rates.len() as f64;
            let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / rates.len() as f64;
            Summary { detector, budget, runs: runs.len(), metrics, rate_std: var.sqrt() }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenes::{generate_scenes, PeakRange, SceneParams};
    use crate::region::{AcceptanceRatios, RadiusTable, RegionRules, ScalePropagation};
    use crate::space::SpaceParams;

    fn experiment(jobs_scenes: usize) -> Experiment {
        let space = SearchSpace::new(SpaceParams {
            image_w: 160,
            image_h: 120,
            template_w: 16,
            template_h: 32,
            stride: 1,
            scale_factor: 1.1,
            scale_count: 4,
        })
        .unwrap();
        let params = SceneParams {
            image_w: 160,
            image_h: 120,
            objects: 1,
            distractors: 2,
            aspect: 0.5,
            min_height: 32.0,
            max_height: 32.0 * 1.1f64.powi(3),
            object_peak: PeakRange::fixed(2.0),
            distractor_peak: PeakRange::fixed(-1.0),
            floor: -5.0,
            sharpness: 2.5,
            scale_sharpness: Some(0.3),
            max_overlap: 0.3,
            max_retries: 1000,
        };
        let rules = RegionRules {
            t_low: -2.0,
            t_high: 0.0,
            rejection: RadiusTable::pedestrian(),
            acceptance: AcceptanceRatios::pedestrian(),
            propagation: ScalePropagation::pedestrian(),
        };
        let config = DetectorConfig::new(rules, 200, 0);
        let det = |name: &str, kind| DetectorSpec { name: name.into(), kind, config: config.clone() };
        Experiment {
            space,
            sw_space: None,
            scenes: generate_scenes(&params, 3, jobs_scenes).unwrap(),
            scorer: ScorerSpec::Synthetic,
            detectors: vec![det("mpw", DetectorKind::Mpw), det("ipw", DetectorKind::Ipw), det("ipw-again", DetectorKind::Ipw)],
            budgets: vec![100, 200],
            trials: 2,
            seed: 77,
            match_threshold: 0.5,
            nms_threshold: 0.5,
            cost: CostModel::default(),
        }
    }

    #[test]
    fn results_are_ordered_and_thread_count_independent() {
        let exp = experiment(4);
        let a = run_experiment(&exp, false, 1).unwrap();
        let b = run_experiment(&exp, false, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4 * 2 * 2 * 3);
        assert_eq!((a[0].scene, a[0].trial, a[0].budget, a[0].detector.as_str()), (0, 0, 100, "mpw"));
        assert_eq!(a[1].detector, "ipw");
    }

    #[test]
    fn duplicate_detectors_give_identical_results() {
        let exp = experiment(3);
        let res = run_experiment(&exp, false, 2).unwrap();
        for pair in res.chunks(3) {
            assert_eq!(pair[1].metrics, pair[2].metrics);
            assert_eq!(pair[0].seed, pair[1].seed);
        }
        let sums = summarize(&res);
        assert_eq!(sums.len(), 6);
        let get = |d: &str, b: usize| sums.iter().find(|s| s.detector == d && s.budget == b).unwrap().metrics;
        assert_eq!(get("ipw", 100), get("ipw-again", 100));
        assert_eq!(get("mpw", 200).windows_used, 3 * 2 * 200);
    }
}

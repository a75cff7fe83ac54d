use rand::Rng as _;

use super::{classify, DetectorConfig, DetectorError, DetectorKind, DrawSource, IterationRecord, ParticleKind, RunTrace, Termination};
use crate::proposal::{mixture_weights, sample_dented_gaussian, sample_dented_uniform, GaussianMixture};
use crate::region::RegionBook;
use crate::rng::seeded;
use crate::scorer::Scorer;
use crate::space::{SearchSpace, Window};

/// Incremental particle windows: one window per iteration from the dented
/// uniform or the dented Gaussian mixture over all ambiguity windows so far.
pub fn run_ipw(space: &SearchSpace, scorer: &dyn Scorer, config: &DetectorConfig) -> Result<RunTrace, DetectorError> {
    run(space, scorer, config, false)
}

/// Semi-incremental variant: uniform-only until the first rebuild, then the
/// Gaussian mixture is rebuilt from each batch of ambiguity windows whenever
/// the draw counter reaches a threshold that decays by `exp(-gamma)`.
pub fn run_sipw(space: &SearchSpace, scorer: &dyn Scorer, config: &DetectorConfig) -> Result<RunTrace, DetectorError> {
    run(space, scorer, config, true)
}

fn run(space: &SearchSpace, scorer: &dyn Scorer, config: &DetectorConfig, semi: bool) -> Result<RunTrace, DetectorError> {
    config.validate()?;
    let n = space.window_count();
    if n == 0 {
        return Err(DetectorError::EmptySpace);
    }
    let rules = &config.rules;
    let mut rng = seeded(config.seed);
    let mut book = RegionBook::new(space);
    let mut ambiguity: Vec<(Window, f64)> = Vec::new();
    let mut mixture = GaussianMixture::default();
    let mut records = Vec::with_capacity(config.budget);
    let mut positives = Vec::new();
    let mut rebuilds = Vec::new();
    // Semi-incremental state: has the mixture been built yet, draws since the
    // last rebuild, and the current rebuild threshold.
    let mut built = false;
    let mut n_c = 0usize;
    let mut n_c_star = config.n_c_star_init();

    let p_uniform = |book: &RegionBook, built: bool| {
        if semi && !built {
            1.0
        } else {
            mixture_weights(config.alpha, book.rejected_count(), book.accepted_count(), n).p_uniform
        }
    };
    let initial_p_uniform = p_uniform(&book, built);
    let mut termination = Termination::Budget;

    for i in 1..=config.budget {
        if book.free_count() == 0 {
            termination = Termination::Complete;
            break;
        }
        let p_u = p_uniform(&book, built);
        let mut drawn = None;
        if !mixture.is_empty() && rng.random::<f64>() >= p_u {
            drawn = sample_dented_gaussian(&mixture, &book, space, &mut rng, config.max_attempts)?
                .map(|w| (w, DrawSource::Gaussian));
        }
        if drawn.is_none() {
            drawn = sample_dented_uniform(&book, space, &mut rng, config.max_attempts).map(|w| (w, DrawSource::Uniform));
        }
        let Some((w, source)) = drawn else {
            termination = if book.free_count() == 0 { Termination::Complete } else { Termination::SamplerExhausted };
            break;
        };

        let r = scorer.score(space, w)?;
        let kind = classify(r.response, rules.t_low, rules.t_high);
        match kind {
            ParticleKind::Rejection => {
                book.mark_rejection(space, w, r.response, rules)?;
            }
            ParticleKind::Acceptance => {
                book.mark_acceptance(space, w, r.response, rules)?;
                positives.push((w, r.response));
            }
            ParticleKind::Ambiguity => {
                ambiguity.push((w, r.response));
                if !semi {
                    mixture = GaussianMixture::from_particles(space, &ambiguity, config.spread);
                }
            }
        }
        if semi {
            n_c += 1;
            if n_c as f64 >= n_c_star {
                built = true;
                mixture = GaussianMixture::from_particles(space, &ambiguity, config.spread);
                ambiguity.clear();
                n_c_star *= (-config.gamma).exp();
                n_c = 0;
                rebuilds.push(i);
            }
        }

        records.push(IterationRecord {
            i,
            window: w,
            response: r.response,
            kind,
            source,
            n_rejected: book.rejected_count(),
            n_accepted: book.accepted_count(),
            n_ambiguity: ambiguity.len() as u64,
            p_uniform: p_uniform(&book, built),
            stages_evaluated: r.stages_evaluated,
        });
    }

    Ok(RunTrace {
        detector: if semi { DetectorKind::Sipw } else { DetectorKind::Ipw },
        total_windows: n,
        initial_p_uniform,
        records,
        positives,
        termination,
        stage_sizes: Vec::new(),
        rebuilds,
    })
}

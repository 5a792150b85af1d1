//! Seeded hypothesize-and-verify loop shared by the rigid, PnP and
//! fundamental-matrix estimators.
//!
//! Samples are drawn sequentially from one seeded stream and scored in
//! fixed-size batches. Within a batch the best hypothesis is chosen by
//! (inlier count, lower iteration index), so serial and parallel scoring
//! select the same model. The adaptive iteration bound is only checked
//! between batches.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const BATCH: usize = 32;
const MAX_REDRAWS: usize = 100;
const MAX_REFITS: usize = 5;

pub(crate) trait Estimator: Sync {
    type Model: Clone + Send + Sync;

    fn sample_size(&self) -> usize;
    fn len(&self) -> usize;
    /// Cheap rejection of samples that cannot produce a model.
    fn is_degenerate(&self, sample: &[usize]) -> bool;
    fn fit(&self, sample: &[usize]) -> Option<Self::Model>;
    /// Least-squares fit over an inlier set; defaults to the minimal fit.
    fn refit(&self, inliers: &[usize]) -> Option<Self::Model> {
        self.fit(inliers)
    }
    fn residual(&self, model: &Self::Model, i: usize) -> f64;
}

#[derive(Clone, Debug)]
pub(crate) struct RansacConfig {
    pub max_iterations: usize,
    pub threshold: f64,
    pub confidence: f64,
    pub seed: u64,
    pub parallel: bool,
}

#[derive(Clone, Debug)]
pub(crate) struct RansacOutcome<M> {
    pub model: M,
    pub inliers: Vec<usize>,
    pub iterations: usize,
}

fn inliers_of<E: Estimator>(est: &E, model: &E::Model, threshold: f64) -> Vec<usize> {
    (0..est.len())
        .filter(|&i| est.residual(model, i) <= threshold)
        .collect()
}

/// Iterations needed to draw one all-inlier sample with the given
/// confidence when a fraction `w` of the data are inliers.
pub(crate) fn adaptive_bound(confidence: f64, w: f64, sample_size: usize) -> usize {
    let p_good = w.powi(sample_size as i32);
    if p_good >= 1.0 {
        return 0;
    }
    if p_good <= 0.0 {
        return usize::MAX;
    }
    let n = (1.0 - confidence).ln() / (1.0 - p_good).ln();
    if n.is_finite() {
        n.ceil().max(0.0) as usize
    } else {
        usize::MAX
    }
}

/// Runs the loop; `None` when no hypothesis could be fitted at all.
pub(crate) fn run<E: Estimator>(est: &E, cfg: &RansacConfig) -> Option<RansacOutcome<E::Model>> {
    let n = est.len();
    let s = est.sample_size();
    if n < s {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, E::Model)> = None;
    let mut iterations = 0;
    let mut bound = cfg.max_iterations;

    while iterations < bound.min(cfg.max_iterations) {
        let batch_len = BATCH.min(cfg.max_iterations - iterations);
        let samples: Vec<Option<Vec<usize>>> = (0..batch_len)
            .map(|_| {
                for _ in 0..MAX_REDRAWS {
                    let sample = index::sample(&mut rng, n, s).into_vec();
                    if !est.is_degenerate(&sample) {
                        return Some(sample);
                    }
                }
                None
            })
            .collect();

        let score = |sample: &Option<Vec<usize>>| -> Option<(usize, E::Model)> {
            let model = est.fit(sample.as_ref()?)?;
            let count = (0..n)
                .filter(|&i| est.residual(&model, i) <= cfg.threshold)
                .count();
            Some((count, model))
        };
        let scored: Vec<Option<(usize, E::Model)>> = if cfg.parallel {
            samples.par_iter().map(score).collect()
        } else {
            samples.iter().map(score).collect()
        };

        for (count, model) in scored.into_iter().flatten() {
            if best.as_ref().is_none_or(|(c, _)| count > *c) {
                best = Some((count, model));
            }
        }
        iterations += batch_len;
        if let Some((count, _)) = &best {
            bound = adaptive_bound(cfg.confidence, *count as f64 / n as f64, s);
        }
    }

    let (_, mut model) = best?;
    let mut inliers = inliers_of(est, &model, cfg.threshold);
    for _ in 0..MAX_REFITS {
        if inliers.len() < s {
            break;
        }
        let Some(refined) = est.refit(&inliers) else { break };
        let next = inliers_of(est, &refined, cfg.threshold);
        if next.len() < inliers.len() {
            break;
        }
        let stable = next == inliers;
        model = refined;
        inliers = next;
        if stable {
            break;
        }
    }
    Some(RansacOutcome {
        model,
        inliers,
        iterations,
    })
}

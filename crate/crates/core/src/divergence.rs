//! Monte Carlo Kullback-Leibler divergence between mixtures.
//!
//! KL divergence between Gaussian mixtures has no closed form, so
//! `D(f1 || f2)` is estimated as the sample mean of `ln f1(x) - ln f2(x)`
//! over ancestral draws from `f1`. Sampling is partitioned into fixed-size
//! chunks, each with a seed derived from the caller's, so estimates are
//! reproducible regardless of how chunks are scheduled.

use crate::error::{Error, Result};
use crate::gmm::GmmModel;
use crate::seeding::derive;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const CHUNK: usize = 8192;

/// A Monte Carlo divergence estimate in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlEstimate {
    /// The reported divergence, clamped to `>= 0`.
    pub value: f64,
    /// The unclamped sample mean, kept for diagnostics; near-identical
    /// models can legitimately estimate slightly below zero.
    pub raw_value: f64,
    /// Standard error of the sample mean.
    pub std_error: f64,
    pub sample_count: usize,
}

/// Estimates `D(f1 || f2)` from `samples` ancestral draws of `f1`.
pub fn kl_divergence(
    f1: &GmmModel,
    f2: &GmmModel,
    samples: usize,
    seed: u64,
) -> Result<KlEstimate> {
    if samples == 0 {
        return Err(Error::InvalidArgument(
            "divergence estimation needs at least one sample".to_string(),
        ));
    }
    let chunk_count = samples.div_ceil(CHUNK);
    let partials: Vec<(f64, f64)> = (0..chunk_count)
        .into_par_iter()
        .map(|c| {
            let count = CHUNK.min(samples - c * CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, c as u64));
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..count {
                let x = f1.draw(&mut rng);
                let lp1 = f1.log_pdf(x);
                let lp2 = f2.log_pdf(x);
                if lp2 == f64::NEG_INFINITY {
                    return Err(Error::InfiniteDivergence);
                }
                if lp1 == f64::NEG_INFINITY {
                    return Err(Error::DegenerateData(
                        "a sampled point has zero density under its own model".to_string(),
                    ));
                }
                let d = lp1 - lp2;
                sum += d;
                sum_sq += d * d;
            }
            Ok((sum, sum_sq))
        })
        .collect::<Result<Vec<_>>>()?;

    // Combine in chunk order so the estimate is scheduling-independent.
    let (sum, sum_sq) = partials
        .iter()
        .fold((0.0, 0.0), |(s, q), (cs, cq)| (s + cs, q + cq));
    let n = samples as f64;
    let mean = sum / n;
    let std_error = if samples > 1 {
        let var = ((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(KlEstimate {
        value: mean.max(0.0),
        raw_value: mean,
        std_error,
        sample_count: samples,
    })
}

/// Symmetric divergence `(D(f1 || f2) + D(f2 || f1)) / 2`.
///
/// Both directions use the caller's seed with the model pair swapped, so
/// swapping the arguments swaps the two directional estimates and the
/// average is bit-for-bit argument-order invariant.
pub fn kl_symmetric(f1: &GmmModel, f2: &GmmModel, samples: usize, seed: u64) -> Result<KlEstimate> {
    let forward = kl_divergence(f1, f2, samples, seed)?;
    let backward = kl_divergence(f2, f1, samples, seed)?;
    let raw = 0.5 * (forward.raw_value + backward.raw_value);
    let std_error = 0.5
        * (forward.std_error * forward.std_error + backward.std_error * backward.std_error).sqrt();
    Ok(KlEstimate {
        value: raw.max(0.0),
        raw_value: raw,
        std_error,
        sample_count: forward.sample_count + backward.sample_count,
    })
}

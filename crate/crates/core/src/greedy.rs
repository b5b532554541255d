//! Greedy component-by-component mixture construction.
//!
//! Training starts from the closed-form one-component fit and repeatedly
//! tries to grow the mixture: propose candidate components seeded from
//! responsibility-weighted data points, refine each candidate by a partial
//! EM that holds the existing mixture fixed, blend the best one in, run
//! full EM, and keep the result only while the converged log-likelihood
//! keeps improving. Stops on the first non-improving insertion or at the
//! component cap.

use crate::error::{Error, Result};
use crate::geo::SpatialFeature;
use crate::gmm::{
    e_step, em_fit, log_likelihood, CovarianceMode, EmConfig, GaussianComponent, GmmModel, SymMat2,
};
use crate::seeding::derive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Configuration of the greedy construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub max_components: usize,
    pub candidates_per_component: usize,
    /// Iterations of the candidate-only partial EM refinement.
    pub partial_em_iterations: usize,
    pub covariance_mode: CovarianceMode,
    pub em: EmConfig,
    pub seed: u64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig {
            max_components: 10,
            candidates_per_component: 2,
            partial_em_iterations: 20,
            covariance_mode: CovarianceMode::Diagonal,
            em: EmConfig::default(),
            seed: 42,
        }
    }
}

impl GreedyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_components < 1 {
            return Err(Error::InvalidArgument(
                "max_components must be >= 1".to_string(),
            ));
        }
        if self.candidates_per_component < 1 || self.partial_em_iterations < 1 {
            return Err(Error::InvalidArgument(
                "candidates_per_component and partial_em_iterations must be >= 1".to_string(),
            ));
        }
        self.em.validate()
    }
}

/// One attempted insertion (or the initial fit) in a greedy run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyStep {
    pub component_count: usize,
    pub log_likelihood: f64,
    pub accepted: bool,
}

/// The per-step history of a greedy run; accepted steps have strictly
/// increasing component counts and log-likelihoods.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GreedyTrace {
    pub steps: Vec<GreedyStep>,
}

impl GreedyTrace {
    /// Log-likelihood of the model the run actually returned.
    pub fn final_log_likelihood(&self) -> f64 {
        self.steps
            .iter()
            .rev()
            .find(|s| s.accepted)
            .map(|s| s.log_likelihood)
            .unwrap_or(f64::NEG_INFINITY)
    }
}

/// A proposed new component: its parameters and the mixing weight `w*` the
/// blend `(1 - w*) p + w* g` would use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateComponent {
    pub mean: [f64; 2],
    pub cov: SymMat2,
    pub weight: f64,
}

/// Closed-form maximum-likelihood one-component fit: weight one, the sample
/// mean, and the (floored, mode-respecting) maximum-likelihood covariance.
pub fn fit_one_component(
    data: &[SpatialFeature],
    mode: CovarianceMode,
    variance_floor: f64,
) -> Result<GmmModel> {
    if data.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: data.len(),
        });
    }
    let n = data.len() as f64;
    let mut mean = [0.0, 0.0];
    for s in data {
        mean[0] += s.distance();
        mean[1] += s.orientation();
    }
    mean[0] /= n;
    mean[1] /= n;
    let mut cov = SymMat2::new(0.0, 0.0, 0.0);
    for s in data {
        let dx = s.distance() - mean[0];
        let dy = s.orientation() - mean[1];
        cov.xx += dx * dx;
        cov.xy += dx * dy;
        cov.yy += dy * dy;
    }
    cov = cov.scaled(1.0 / n);
    if mode == CovarianceMode::Diagonal {
        cov.xy = 0.0;
    }
    GmmModel::new(
        vec![GaussianComponent {
            weight: 1.0,
            mean,
            cov: cov.floored(variance_floor),
        }],
        mode,
        "",
    )
}

/// Proposes `candidates_per_component` refined candidates per existing
/// component. Each candidate is seeded from a pair of data points sampled
/// by responsibility weight under that component's soft assignment; its mean
/// starts at the first point of the pair, its covariance at half the parent
/// covariance, and its mixing weight at `0.5 / (M + 1)`. Refinement runs
/// `partial_em_iterations` of two-parameter EM updating only the candidate
/// while the current mixture stays fixed. Components with vanishing
/// responsibility mass propose nothing, so an empty list is legal.
pub fn propose_candidates(
    model: &GmmModel,
    data: &[SpatialFeature],
    cfg: &GreedyConfig,
) -> Result<Vec<CandidateComponent>> {
    cfg.validate()?;
    let points: Vec<[f64; 2]> = data.iter().map(|s| s.vec()).collect();
    let es = e_step(model, &points)?;
    let m = model.components().len();
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let w_init = 0.5 / (m as f64 + 1.0);

    let mut seeds = Vec::new();
    for (i, parent) in model.components().iter().enumerate() {
        let mass: f64 = (0..n).map(|j| es.resp[j * m + i]).sum();
        if mass < 1e-12 {
            continue;
        }
        for _ in 0..cfg.candidates_per_component {
            // The first point of the sampled pair anchors the candidate mean.
            let anchor = weighted_point(&es.resp, m, i, mass, &mut rng);
            let _partner = weighted_point(&es.resp, m, i, mass, &mut rng);
            seeds.push(CandidateComponent {
                mean: points[anchor],
                cov: parent.cov.scaled(0.5).floored(cfg.em.variance_floor),
                weight: w_init,
            });
        }
    }

    let refined: Vec<Option<CandidateComponent>> = seeds
        .par_iter()
        .map(|seed| refine_candidate(*seed, &points, &es.point_log_densities, cfg))
        .collect();
    Ok(refined.into_iter().flatten().collect())
}

/// Index of a data point drawn with probability proportional to its
/// responsibility for component `comp`.
fn weighted_point(resp: &[f64], m: usize, comp: usize, mass: f64, rng: &mut ChaCha8Rng) -> usize {
    let target = rng.random::<f64>() * mass;
    let n = resp.len() / m;
    let mut acc = 0.0;
    for j in 0..n {
        acc += resp[j * m + comp];
        if target < acc {
            return j;
        }
    }
    n - 1
}

/// Two-parameter partial EM: posterior of the candidate against the fixed
/// mixture, then re-estimation of (w*, mean, cov) from that posterior alone.
fn refine_candidate(
    mut cand: CandidateComponent,
    points: &[[f64; 2]],
    base_log_densities: &[f64],
    cfg: &GreedyConfig,
) -> Option<CandidateComponent> {
    let n = points.len();
    let mut gamma = vec![0.0; n];
    for _ in 0..cfg.partial_em_iterations {
        let ln_w = cand.weight.ln();
        let ln_1mw = (1.0 - cand.weight).ln();
        let chol = cand.cov.cholesky().ok()?;
        let mut mass = 0.0;
        for (j, x) in points.iter().enumerate() {
            let num = ln_w + chol.log_pdf(x[0] - cand.mean[0], x[1] - cand.mean[1]);
            let base = ln_1mw + base_log_densities[j];
            let hi = num.max(base);
            let g = if hi == f64::NEG_INFINITY {
                0.0
            } else {
                ((num - hi).exp() / ((num - hi).exp() + (base - hi).exp())).clamp(0.0, 1.0)
            };
            gamma[j] = g;
            mass += g;
        }
        if mass < 1e-12 {
            return None;
        }
        let mut mean = [0.0, 0.0];
        for (j, x) in points.iter().enumerate() {
            mean[0] += gamma[j] * x[0];
            mean[1] += gamma[j] * x[1];
        }
        mean[0] /= mass;
        mean[1] /= mass;
        let mut cov = SymMat2::new(0.0, 0.0, 0.0);
        for (j, x) in points.iter().enumerate() {
            let dx = x[0] - mean[0];
            let dy = x[1] - mean[1];
            cov.xx += gamma[j] * dx * dx;
            cov.xy += gamma[j] * dx * dy;
            cov.yy += gamma[j] * dy * dy;
        }
        cov = cov.scaled(1.0 / mass);
        if cfg.covariance_mode == CovarianceMode::Diagonal {
            cov.xy = 0.0;
        }
        cand = CandidateComponent {
            mean,
            cov: cov.floored(cfg.em.variance_floor),
            weight: mass / n as f64,
        };
        if !(0.0..1.0).contains(&cand.weight) || cand.weight == 0.0 {
            return None;
        }
    }
    Some(cand)
}

/// `(1 - w*) p + w* g`: existing weights scaled down, candidate appended.
fn blend(model: &GmmModel, cand: &CandidateComponent) -> Result<GmmModel> {
    let mut comps: Vec<GaussianComponent> = model
        .components()
        .iter()
        .map(|c| GaussianComponent {
            weight: c.weight * (1.0 - cand.weight),
            ..*c
        })
        .collect();
    comps.push(GaussianComponent {
        weight: cand.weight,
        mean: cand.mean,
        cov: cand.cov,
    });
    GmmModel::new(
        comps,
        model.covariance_mode(),
        model.relation_label().to_string(),
    )
}

/// Runs the full greedy construction and returns the final accepted model
/// with its trace. Deterministic for fixed data, configuration, and seed.
pub fn fit_greedy(data: &[SpatialFeature], cfg: &GreedyConfig) -> Result<(GmmModel, GreedyTrace)> {
    cfg.validate()?;
    let mut model = fit_one_component(data, cfg.covariance_mode, cfg.em.variance_floor)?;
    let mut ll = log_likelihood(&model, data)?;
    let mut trace = GreedyTrace::default();
    trace.steps.push(GreedyStep {
        component_count: 1,
        log_likelihood: ll,
        accepted: true,
    });

    while model.components().len() < cfg.max_components {
        let round = model.components().len() as u64;
        let round_cfg = GreedyConfig {
            seed: derive(cfg.seed, round),
            ..cfg.clone()
        };
        let candidates = propose_candidates(&model, data, &round_cfg)?;
        if candidates.is_empty() {
            break;
        }

        let mut best: Option<(usize, f64)> = None;
        for (idx, cand) in candidates.iter().enumerate() {
            let blended = blend(&model, cand)?;
            let blended_ll = log_likelihood(&blended, data)?;
            if best.is_none_or(|(_, b)| blended_ll > b) {
                best = Some((idx, blended_ll));
            }
        }
        let (best_idx, _) = best.expect("candidates is non-empty");

        let blended = blend(&model, &candidates[best_idx])?;
        let (refined, em_trace) = em_fit(&blended, data, &cfg.em)?;
        let new_ll = *em_trace.last().expect("EM trace is never empty");

        // Improvements at or below the EM tolerance are indistinguishable
        // from convergence noise and end the run.
        let accepted = new_ll > ll + cfg.em.ll_tolerance * ll.abs().max(1.0);
        trace.steps.push(GreedyStep {
            component_count: refined.components().len(),
            log_likelihood: new_ll,
            accepted,
        });
        if !accepted {
            break;
        }
        model = refined;
        ll = new_ll;
    }
    Ok((model, trace))
}

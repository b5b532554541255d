//! Positional-probability grids and multi-observation fusion.
//!
//! A trained relation model plus a known anchor point induce a probability
//! over where the unknown point lies: evaluate the mixture density at the
//! feature extracted from the anchor to each cell center, convert density to
//! per-cell mass with the cell area, and normalize. Several observations of
//! the same unknown point fuse by an independence product of those
//! per-observation masses, accumulated in the log domain.

use crate::divergence::kl_symmetric;
use crate::error::{Error, Result};
use crate::geo::{extract_feature, project, GeoPoint, ProjectionConfig, SpatialFeature};
use crate::gmm::log_likelihood;
use crate::gmm::GmmModel;
use crate::greedy::{fit_greedy, fit_one_component, GreedyConfig};
use crate::seeding::derive;
use rayon::prelude::*;

/// A rectangular lon/lat raster and the projection used to measure it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
    pub nx: usize,
    pub ny: usize,
    pub projection: ProjectionConfig,
}

impl GridSpec {
    pub fn new(
        lon_min: f64,
        lon_max: f64,
        lat_min: f64,
        lat_max: f64,
        nx: usize,
        ny: usize,
        projection: ProjectionConfig,
    ) -> Result<Self> {
        GeoPoint::new(lon_min, lat_min)?;
        GeoPoint::new(lon_max, lat_max)?;
        projection.validate()?;
        // Endpoints are finite here; the GeoPoint checks above reject NaN.
        if lon_min >= lon_max || lat_min >= lat_max {
            return Err(Error::InvalidArgument(format!(
                "empty bounding box: lon [{lon_min}, {lon_max}], lat [{lat_min}, {lat_max}]"
            )));
        }
        if nx < 1 || ny < 1 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least one cell per axis, got {nx} x {ny}"
            )));
        }
        Ok(GridSpec {
            lon_min,
            lon_max,
            lat_min,
            lat_max,
            nx,
            ny,
            projection,
        })
    }

    /// The 50x50 grid over lon [-1, 1], lat [51, 52] with the meridian
    /// correction anchored at the box center.
    pub fn london_default() -> Self {
        GridSpec::new(
            -1.0,
            1.0,
            51.0,
            52.0,
            50,
            50,
            ProjectionConfig::corrected(51.5).expect("51.5 is a valid reference latitude"),
        )
        .expect("default grid parameters are valid")
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn lon_step(&self) -> f64 {
        (self.lon_max - self.lon_min) / self.nx as f64
    }

    pub fn lat_step(&self) -> f64 {
        (self.lat_max - self.lat_min) / self.ny as f64
    }

    /// Center of cell (`col`, `row`); row 0 is the southernmost row.
    pub fn cell_center(&self, col: usize, row: usize) -> GeoPoint {
        GeoPoint {
            lon: self.lon_min + (col as f64 + 0.5) * self.lon_step(),
            lat: self.lat_min + (row as f64 + 0.5) * self.lat_step(),
        }
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint {
            lon: 0.5 * (self.lon_min + self.lon_max),
            lat: 0.5 * (self.lat_min + self.lat_max),
        }
    }

    /// Cell containing `p`, or `None` outside the box.
    pub fn cell_of(&self, p: GeoPoint) -> Option<(usize, usize)> {
        if p.lon < self.lon_min
            || p.lon >= self.lon_max
            || p.lat < self.lat_min
            || p.lat >= self.lat_max
        {
            return None;
        }
        let col = ((p.lon - self.lon_min) / self.lon_step()) as usize;
        let row = ((p.lat - self.lat_min) / self.lat_step()) as usize;
        Some((col.min(self.nx - 1), row.min(self.ny - 1)))
    }

    /// Cell footprint in km^2 under this projection (constant over the box).
    pub fn cell_area_km2(&self) -> f64 {
        let width = self.lon_step() * self.projection.km_per_lon_degree();
        let height = self.lat_step() * crate::geo::KM_PER_DEGREE;
        width * height
    }
}

/// Normalized per-cell probabilities over a [`GridSpec`]; values are stored
/// row-major with row 0 the southernmost row.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityGrid {
    spec: GridSpec,
    values: Vec<f64>,
}

impl ProbabilityGrid {
    /// Normalizes raw non-negative masses into a probability grid.
    pub fn from_masses(spec: GridSpec, masses: Vec<f64>) -> Result<Self> {
        if masses.len() != spec.cell_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} cell values, got {}",
                spec.cell_count(),
                masses.len()
            )));
        }
        let total: f64 = masses.iter().sum();
        if !total.is_finite() || total <= 0.0 {
            return Err(Error::DegenerateData(format!(
                "grid mass sums to {total}; cannot normalize"
            )));
        }
        let values = masses.into_iter().map(|m| m / total).collect();
        Ok(ProbabilityGrid { spec, values })
    }

    /// Wraps values that are already normalized (sum within 1e-9 of one).
    pub fn from_normalized(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.cell_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} cell values, got {}",
                spec.cell_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "grid values must be finite and >= 0".to_string(),
            ));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "grid values sum to {total}, expected 1 within 1e-9"
            )));
        }
        Ok(ProbabilityGrid { spec, values })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Row-major values, row 0 southernmost.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.spec.nx + col]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// (col, row) of the most probable cell; ties resolve to the first in
    /// row-major order.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        (best % self.spec.nx, best / self.spec.nx)
    }

    /// The `k` most probable cell centers, most probable first.
    pub fn top_cells(&self, k: usize) -> Vec<(GeoPoint, f64)> {
        let mut order: Vec<usize> = (0..self.values.len()).collect();
        order.sort_by(|&a, &b| {
            self.values[b]
                .partial_cmp(&self.values[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        order
            .into_iter()
            .take(k)
            .map(|i| {
                (
                    self.spec.cell_center(i % self.spec.nx, i / self.spec.nx),
                    self.values[i],
                )
            })
            .collect()
    }
}

/// One report about the unknown point: a known anchor and the trained model
/// of the relation that links them.
#[derive(Debug, Clone)]
pub struct Observation {
    pub known: GeoPoint,
    pub relation_model: GmmModel,
}

/// Pre-normalization cell masses for one observation: density at the
/// anchor-to-cell feature times cell area. A cell whose center coincides
/// with the anchor has no defined orientation and instead receives the mean
/// of its evaluable neighbors' masses.
fn observation_masses(model: &GmmModel, spec: &GridSpec, known: GeoPoint) -> Result<Vec<f64>> {
    known.validate()?;
    let origin = spec.center();
    let known_c = project(known, origin, &spec.projection)?;
    let area = spec.cell_area_km2();

    let cells: Vec<Option<f64>> = (0..spec.cell_count())
        .into_par_iter()
        .map(|idx| {
            let center = spec.cell_center(idx % spec.nx, idx / spec.nx);
            let cell_c = project(center, origin, &spec.projection)
                .expect("cell centers of a valid spec project cleanly");
            match extract_feature(known_c, cell_c) {
                Ok(f) => Some(model.pdf(f.vec()) * area),
                Err(_) => None,
            }
        })
        .collect();

    let mut masses: Vec<f64> = cells.iter().map(|c| c.unwrap_or(0.0)).collect();
    for idx in 0..cells.len() {
        if cells[idx].is_some() {
            continue;
        }
        let (col, row) = (idx % spec.nx, idx / spec.nx);
        let mut sum = 0.0;
        let mut count = 0usize;
        for dc in -1i64..=1 {
            for dr in -1i64..=1 {
                if dc == 0 && dr == 0 {
                    continue;
                }
                let nc = col as i64 + dc;
                let nr = row as i64 + dr;
                if nc < 0 || nr < 0 || nc >= spec.nx as i64 || nr >= spec.ny as i64 {
                    continue;
                }
                let nidx = nr as usize * spec.nx + nc as usize;
                if let Some(v) = cells[nidx] {
                    sum += v;
                    count += 1;
                }
            }
        }
        masses[idx] = if count > 0 { sum / count as f64 } else { 0.0 };
    }
    Ok(masses)
}

/// Normalized positional-probability map of the unknown point implied by a
/// single relation model anchored at `known`.
pub fn relation_heatmap(
    model: &GmmModel,
    spec: &GridSpec,
    known: GeoPoint,
) -> Result<ProbabilityGrid> {
    let masses = observation_masses(model, spec, known)?;
    ProbabilityGrid::from_masses(*spec, masses)
}

/// Fuses observations under conditional independence: per cell, the sum of
/// log masses across observations, exponentiated with a max shift and
/// normalized.
pub fn infer_location(observations: &[Observation], spec: &GridSpec) -> Result<ProbabilityGrid> {
    if observations.is_empty() {
        return Err(Error::InvalidArgument(
            "fusion needs at least one observation".to_string(),
        ));
    }
    let mut log_acc = vec![0.0f64; spec.cell_count()];
    for (index, obs) in observations.iter().enumerate() {
        let masses = observation_masses(&obs.relation_model, spec, obs.known)?;
        if masses.iter().all(|&m| m <= 0.0) {
            return Err(Error::InfeasibleFusion { index });
        }
        for (acc, m) in log_acc.iter_mut().zip(&masses) {
            *acc += m.ln();
        }
    }
    let shift = log_acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return Err(Error::DegenerateData(
            "observations leave no feasible cell".to_string(),
        ));
    }
    let masses: Vec<f64> = log_acc.iter().map(|&l| (l - shift).exp()).collect();
    ProbabilityGrid::from_masses(*spec, masses)
}

/// One row of a component-cap sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub max_components: usize,
    pub mean_log_likelihood: f64,
    pub std_log_likelihood: f64,
    /// Symmetric KL against the one-component baseline fit.
    pub mean_kl_vs_baseline: f64,
    pub std_kl_vs_baseline: f64,
}

/// Repeats greedy training under each component cap with derived seeds and
/// summarizes the converged log-likelihood and the symmetric KL divergence
/// between the one-component baseline and each converged model.
pub fn sweep_components(
    data: &[SpatialFeature],
    caps: &[usize],
    repetitions: usize,
    cfg: &GreedyConfig,
    kl_samples: usize,
) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if caps.is_empty() {
        return Err(Error::InvalidArgument(
            "sweep needs at least one component cap".to_string(),
        ));
    }
    if repetitions < 1 {
        return Err(Error::InvalidArgument(
            "sweep needs at least one repetition".to_string(),
        ));
    }
    if kl_samples < 1 {
        return Err(Error::InvalidArgument(
            "sweep needs at least one divergence sample".to_string(),
        ));
    }
    let baseline = fit_one_component(data, cfg.covariance_mode, cfg.em.variance_floor)?;
    let mut rows = Vec::with_capacity(caps.len());
    for (cap_idx, &cap) in caps.iter().enumerate() {
        if cap < 1 {
            return Err(Error::InvalidArgument(
                "component caps must be >= 1".to_string(),
            ));
        }
        let mut lls = Vec::with_capacity(repetitions);
        let mut kls = Vec::with_capacity(repetitions);
        for rep in 0..repetitions {
            let run_seed = derive(cfg.seed, (cap_idx * repetitions + rep) as u64);
            let run_cfg = GreedyConfig {
                max_components: cap,
                seed: run_seed,
                ..cfg.clone()
            };
            let (model, _) = fit_greedy(data, &run_cfg)?;
            lls.push(log_likelihood(&model, data)?);
            kls.push(
                kl_symmetric(&baseline, &model, kl_samples, derive(run_seed, u64::MAX))?.value,
            );
        }
        rows.push(SweepRow {
            max_components: cap,
            mean_log_likelihood: mean(&lls),
            std_log_likelihood: sample_std(&lls),
            mean_kl_vs_baseline: mean(&kls),
            std_kl_vs_baseline: sample_std(&kls),
        });
    }
    Ok(rows)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

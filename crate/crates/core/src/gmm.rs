//! Bivariate Gaussian mixture models and Expectation-Maximization fitting.
//!
//! A trained mixture is the quantified form of one spatial relation: a
//! weighted sum of bivariate Gaussians over the (distance km, orientation
//! degrees) plane. Features enter EM raw; no standardization is applied.
//! Responsibilities are computed in the log domain so distant points do not
//! underflow.

use crate::error::{Error, Result};
use crate::geo::SpatialFeature;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub(crate) const LN_2PI: f64 = 1.8378770664093453;

/// Symmetric 2x2 matrix `[[xx, xy], [xy, yy]]` in km^2 / km*deg / deg^2 units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymMat2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SymMat2 {
    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        SymMat2 { xx, xy, yy }
    }

    pub fn diagonal(xx: f64, yy: f64) -> Self {
        SymMat2 { xx, xy: 0.0, yy }
    }

    pub fn identity() -> Self {
        SymMat2::diagonal(1.0, 1.0)
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn as_rows(&self) -> [[f64; 2]; 2] {
        [[self.xx, self.xy], [self.xy, self.yy]]
    }

    pub fn from_rows(rows: [[f64; 2]; 2]) -> Result<Self> {
        if rows[0][1] != rows[1][0] {
            return Err(Error::InvalidArgument(format!(
                "covariance rows are not symmetric: {rows:?}"
            )));
        }
        Ok(SymMat2::new(rows[0][0], rows[0][1], rows[1][1]))
    }

    /// Eigenvalues ordered (largest, smallest). Always real by symmetry.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let half_trace = 0.5 * (self.xx + self.yy);
        let disc = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        (half_trace + disc, half_trace - disc)
    }

    pub(crate) fn scaled(&self, f: f64) -> Self {
        SymMat2::new(self.xx * f, self.xy * f, self.yy * f)
    }

    /// Lower-triangular Cholesky factor; errors when not positive definite.
    pub(crate) fn cholesky(&self) -> Result<Chol2> {
        let finite = self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite();
        if !finite || self.xx <= 0.0 {
            return Err(Error::SingularCovariance(self.as_rows()));
        }
        let l11 = self.xx.sqrt();
        let l21 = self.xy / l11;
        let rem = self.yy - l21 * l21;
        if rem <= 0.0 || !rem.is_finite() {
            return Err(Error::SingularCovariance(self.as_rows()));
        }
        Ok(Chol2 {
            l11,
            l21,
            l22: rem.sqrt(),
        })
    }

    /// Raises both eigenvalues to at least `floor`. In diagonal matrices this
    /// clamps the diagonal directly; otherwise the eigenvalues are clipped
    /// and the matrix rebuilt around the unchanged eigenvectors.
    pub(crate) fn floored(&self, floor: f64) -> Self {
        if self.xy == 0.0 {
            return SymMat2::diagonal(self.xx.max(floor), self.yy.max(floor));
        }
        let (l1, l2) = self.eigenvalues();
        if l2 >= floor {
            return *self;
        }
        let l1f = l1.max(floor);
        // Eigenvector for l1; xy != 0 here so this is non-degenerate.
        let (ux, uy) = {
            let vx = self.xy;
            let vy = l1 - self.xx;
            let norm = vx.hypot(vy);
            (vx / norm, vy / norm)
        };
        SymMat2::new(
            l1f * ux * ux + floor * uy * uy,
            (l1f - floor) * ux * uy,
            l1f * uy * uy + floor * ux * ux,
        )
    }
}

/// Cholesky factor of a 2x2 covariance; evaluates the Gaussian log-density
/// by triangular solve and maps standard-normal draws through `L`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Chol2 {
    l11: f64,
    l21: f64,
    l22: f64,
}

impl Chol2 {
    pub(crate) fn log_pdf(&self, dx: f64, dy: f64) -> f64 {
        let z1 = dx / self.l11;
        let z2 = (dy - self.l21 * z1) / self.l22;
        -LN_2PI - self.l11.ln() - self.l22.ln() - 0.5 * (z1 * z1 + z2 * z2)
    }

    pub(crate) fn transform(&self, z1: f64, z2: f64) -> (f64, f64) {
        (self.l11 * z1, self.l21 * z1 + self.l22 * z2)
    }
}

/// Whether mixtures keep full covariances or force independence of the
/// distance and orientation variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    Diagonal,
    Full,
}

/// One weighted Gaussian of a mixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: [f64; 2],
    pub cov: SymMat2,
}

/// A Gaussian mixture over the (distance, orientation) plane; the quantified
/// form of one spatial relation.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    components: Vec<GaussianComponent>,
    covariance_mode: CovarianceMode,
    relation_label: String,
}

impl GmmModel {
    /// Validates and assembles a mixture: weights non-negative and summing
    /// to one within 1e-9, covariances positive definite, and exactly zero
    /// off-diagonals in diagonal mode.
    pub fn new(
        components: Vec<GaussianComponent>,
        covariance_mode: CovarianceMode,
        relation_label: impl Into<String>,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument(
                "a mixture needs at least one component".to_string(),
            ));
        }
        let mut weight_sum = 0.0;
        for (i, c) in components.iter().enumerate() {
            if !c.weight.is_finite() || c.weight < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "component {i} weight {} must be finite and >= 0",
                    c.weight
                )));
            }
            if !c.mean[0].is_finite() || !c.mean[1].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "component {i} mean {:?} is not finite",
                    c.mean
                )));
            }
            c.cov.cholesky()?;
            if covariance_mode == CovarianceMode::Diagonal && c.cov.xy != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "component {i} has off-diagonal covariance {} in diagonal mode",
                    c.cov.xy
                )));
            }
            weight_sum += c.weight;
        }
        if (weight_sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "mixture weights sum to {weight_sum}, expected 1 within 1e-9"
            )));
        }
        Ok(GmmModel {
            components,
            covariance_mode,
            relation_label: relation_label.into(),
        })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn covariance_mode(&self) -> CovarianceMode {
        self.covariance_mode
    }

    pub fn relation_label(&self) -> &str {
        &self.relation_label
    }

    pub fn with_relation_label(mut self, label: impl Into<String>) -> Self {
        self.relation_label = label.into();
        self
    }

    /// Mixture density at a raw point of the feature plane.
    pub fn pdf(&self, x: [f64; 2]) -> f64 {
        self.log_pdf(x).exp()
    }

    /// Log of the mixture density, accumulated with log-sum-exp.
    pub fn log_pdf(&self, x: [f64; 2]) -> f64 {
        let eval = ModelEval::new(self).expect("validated model has PD covariances");
        eval.log_pdf(x)
    }

    /// Ancestral draw: component by weight, then a Gaussian sample.
    pub fn draw(&self, rng: &mut impl Rng) -> [f64; 2] {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut idx = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                idx = i;
                break;
            }
        }
        let c = &self.components[idx];
        let chol = c
            .cov
            .cholesky()
            .expect("validated model has PD covariances");
        let z1: f64 = rng.sample(rand_distr::StandardNormal);
        let z2: f64 = rng.sample(rand_distr::StandardNormal);
        let (dx, dy) = chol.transform(z1, z2);
        [c.mean[0] + dx, c.mean[1] + dy]
    }
}

/// Bivariate Gaussian density
/// `(2 pi)^-1 det(cov)^-1/2 exp(-1/2 (x - mean)^T cov^-1 (x - mean))`.
pub fn gaussian_pdf(x: [f64; 2], mean: [f64; 2], cov: &SymMat2) -> Result<f64> {
    Ok(gaussian_log_pdf(x, mean, cov)?.exp())
}

pub fn gaussian_log_pdf(x: [f64; 2], mean: [f64; 2], cov: &SymMat2) -> Result<f64> {
    Ok(cov.cholesky()?.log_pdf(x[0] - mean[0], x[1] - mean[1]))
}

/// EM stopping and regularization parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Relative log-likelihood improvement below which iteration stops.
    pub ll_tolerance: f64,
    /// Minimum covariance eigenvalue; guards against collapse onto points.
    pub variance_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iterations: 500,
            ll_tolerance: 1e-6,
            variance_floor: 1e-6,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidArgument(
                "max_iterations must be >= 1".to_string(),
            ));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.ll_tolerance) || !positive(self.variance_floor) {
            return Err(Error::InvalidArgument(format!(
                "ll_tolerance ({}) and variance_floor ({}) must be > 0",
                self.ll_tolerance, self.variance_floor
            )));
        }
        Ok(())
    }
}

/// Sum over data points of the natural-log mixture density.
pub fn log_likelihood(model: &GmmModel, data: &[SpatialFeature]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument(
            "log-likelihood of empty data is undefined".to_string(),
        ));
    }
    let eval = ModelEval::new(model)?;
    let mut total = 0.0;
    for (index, s) in data.iter().enumerate() {
        let lp = eval.log_pdf(s.vec());
        if lp == f64::NEG_INFINITY {
            return Err(Error::ZeroDensity { index });
        }
        total += lp;
    }
    Ok(total)
}

/// Precomputed per-component state for repeated density evaluation.
pub(crate) struct ModelEval {
    comps: Vec<(f64, [f64; 2], Chol2)>, // (ln weight, mean, factor)
}

impl ModelEval {
    pub(crate) fn new(model: &GmmModel) -> Result<Self> {
        let comps = model
            .components
            .iter()
            .map(|c| Ok((c.weight.ln(), c.mean, c.cov.cholesky()?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelEval { comps })
    }

    pub(crate) fn log_pdf(&self, x: [f64; 2]) -> f64 {
        let term = |(ln_w, mean, chol): &(f64, [f64; 2], Chol2)| {
            ln_w + chol.log_pdf(x[0] - mean[0], x[1] - mean[1])
        };
        let max = self
            .comps
            .iter()
            .map(term)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let sum: f64 = self.comps.iter().map(|c| (term(c) - max).exp()).sum();
        max + sum.ln()
    }
}

/// E-step output: flattened responsibilities, per-point log densities, and
/// the dataset log-likelihood under the evaluated model.
pub(crate) struct EStep {
    /// `resp[j * m + i]` is the posterior of component `i` for point `j`.
    pub resp: Vec<f64>,
    pub point_log_densities: Vec<f64>,
    pub log_likelihood: f64,
}

pub(crate) fn e_step(model: &GmmModel, points: &[[f64; 2]]) -> Result<EStep> {
    let eval = ModelEval::new(model)?;
    let m = eval.comps.len();
    let mut resp = vec![0.0; points.len() * m];
    let mut point_log_densities = Vec::with_capacity(points.len());
    let mut log_likelihood = 0.0;
    let mut terms = vec![0.0f64; m];
    for (j, x) in points.iter().enumerate() {
        let mut max = f64::NEG_INFINITY;
        for (t, (ln_w, mean, chol)) in terms.iter_mut().zip(&eval.comps) {
            *t = ln_w + chol.log_pdf(x[0] - mean[0], x[1] - mean[1]);
            if *t > max {
                max = *t;
            }
        }
        if max == f64::NEG_INFINITY {
            return Err(Error::ZeroDensity { index: j });
        }
        let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
        let lse = max + sum.ln();
        for (i, t) in terms.iter().enumerate() {
            resp[j * m + i] = (t - lse).exp();
        }
        point_log_densities.push(lse);
        log_likelihood += lse;
    }
    Ok(EStep {
        resp,
        point_log_densities,
        log_likelihood,
    })
}

/// M-step: re-estimates weights, means, and covariances from
/// responsibilities, then applies the covariance mode and variance floor.
fn m_step(
    points: &[[f64; 2]],
    resp: &[f64],
    m: usize,
    mode: CovarianceMode,
    variance_floor: f64,
) -> Result<Vec<GaussianComponent>> {
    let n = points.len();
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut mass = 0.0;
        let mut sx = 0.0;
        let mut sy = 0.0;
        for (j, x) in points.iter().enumerate() {
            let r = resp[j * m + i];
            mass += r;
            sx += r * x[0];
            sy += r * x[1];
        }
        if mass < 1e-12 {
            return Err(Error::CollapsedComponent { index: i, mass });
        }
        let mean = [sx / mass, sy / mass];
        let mut cxx = 0.0;
        let mut cxy = 0.0;
        let mut cyy = 0.0;
        for (j, x) in points.iter().enumerate() {
            let r = resp[j * m + i];
            let dx = x[0] - mean[0];
            let dy = x[1] - mean[1];
            cxx += r * dx * dx;
            cxy += r * dx * dy;
            cyy += r * dy * dy;
        }
        let mut cov = SymMat2::new(cxx / mass, cxy / mass, cyy / mass);
        if mode == CovarianceMode::Diagonal {
            cov.xy = 0.0;
        }
        out.push(GaussianComponent {
            weight: mass / n as f64,
            mean,
            cov: cov.floored(variance_floor),
        });
    }
    Ok(out)
}

/// Fits `model` to `data` by EM. Returns the converged model and the
/// log-likelihood trace: entry 0 is the initial model's log-likelihood and
/// each following entry follows one full EM iteration. The trace is
/// non-decreasing up to floating-point slack; iteration stops when the
/// relative improvement drops below `cfg.ll_tolerance` or at
/// `cfg.max_iterations`.
pub fn em_fit(
    model: &GmmModel,
    data: &[SpatialFeature],
    cfg: &EmConfig,
) -> Result<(GmmModel, Vec<f64>)> {
    cfg.validate()?;
    if data.len() < model.components.len() {
        return Err(Error::InsufficientData {
            needed: model.components.len(),
            got: data.len(),
        });
    }
    let points: Vec<[f64; 2]> = data.iter().map(|s| s.vec()).collect();
    let m = model.components.len();
    let mode = model.covariance_mode;
    let mut current = model.clone();
    let mut trace = Vec::with_capacity(cfg.max_iterations + 1);
    for iter in 0..=cfg.max_iterations {
        let es = e_step(&current, &points)?;
        trace.push(es.log_likelihood);
        if iter == cfg.max_iterations {
            break;
        }
        if iter > 0 {
            let prev = trace[trace.len() - 2];
            let cur = es.log_likelihood;
            if (cur - prev).abs() <= cfg.ll_tolerance * prev.abs().max(1.0) {
                break;
            }
        }
        let comps = m_step(&points, &es.resp, m, mode, cfg.variance_floor)?;
        current = GmmModel::new(comps, mode, current.relation_label)?;
    }
    Ok((current, trace))
}

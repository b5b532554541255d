//! Bivariate Gaussian kernel density estimation over spatial features.
//!
//! Relations are reported only a handful of times each, which is too little
//! to train a mixture model directly. A KDE fitted on the observed features
//! with a diagonal rule-of-thumb bandwidth supplies semi-synthetic training
//! samples: pick one of the observed points uniformly and add kernel noise.
//! Generated data is intended for training only, never for evaluation.

use crate::error::{Error, Result};
use crate::geo::SpatialFeature;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A fitted kernel density estimate: the sample set plus one kernel standard
/// deviation per dimension (the diagonal of the bandwidth matrix).
#[derive(Debug, Clone)]
pub struct KdeModel {
    samples: Vec<SpatialFeature>,
    bandwidth: (f64, f64),
}

/// Rule-of-thumb bandwidth for a bivariate Gaussian kernel:
/// `h_b = sigma_b * (4 / ((d + 2) n))^(1 / (d + 4))` with `d = 2`,
/// where `sigma_b` is the per-dimension sample standard deviation
/// (`n - 1` denominator).
pub fn rule_of_thumb_bandwidth(samples: &[SpatialFeature]) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let factor = (1.0 / n as f64).powf(1.0 / 6.0);
    let h1 = sample_std(samples.iter().map(|s| s.distance()), n, "distance")? * factor;
    let h2 = sample_std(samples.iter().map(|s| s.orientation()), n, "orientation")? * factor;
    Ok((h1, h2))
}

fn sample_std(values: impl Iterator<Item = f64> + Clone, n: usize, dim: &str) -> Result<f64> {
    let mean = values.clone().sum::<f64>() / n as f64;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    let std = (ss / (n - 1) as f64).sqrt();
    if std <= 0.0 {
        return Err(Error::DegenerateData(format!(
            "zero variance in the {dim} dimension; all {n} samples are identical there"
        )));
    }
    Ok(std)
}

impl KdeModel {
    /// Fits a model with the rule-of-thumb bandwidth.
    pub fn from_samples(samples: Vec<SpatialFeature>) -> Result<Self> {
        let bandwidth = rule_of_thumb_bandwidth(&samples)?;
        Ok(KdeModel { samples, bandwidth })
    }

    /// Builds a model with an explicit bandwidth, e.g. a configured floor
    /// when one dimension of the data is degenerate.
    pub fn with_bandwidth(samples: Vec<SpatialFeature>, h1: f64, h2: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: samples.len(),
            });
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(h1) || !positive(h2) {
            return Err(Error::InvalidArgument(format!(
                "bandwidth entries must be positive and finite, got ({h1}, {h2})"
            )));
        }
        Ok(KdeModel {
            samples,
            bandwidth: (h1, h2),
        })
    }

    pub fn samples(&self) -> &[SpatialFeature] {
        &self.samples
    }

    /// (h1, h2): kernel standard deviations in km and degrees.
    pub fn bandwidth(&self) -> (f64, f64) {
        self.bandwidth
    }

    /// Density at a raw point of the (distance, orientation) plane:
    /// `(1/n) sum_i K_H(x - X_i)` with a Gaussian kernel of covariance
    /// `diag(h1^2, h2^2)`. Evaluation is not restricted to the valid
    /// feature domain so the estimate can be integrated over kernel tails.
    pub fn density(&self, x: [f64; 2]) -> f64 {
        let (h1, h2) = self.bandwidth;
        let norm = 1.0 / (2.0 * std::f64::consts::PI * h1 * h2);
        let sum: f64 = self
            .samples
            .iter()
            .map(|s| {
                let z1 = (x[0] - s.distance()) / h1;
                let z2 = (x[1] - s.orientation()) / h2;
                norm * (-0.5 * (z1 * z1 + z2 * z2)).exp()
            })
            .sum();
        sum / self.samples.len() as f64
    }

    /// Draws `count` semi-synthetic features: a uniformly chosen sample plus
    /// kernel noise, with the distance clamped to `>= 0` and the orientation
    /// wrapped into `[0, 360)`. Deterministic for a fixed seed.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<SpatialFeature>> {
        if count == 0 {
            return Err(Error::InvalidArgument(
                "sample count must be >= 1".to_string(),
            ));
        }
        let (h1, h2) = self.bandwidth;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let base = &self.samples[rng.random_range(0..self.samples.len())];
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let distance = (base.distance() + h1 * z1).max(0.0);
            let mut orientation = (base.orientation() + h2 * z2).rem_euclid(360.0);
            if orientation >= 360.0 {
                orientation = 0.0;
            }
            out.push(SpatialFeature::new(distance, orientation)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn feats(pairs: &[(f64, f64)]) -> Vec<SpatialFeature> {
        pairs
            .iter()
            .map(|&(d, o)| SpatialFeature::new(d, o).unwrap())
            .collect()
    }

    /// 100 points with per-dimension sample standard deviation exactly
    /// `scale` (up to rounding): alternating `center +- scale * sqrt(99/100)`.
    fn unit_std_samples(scale: f64) -> Vec<SpatialFeature> {
        let a = scale * (99.0f64 / 100.0).sqrt();
        (0..100)
            .map(|i| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                SpatialFeature::new(50.0 + sign * a, 180.0 + sign * a).unwrap()
            })
            .collect()
    }

    #[test]
    fn bandwidth_matches_closed_form() {
        let (h1, h2) = rule_of_thumb_bandwidth(&unit_std_samples(1.0)).unwrap();
        // sigma = 1, n = 100 -> (1/100)^(1/6)
        assert_relative_eq!(h1, 0.4641588833612779, epsilon = 1e-12);
        assert_relative_eq!(h2, 0.4641588833612779, epsilon = 1e-12);
    }

    #[test]
    fn bandwidth_is_linear_in_sigma() {
        let (h1, _) = rule_of_thumb_bandwidth(&unit_std_samples(2.0)).unwrap();
        assert_relative_eq!(h1, 0.9283177667225558, epsilon = 1e-12);
    }

    #[test]
    fn bandwidth_rejects_identical_samples() {
        let samples = feats(&[(3.0, 90.0), (3.0, 90.0), (3.0, 90.0)]);
        assert!(matches!(
            rule_of_thumb_bandwidth(&samples),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn density_peak_of_unit_kernel() {
        // Two coincident samples behave like a single kernel.
        let model = KdeModel::with_bandwidth(feats(&[(0.0, 0.0), (0.0, 0.0)]), 1.0, 1.0).unwrap();
        assert_relative_eq!(
            model.density([0.0, 0.0]),
            0.15915494309189535,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            model.density([1.0, 0.0]),
            0.09653235263005391,
            epsilon = 1e-15
        );
    }

    #[test]
    fn density_is_mixture_average() {
        let model =
            KdeModel::with_bandwidth(feats(&[(2.0, 40.0), (6.0, 300.0)]), 0.7, 9.0).unwrap();
        let single_a =
            KdeModel::with_bandwidth(feats(&[(2.0, 40.0), (2.0, 40.0)]), 0.7, 9.0).unwrap();
        let single_b =
            KdeModel::with_bandwidth(feats(&[(6.0, 300.0), (6.0, 300.0)]), 0.7, 9.0).unwrap();
        let x = [3.3, 120.0];
        assert_relative_eq!(
            model.density(x),
            0.5 * (single_a.density(x) + single_b.density(x)),
            max_relative = 1e-12
        );
    }

    #[test]
    fn sampling_is_deterministic_and_rejects_zero_count() {
        let model =
            KdeModel::from_samples(feats(&[(2.0, 50.0), (4.0, 80.0), (9.0, 120.0)])).unwrap();
        assert!(matches!(model.sample(0, 1), Err(Error::InvalidArgument(_))));
        let a = model.sample(64, 7).unwrap();
        let b = model.sample(64, 7).unwrap();
        assert_eq!(a, b);
        let c = model.sample(64, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sampled_features_stay_in_domain() {
        // Bandwidth large enough that clamping and wrapping both trigger.
        let model =
            KdeModel::with_bandwidth(feats(&[(0.5, 10.0), (1.0, 350.0)]), 5.0, 90.0).unwrap();
        for s in model.sample(2000, 3).unwrap() {
            assert!(s.distance() >= 0.0);
            assert!((0.0..360.0).contains(&s.orientation()));
        }
    }

    #[test]
    fn sample_mean_matches_mixture_moments() {
        let pts = feats(&[(5.0, 60.0), (9.0, 200.0), (13.0, 340.0)]);
        let model = KdeModel::with_bandwidth(pts.clone(), 0.5, 4.0).unwrap();
        let n = 50_000usize;
        let draws = model.sample(n, 11).unwrap();

        // Mixture mean is the sample-point mean; mixture variance adds the
        // kernel variance. Boundaries are far away, so clamping is inert.
        let mean_d_true = pts.iter().map(|p| p.distance()).sum::<f64>() / 3.0;
        let var_d_true = pts
            .iter()
            .map(|p| (p.distance() - mean_d_true).powi(2))
            .sum::<f64>()
            / 3.0
            + 0.5 * 0.5;
        let mean_d = draws.iter().map(|p| p.distance()).sum::<f64>() / n as f64;
        let se = (var_d_true / n as f64).sqrt();
        assert!(
            (mean_d - mean_d_true).abs() <= 3.0 * se,
            "empirical mean {mean_d} vs {mean_d_true} (se {se})"
        );
    }
}

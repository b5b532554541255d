//! Geographic coordinates, local Cartesian projection, and spatial feature
//! extraction.
//!
//! A spatial relation instance between a known and an unknown point of
//! interest is quantified as a feature pair: Euclidean distance in km and
//! the counterclockwise angle in degrees from the +x (east) axis at the
//! known point.

use crate::error::{Error, Result};

/// Kilometres per degree of latitude (and of longitude at the equator).
pub const KM_PER_DEGREE: f64 = 111.32;

/// Pairs closer than this (in km) have no defined orientation.
pub const COINCIDENT_DISTANCE_KM: f64 = 1e-12;

/// A WGS84-style geographic coordinate in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self> {
        let p = GeoPoint { lon, lat };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lon.is_finite() || !self.lat.is_finite() {
            return Err(Error::InvalidCoordinate(format!(
                "non-finite lon/lat ({}, {})",
                self.lon, self.lat
            )));
        }
        if !(-180.0..=180.0).contains(&self.lon) || !(-90.0..=90.0).contains(&self.lat) {
            return Err(Error::InvalidCoordinate(format!(
                "({}, {}) outside lon [-180, 180] x lat [-90, 90]",
                self.lon, self.lat
            )));
        }
        Ok(())
    }
}

/// A point in the local Cartesian frame, in km east/north of the reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianPoint {
    pub x: f64,
    pub y: f64,
}

impl CartesianPoint {
    pub fn new(x: f64, y: f64) -> Self {
        CartesianPoint { x, y }
    }
}

/// Distance (km) and orientation (degrees in `[0, 360)`) between two points.
///
/// Orientation is kept in degrees and treated as an ordinary linear random
/// variable throughout the crate; the 0/360 discontinuity is deliberately
/// not modeled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialFeature {
    distance: f64,
    orientation: f64,
}

impl SpatialFeature {
    pub fn new(distance: f64, orientation: f64) -> Result<Self> {
        if !distance.is_finite() || distance < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "feature distance must be finite and >= 0, got {distance}"
            )));
        }
        if !orientation.is_finite() || !(0.0..360.0).contains(&orientation) {
            return Err(Error::InvalidArgument(format!(
                "feature orientation must lie in [0, 360), got {orientation}"
            )));
        }
        Ok(SpatialFeature {
            distance,
            orientation,
        })
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    /// The feature as a raw point of the (distance, orientation) plane.
    pub fn vec(&self) -> [f64; 2] {
        [self.distance, self.orientation]
    }
}

/// How longitudes are converted to km.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionMode {
    /// Equirectangular with a `cos(ref_lat)` meridian-convergence factor.
    EquirectangularCorrected,
    /// Plain degrees-to-km in both axes, no meridian correction.
    RawDegrees,
}

/// Configuration for the local projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    /// Latitude whose cosine corrects longitude spans (corrected mode only).
    pub ref_lat: f64,
    pub mode: ProjectionMode,
}

impl ProjectionConfig {
    pub fn corrected(ref_lat: f64) -> Result<Self> {
        let cfg = ProjectionConfig {
            ref_lat,
            mode: ProjectionMode::EquirectangularCorrected,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn raw_degrees() -> Self {
        ProjectionConfig {
            ref_lat: 0.0,
            mode: ProjectionMode::RawDegrees,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == ProjectionMode::EquirectangularCorrected
            && (!self.ref_lat.is_finite() || !(-89.0..=89.0).contains(&self.ref_lat))
        {
            return Err(Error::InvalidCoordinate(format!(
                "ref_lat {} outside [-89, 89]",
                self.ref_lat
            )));
        }
        Ok(())
    }

    /// Km spanned by one degree of longitude under this configuration.
    pub fn km_per_lon_degree(&self) -> f64 {
        match self.mode {
            ProjectionMode::EquirectangularCorrected => {
                KM_PER_DEGREE * self.ref_lat.to_radians().cos()
            }
            ProjectionMode::RawDegrees => KM_PER_DEGREE,
        }
    }
}

/// Projects `p` into the local Cartesian km frame anchored at `origin`.
///
/// The map is affine in (lon, lat) for a fixed origin and configuration.
pub fn project(p: GeoPoint, origin: GeoPoint, cfg: &ProjectionConfig) -> Result<CartesianPoint> {
    p.validate()?;
    origin.validate()?;
    cfg.validate()?;
    Ok(CartesianPoint {
        x: (p.lon - origin.lon) * cfg.km_per_lon_degree(),
        y: (p.lat - origin.lat) * KM_PER_DEGREE,
    })
}

/// Distance/orientation of `unknown` as seen from `known`.
///
/// Coincident points are rejected rather than given an arbitrary
/// orientation, which would silently bias training.
pub fn extract_feature(known: CartesianPoint, unknown: CartesianPoint) -> Result<SpatialFeature> {
    let dx = unknown.x - known.x;
    let dy = unknown.y - known.y;
    let distance = dx.hypot(dy);
    if !distance.is_finite() {
        return Err(Error::InvalidCoordinate(format!(
            "non-finite separation between ({}, {}) and ({}, {})",
            known.x, known.y, unknown.x, unknown.y
        )));
    }
    if distance < COINCIDENT_DISTANCE_KM {
        return Err(Error::DegeneratePair { distance });
    }
    let mut orientation = dy.atan2(dx).to_degrees();
    if orientation < 0.0 {
        orientation += 360.0;
    }
    if orientation >= 360.0 {
        orientation = 0.0;
    }
    SpatialFeature::new(distance, orientation)
}

/// Inverse of [`extract_feature`]: the point at `f` from `known`.
pub fn feature_to_point(known: CartesianPoint, f: &SpatialFeature) -> CartesianPoint {
    let theta = f.orientation.to_radians();
    CartesianPoint {
        x: known.x + f.distance * theta.cos(),
        y: known.y + f.distance * theta.sin(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg_corrected(ref_lat: f64) -> ProjectionConfig {
        ProjectionConfig::corrected(ref_lat).unwrap()
    }

    #[test]
    fn project_identity_at_origin() {
        let origin = GeoPoint::new(12.5, 47.25).unwrap();
        let got = project(origin, origin, &cfg_corrected(47.25)).unwrap();
        assert_eq!(got, CartesianPoint::new(0.0, 0.0));
    }

    #[test]
    fn project_one_degree_latitude() {
        let origin = GeoPoint::new(0.0, 0.0).unwrap();
        let p = GeoPoint::new(0.0, 1.0).unwrap();
        let got = project(p, origin, &cfg_corrected(0.0)).unwrap();
        assert_relative_eq!(got.x, 0.0);
        assert_relative_eq!(got.y, 111.32);
    }

    #[test]
    fn project_raw_degrees_two_degree_longitude_box() {
        let origin = GeoPoint::new(-1.0, 51.0).unwrap();
        let p = GeoPoint::new(1.0, 51.0).unwrap();
        let got = project(p, origin, &ProjectionConfig::raw_degrees()).unwrap();
        assert_relative_eq!(got.x, 222.64);
        assert_relative_eq!(got.y, 0.0);
        // 50 cells across the box come out at ~4.45 km each.
        assert_relative_eq!(got.x / 50.0, 4.4528);
    }

    #[test]
    fn project_rejects_non_finite() {
        let origin = GeoPoint { lon: 0.0, lat: 0.0 };
        let bad = GeoPoint {
            lon: f64::NAN,
            lat: 0.0,
        };
        assert!(matches!(
            project(bad, origin, &ProjectionConfig::raw_degrees()),
            Err(Error::InvalidCoordinate(_))
        ));
    }

    #[test]
    fn projection_config_rejects_polar_ref_lat() {
        assert!(ProjectionConfig::corrected(89.5).is_err());
        assert!(ProjectionConfig::corrected(-90.0).is_err());
    }

    #[test]
    fn extract_feature_three_four_five() {
        let f =
            extract_feature(CartesianPoint::new(0.0, 0.0), CartesianPoint::new(3.0, 4.0)).unwrap();
        assert_relative_eq!(f.distance(), 5.0);
        assert_relative_eq!(f.orientation(), 53.13010235415598, max_relative = 1e-12);
    }

    #[test]
    fn extract_feature_axis_aligned() {
        let west = extract_feature(
            CartesianPoint::new(0.0, 0.0),
            CartesianPoint::new(-1.0, 0.0),
        )
        .unwrap();
        assert_relative_eq!(west.distance(), 1.0);
        assert_relative_eq!(west.orientation(), 180.0);

        let south = extract_feature(
            CartesianPoint::new(0.0, 0.0),
            CartesianPoint::new(0.0, -2.0),
        )
        .unwrap();
        assert_relative_eq!(south.distance(), 2.0);
        assert_relative_eq!(south.orientation(), 270.0);
    }

    #[test]
    fn extract_feature_rejects_coincident_points() {
        let p = CartesianPoint::new(1.0, 1.0);
        assert!(matches!(
            extract_feature(p, p),
            Err(Error::DegeneratePair { .. })
        ));
    }

    #[test]
    fn feature_to_point_inverts_known_cases() {
        let f = SpatialFeature::new(5.0, 53.13010235415598).unwrap();
        let got = feature_to_point(CartesianPoint::new(0.0, 0.0), &f);
        assert_relative_eq!(got.x, 3.0, max_relative = 1e-12);
        assert_relative_eq!(got.y, 4.0, max_relative = 1e-12);

        let f = SpatialFeature::new(2.0, 90.0).unwrap();
        let got = feature_to_point(CartesianPoint::new(1.0, 1.0), &f);
        assert_relative_eq!(got.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(got.y, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn spatial_feature_rejects_out_of_range() {
        assert!(SpatialFeature::new(-0.1, 0.0).is_err());
        assert!(SpatialFeature::new(1.0, 360.0).is_err());
        assert!(SpatialFeature::new(1.0, -1e-9).is_err());
        assert!(SpatialFeature::new(f64::NAN, 0.0).is_err());
    }
}
